import hashlib
import io
import json
import os
import platform
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy

from biasing import __version__
from biasing.lexicon import LexiconEntry, Lexicon, PhonemeInventory, save_lexicon
from biasing.metrics import build_biasing_list
from biasing.simdecoder import Scenario, save_scenarios
from biasing.tokenizer import build_vocab, save_vocab, tokenize_word

# letter -> phonemes of the synthetic demo language
DEMO_PHONEMES = {
  'A': ('AA',), 'B': ('B',), 'D': ('D',), 'E': ('EH',), 'G': ('G',), 'I': ('IH',),
  'K': ('K',), 'L': ('L',), 'M': ('M',), 'N': ('N',), 'O': ('OW',), 'P': ('P',),
  'R': ('R',), 'S': ('S',), 'T': ('T',), 'U': ('UW',), 'X': ('K', 'S'),
}
CONSONANTS = 'BDGKLMNPRSTX'
VOWELS = 'AEIOU'
# never spelled by a word, so the pointer can never propose them
CONFUSER_LETTERS = 'JQVZ'


@dataclass(eq=False)
class DemoData:
  inventory: PhonemeInventory
  lexicon: Lexicon
  vocab: object
  common_words: Tuple[str, ...]
  rare_pool: Tuple[str, ...]
  scenarios: Tuple[Scenario, ...]
  confusion: Dict[int, Tuple[int, ...]]
  seed: int


def _make_word(rng, length):
  start_vowel = rng.random() < 0.3
  letters = []
  for i in range(length):
    pool = VOWELS if (i % 2 == 0) == start_vowel else CONSONANTS
    letters.append(pool[rng.integers(len(pool))])
  return ''.join(letters)


def _make_words(rng, count, min_len, max_len, taken):
  words = []
  while len(words) < count:
    w = _make_word(rng, int(rng.integers(min_len, max_len + 1)))
    if w not in taken:
      taken.add(w)
      words.append(w)
  return words


def _top_bigrams(words, n):
  counts = {}
  for w in words:
    for i in range(len(w) - 1):
      counts[w[i:i + 2]] = counts.get(w[i:i + 2], 0) + 1
  return [b for b, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]]


def get_demo_data(seed=0, num_common=30, num_rare=60, num_utterances=20,
                  n_distractors=20, noise=0.6):
  """
  Build the seeded synthetic world the demo runs on: a letter-to-phoneme
  language, its lexicon and vocabulary, and utterances of common words with
  one or two rare words each, every utterance with its own biasing list.

  Rare-word pieces are confused with pieces no word uses, so an unbiased
  decoder misspells every rare word while common words decode correctly.

  Returns a DemoData.
  """
  rng = np.random.default_rng(seed)
  taken = set()
  common = _make_words(rng, num_common, 2, 4, taken)
  rare = _make_words(rng, num_rare, 5, 7, taken)

  symbols = sorted(set(p for ps in DEMO_PHONEMES.values() for p in ps))
  inv = PhonemeInventory(symbols)
  lexicon = Lexicon()
  for w in common + rare:
    lexicon[w] = LexiconEntry.create(w, [inv.id(p) for c in w for p in DEMO_PHONEMES[c]])

  extra = []
  for b in _top_bigrams(common + rare, 6):
    extra += [b, b + '_']
  for c in CONFUSER_LETTERS:
    extra += [c, c + '_']
  vocab = build_vocab(common + rare, extra)

  confusion = {}
  for w in rare:
    for p in tokenize_word(vocab, w).piece_ids:
      letter = CONFUSER_LETTERS[p % len(CONFUSER_LETTERS)]
      confuser = letter + vocab.boundary_marker if vocab.is_final(p) else letter
      confusion[p] = (vocab.id(confuser),)

  in_use = rare[:num_rare // 2]
  scenarios = []
  for i in range(num_utterances):
    picked = [common[j] for j in rng.choice(len(common), 3, replace=False)]
    picked += [in_use[j] for j in rng.choice(len(in_use), 1 + i % 2, replace=False)]
    words = tuple(picked[j] for j in rng.permutation(len(picked)))
    utt_seed = seed * 1000 + i
    selection = build_biasing_list(words, common, len(common), rare, n_distractors,
                                   seed=utt_seed)
    scenarios.append(Scenario(
      name='utt%02d' % i, words=words, biasing_words=selection.words, noise=noise,
      seed=utt_seed, confused_words=selection.rare,
      pieces=tuple(tokenize_word(vocab, w).piece_ids for w in words)))

  return DemoData(inventory=inv, lexicon=lexicon, vocab=vocab, common_words=tuple(common),
                  rare_pool=tuple(rare), scenarios=tuple(scenarios), confusion=confusion,
                  seed=seed)


def save_confusion(confusion, vocab, path):
  obj = {vocab.id_to_piece[p]: [vocab.id_to_piece[c] for c in cs]
         for p, cs in sorted(confusion.items())}
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(obj, f, indent=1, sort_keys=True, ensure_ascii=False)


def load_confusion(path, vocab):
  with io.open(path, 'r', encoding='utf-8') as f:
    obj = json.load(f)
  return {vocab.id(p): tuple(vocab.id(c) for c in cs) for p, cs in obj.items()}


def _write_lines(lines, path):
  with io.open(path, 'w', encoding='utf-8', newline='\n') as f:
    for line in lines:
      f.write(line + '\n')


def write_demo_data(data, directory):
  """
  Write the demo world as the files the command-line stages read.

  Returns a dict name -> path.
  """
  if not os.path.isdir(directory):
    os.makedirs(directory)
  paths = {name: os.path.join(directory, fname) for name, fname in [
    ('inventory', 'inventory.txt'), ('lexicon', 'lexicon.tsv'), ('vocab', 'vocab.txt'),
    ('common_words', 'common.txt'), ('rare_words', 'rare.txt'),
    ('scenarios', 'scenarios.json'), ('confusion', 'confusion.json')]}
  _write_lines(data.inventory.symbols[1:], paths['inventory'])
  save_lexicon(data.lexicon, data.inventory, paths['lexicon'])
  save_vocab(data.vocab, paths['vocab'])
  _write_lines(data.common_words, paths['common_words'])
  _write_lines(data.rare_pool, paths['rare_words'])
  save_scenarios(data.scenarios, paths['scenarios'])
  save_confusion(data.confusion, data.vocab, paths['confusion'])
  return paths


def save_params(params, path, meta=None):
  """
  Write params as a little-endian float64 blob at ``path`` and a JSON
  manifest at ``path + '.json'`` listing names and shapes in blob order.
  """
  names = sorted(params)
  with io.open(path, 'wb') as f:
    for name in names:
      f.write(np.ascontiguousarray(params[name], dtype='<f8').tobytes())
  manifest = {'meta': meta or {},
              'arrays': [{'name': n, 'shape': list(np.shape(params[n]))} for n in names]}
  with io.open(path + '.json', 'w', encoding='utf-8') as f:
    json.dump(manifest, f, indent=1, sort_keys=True)


def load_params(path):
  """
  Returns a tuple of:
  - params: dict name -> float64 array
  - meta: the manifest's meta dict
  """
  with io.open(path + '.json', 'r', encoding='utf-8') as f:
    manifest = json.load(f)
  blob = np.fromfile(path, dtype='<f8')
  params, offset = {}, 0
  for a in manifest['arrays']:
    size = int(np.prod(a['shape'])) if a['shape'] else 1
    params[a['name']] = blob[offset:offset + size].reshape(a['shape']).astype(np.float64)
    offset += size
  if offset != blob.size:
    raise ValueError('%s holds %d values, manifest lists %d' % (path, blob.size, offset))
  return params, manifest['meta']


def sha256(path):
  h = hashlib.sha256()
  with io.open(path, 'rb') as f:
    for chunk in iter(lambda: f.read(1 << 16), b''):
      h.update(chunk)
  return h.hexdigest()


def write_manifest(output, stage, inputs=(), outputs=(), config=None, seed=None):
  """
  Write ``output + '.manifest.json'`` recording the stage, the sha256 of
  every existing input and output file, seed, config and library versions.
  Holds no timestamps, so identical runs give identical manifests.
  """
  obj = {
    'stage': stage,
    'seed': seed,
    'config': config or {},
    'inputs': {os.path.basename(p): sha256(p) for p in inputs if p and os.path.isfile(p)},
    'outputs': {os.path.basename(p): sha256(p) for p in outputs if p and os.path.isfile(p)},
    'versions': {'biasing': __version__, 'numpy': np.__version__,
                 'scipy': scipy.__version__, 'python': platform.python_version()},
  }
  path = output + '.manifest.json'
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(obj, f, indent=1, sort_keys=True)
  return path
