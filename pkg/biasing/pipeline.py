"""
Stages of a biasing run, callable in-process. The command-line interface
wraps each of these with file validation and a manifest.
"""
import io
import logging
import os
from dataclasses import dataclass
from typing import List

import numpy as np

from biasing.biastrie import build_tree, load_tree, save_tree
from biasing.classifiers.tcpgen_net import TcpgenNet, TrainingExample
from biasing.data_utils import (get_demo_data, load_confusion, load_params, save_params,
                                write_demo_data, write_manifest)
from biasing.encoder import (GRAPHEME, phoneme_features, phoneme_table, word_alignments,
                             word_phoneme_embeds)
from biasing.g2p_align import (align_lexicon, load_alignments, load_model,
                               load_soft_alignments, save_alignments, save_model,
                               train_em_aligner)
from biasing.gradient_check import check_model_gradients
from biasing.lexicon import load_inventory, load_lexicon
from biasing.metrics import CorpusScore, format_rate, score_corpus, write_report
from biasing.simdecoder import (AcousticWorld, DecodeConfig, decode, load_scenarios,
                                make_reference, make_training_examples, synthesize_utterance,
                                toy_train)
from biasing.tokenizer import (Segmentation, load_pretokenized, load_vocab, pieces_to_words,
                               segmentation_from_pieces, tokenize_words)

logger = logging.getLogger(__name__)


def load_world(config):
  """Returns a tuple of (inventory, lexicon, vocab); vocab is None without a file."""
  inv = load_inventory(config.inventory)
  lexicon = load_lexicon(config.lexicon, inv, uppercase=config.uppercase)
  vocab = load_vocab(config.vocab) if config.vocab else None
  return inv, lexicon, vocab


def read_words(path):
  with io.open(path, 'r', encoding='utf-8') as f:
    return [w.strip() for w in f if w.strip()]


def read_sentences(path):
  with io.open(path, 'r', encoding='utf-8') as f:
    return [line.split() for line in f.read().splitlines()]


def write_sentences(sentences, path):
  with io.open(path, 'w', encoding='utf-8', newline='\n') as f:
    for words in sentences:
      f.write(' '.join(words) + '\n')


def train_aligner(config, lexicon):
  model = train_em_aligner(lexicon, max_g=config.max_g, max_p=config.max_p,
                           max_iters=config.em_iters, tol=config.em_tol)
  logger.info('aligner trained: %d chunks, %d iterations',
              len(model.chunk_probs), len(model.log_likelihoods))
  return model


def char_phone_alignments(config, inv, lexicon):
  """
  Character->phoneme alignment of every lexicon word, taken from (in
  order) a soft alignment file, an alignment file, a trained aligner file,
  or a freshly trained aligner.
  """
  if config.alignment == 'soft':
    return load_soft_alignments(config.soft_alignments, lexicon)
  if config.alignments:
    return load_alignments(config.alignments)
  if config.aligner_model:
    model = load_model(config.aligner_model, inv)
  else:
    model = train_aligner(config, lexicon)
  return align_lexicon(model, lexicon)


def segmentations_for(words, vocab, config):
  pretokenized = load_pretokenized(config.pretokenized, vocab) if config.pretokenized else None
  return tokenize_words(vocab, words, pretokenized)


def tree_for_words(words, vocab, config):
  return build_tree(words, segmentations_for(words, vocab, config))


def tree_features(tree, lexicon, alignments, table, encoding):
  """Phoneme features of the tree nodes, None in grapheme mode."""
  if encoding == GRAPHEME:
    return None
  embeds = word_phoneme_embeds([lexicon[w] for w in tree.words], table)
  return phoneme_features(tree, word_alignments(tree, lexicon, alignments), embeds,
                          d_p=table.shape[1])


def build_model(config, vocab_size, d_p):
  return TcpgenNet(vocab_size, d=config.d, d_enc=config.d_enc, d_att=config.d_att,
                   d_p=d_p, num_layers=config.num_layers, encoding=config.encoding,
                   phoneme_embed=config.phoneme_embed, include_root=config.include_root,
                   tie_embed=config.tie_embed, tie_phoneme_proj=config.tie_phoneme_proj,
                   reg=config.reg, seed=config.seed)


def save_model_params(model, path):
  save_params(model.params, path, meta=model.config())


def model_from_params(path):
  """Rebuild a TcpgenNet from a parameter file and its manifest."""
  params, meta = load_params(path)
  model = TcpgenNet(meta['V'], d=meta['d'], d_enc=meta['d_enc'], d_att=meta['d_att'],
                    d_joint=meta['d_joint'], d_p=meta['d_p'], num_layers=meta['L'],
                    encoding=meta['encoding'], phoneme_embed=meta['phoneme_embed'],
                    include_root=meta['include_root'], tie_embed=meta['tie_embed'],
                    tie_phoneme_proj=meta['tie_phoneme_proj'], reg=meta.get('reg', 0.0),
                    seed=meta.get('seed', 0))
  if set(params) != set(model.params):
    raise ValueError('%s holds parameters %s, model needs %s'
                     % (path, sorted(params), sorted(model.params)))
  model.params.update(params)
  return model


@dataclass(eq=False)
class Session:
  """Everything derived from the world files that training and decoding share."""
  inv: object
  lexicon: object
  vocab: object
  table: np.ndarray
  scenarios: list
  trees: list
  features: list
  utterances: list


def prepare_session(config, scenarios=None, world_files=None, alignments=None):
  """
  Load the world, align its lexicon, build one tree per scenario (or the
  shared --tree) and synthesize every scenario's acoustics.
  """
  inv, lexicon, vocab = world_files or load_world(config)
  if scenarios is None:
    scenarios = load_scenarios(config.scenarios)
  if alignments is None:
    alignments = char_phone_alignments(config, inv, lexicon)
  table = phoneme_table(inv, config.phoneme_embed, config.phoneme_table)
  confusion = load_confusion(config.confusion, vocab) if config.confusion else None
  world = AcousticWorld(vocab.size, len(inv), config.d_enc, config.seed)

  shared = load_tree(config.tree) if config.tree else None
  trees, features, utts = [], [], []
  for s in scenarios:
    tree = shared if shared is not None else tree_for_words(s.biasing_words, vocab, config)
    segs = None
    if s.pieces:
      segs = {w: segmentation_from_pieces(vocab, w, [vocab.id_to_piece[i] for i in p])
              for w, p in zip(s.words, s.pieces)}
    ref = make_reference(s.words, vocab, lexicon, alignments, segs)
    utts.append(synthesize_utterance(world, ref, s.noise, confusion, s.seed,
                                     confused_words=set(s.confused_words) or None))
    trees.append(tree)
    features.append(tree_features(tree, lexicon, alignments, table, config.encoding))
  return Session(inv=inv, lexicon=lexicon, vocab=vocab, table=table, scenarios=scenarios,
                 trees=trees, features=features, utterances=utts)


def train_on_session(config, session, model=None):
  """
  Returns a tuple of:
  - model: the trained TcpgenNet
  - loss_history: loss at every step
  """
  if model is None:
    model = build_model(config, session.vocab.size, session.table.shape[1])
  examples = make_training_examples(session.utterances, session.trees, session.vocab,
                                    session.features, session.inv, session.table,
                                    config.phoneme_query)
  _, history = toy_train(model, examples, lr=config.lr, steps=config.steps, seed=config.seed,
                         update_rule=config.update_rule, batch_size=config.batch_size)
  if history:
    logger.info('loss %.4f -> %.4f over %d steps', history[0], history[-1], len(history))
  return model, history


def decode_session(config, session, model, biasing=None, pgen_override=None):
  """Decoded words of every scenario."""
  biasing = config.biasing if biasing is None else biasing
  dc = DecodeConfig(beam=config.beam, max_symbols_per_frame=config.max_symbols_per_frame,
                    biasing_enabled=biasing, phoneme_query_enabled=config.phoneme_query,
                    pgen_override=pgen_override)
  hyps = []
  for utt, tree, feats in zip(session.utterances, session.trees, session.features):
    enc = model.encode(tree, feats) if biasing else None
    pieces = decode(utt, tree, enc, model.head, dc, session.vocab, session.inv,
                    session.table)
    hyps.append(pieces_to_words(session.vocab, pieces))
  return hyps


def score_session(session, hyps):
  refs = [list(s.words) for s in session.scenarios]
  lists = [set(s.biasing_words) for s in session.scenarios]
  return score_corpus(refs, hyps, lists)


def random_gradcheck_example(rng, model, V, N, num_steps=6, phoneme_query=True):
  """
  A random tree of at most N nodes over pieces 1..V and one random
  utterance of reference-forced steps for ``model``.
  """
  segs, words = {}, []
  for i in range(4 * N):
    length = int(rng.integers(1, 4))
    pieces = tuple(int(p) for p in rng.integers(1, V + 1, size=length))
    w = 'w%d' % i
    trial = dict(segs)
    trial[w] = Segmentation(pieces, tuple((j, j + 1) for j in range(length)))
    if build_tree(words + [w], trial).N > N:
      continue
    segs, words = trial, words + [w]
  tree = build_tree(words, segs)
  size = tree.N + 1
  dims = model.dims

  mask = np.zeros((num_steps, size), dtype=bool)
  target_node = np.full(num_steps, -1, dtype=np.int64)
  p_post = rng.dirichlet(np.ones(V + 1), size=num_steps)
  for s in range(num_steps):
    active = tree.children(int(rng.integers(0, size)))
    if not active:
      active = tree.children(0)
    mask[s, list(active)] = True
    if rng.random() < 0.8:
      target_node[s] = active[int(rng.integers(len(active)))]
  targets = np.array([tree.piece(n) if n >= 0 else int(rng.integers(0, V + 1))
                      for n in target_node])
  for s in range(num_steps):
    # a random target may still sit on an active node
    for n in np.flatnonzero(mask[s]):
      if tree.piece(n) == targets[s]:
        target_node[s] = n

  features = rng.normal(size=(size, dims['d_p']))
  features[0] = 0.0
  return TrainingExample(
    tree=tree, features=features,
    h_enc=rng.normal(size=(num_steps, dims['d_enc'])),
    y_prev=rng.integers(0, V + 1, size=num_steps),
    h_joint=np.log(p_post), p_target=p_post[np.arange(num_steps), targets],
    target_node=target_node, mask=mask,
    h_ctc=rng.normal(size=(num_steps, dims['d_p'])) if phoneme_query else None)


def parse_dims(text):
  dims = {}
  for part in text.split(','):
    key, _, value = part.partition('=')
    dims[key.strip()] = int(value)
  return dims


def head_gradcheck(seed=0, V=20, N=10, d=8, instances=20, num_layers=2):
  """
  Largest finite-difference gradient error over ``instances`` random
  models and examples.
  """
  rng = np.random.default_rng(seed)
  worst = 0.0
  for i in range(instances):
    encoding = ('both', 'grapheme', 'phoneme')[i % 3]
    model = TcpgenNet(V, d=d, d_enc=d, d_att=d, d_p=max(2, d // 2), num_layers=num_layers,
                      encoding=encoding, tie_embed=bool(i % 2), seed=seed * 100 + i)
    batch = [random_gradcheck_example(rng, model, V, N) for _ in range(2)]
    errors = check_model_gradients(model, batch)
    worst = max(worst, max(errors.values()))
  return worst


@dataclass
class DemoResult:
  biased: CorpusScore
  unbiased: CorpusScore
  loss_history: List[float]
  paths: dict


def run_demo(config):
  """
  Seeded end-to-end run: write the demo world to config.out_dir, align its
  lexicon, train the head on the scenarios, then decode them with and
  without biasing and score both.
  """
  out_dir = config.out_dir
  data = get_demo_data(seed=config.seed, noise=config.noise,
                       n_distractors=config.n_distractors)
  paths = write_demo_data(data, out_dir)
  config = config.override(inventory=paths['inventory'], lexicon=paths['lexicon'],
                           vocab=paths['vocab'], scenarios=paths['scenarios'],
                           confusion=paths['confusion'])

  inv, lexicon, vocab = load_world(config)
  aligner = train_aligner(config, lexicon)
  paths['aligner_model'] = os.path.join(out_dir, 'aligner.json')
  save_model(aligner, inv, paths['aligner_model'])
  alignments = align_lexicon(aligner, lexicon)
  paths['alignments'] = os.path.join(out_dir, 'aligned.json')
  save_alignments(alignments, paths['alignments'])

  session = prepare_session(config, world_files=(inv, lexicon, vocab), alignments=alignments)
  paths['tree'] = os.path.join(out_dir, 'tree_utt00.json')
  save_tree(session.trees[0], paths['tree'], vocab)

  model, history = train_on_session(config, session)
  paths['params'] = os.path.join(out_dir, 'params.bin')
  save_model_params(model, paths['params'])

  refs = [list(s.words) for s in session.scenarios]
  paths['ref'] = os.path.join(out_dir, 'ref.txt')
  write_sentences(refs, paths['ref'])
  scores = {}
  for name, flag in (('bias', True), ('nobias', False)):
    hyps = decode_session(config, session, model, biasing=flag)
    paths['hyp_' + name] = os.path.join(out_dir, 'hyp_%s.txt' % name)
    write_sentences(hyps, paths['hyp_' + name])
    scores[name] = score_session(session, hyps)
  paths['report'] = os.path.join(out_dir, 'report.json')
  write_report(scores, paths['report'])

  inputs = [paths[k] for k in ('inventory', 'lexicon', 'vocab', 'scenarios', 'confusion')]
  for key in ('aligner_model', 'alignments', 'tree', 'params', 'hyp_bias', 'hyp_nobias',
              'report'):
    write_manifest(paths[key], 'demo', inputs=inputs, outputs=[paths[key]],
                   config=config.as_dict(), seed=config.seed)
  return DemoResult(biased=scores['bias'], unbiased=scores['nobias'],
                    loss_history=history, paths=paths)


def format_comparison(result):
  rows = ['%-10s %8s %8s' % ('', 'WER', 'R-WER')]
  for name, score in (('bias on', result.biased), ('bias off', result.unbiased)):
    rows.append('%-10s %8s %8s' % (name, format_rate(score.wer), format_rate(score.rwer)))
  return '\n'.join(rows)


def config_for_model(config, model):
  """config with the modes and dims a loaded model was trained with."""
  return config.override(encoding=model.encoder.encoding,
                         phoneme_embed=model.encoder.phoneme_embed_mode,
                         include_root=model.encoder.include_root,
                         d_enc=model.dims['d_enc'])
