"""
Synthetic acoustics and a frame-synchronous transducer decoder.

Every reference piece occupies two frames. On its first frame the mock
transducer emits the piece at the first symbol position and blank after it;
the second frame is all blank. Encoder states carry signatures of the true
piece and phoneme, while the mock posteriors may prefer a confusable piece,
so a pointer head that reads the encoder state can recover the truth.
"""
import io
import json
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from biasing.biastrie import active_set
from biasing.classifiers.tcpgen_net import TrainingExample
from biasing.errors import ConfigError, InvalidConfusion, MissingAlignment
from biasing.g2p_align import compose, subword_char_matrix
from biasing.solver import Solver
from biasing.tcpgen import (compute_query, ctc_phoneme_embedding, generation_prob,
                            interpolate, pointer_context, ptr_distribution)
from biasing.tokenizer import tokenize_word

logger = logging.getLogger(__name__)

FRAMES_PER_PIECE = 2
SMOOTHING = 1e-3
ENCODER_NOISE = 0.1


class AcousticWorld(object):
  """
  Seeded signature vectors shared by every utterance of a run.

  Inputs:
  - vocab_size: V
  - inventory_size: phoneme inventory size, blank included
  - d_enc: encoder state size
  - seed: integer
  """

  def __init__(self, vocab_size, inventory_size, d_enc=16, seed=0):
    rng = np.random.default_rng(seed)
    self.vocab_size = vocab_size
    self.inventory_size = inventory_size
    self.d_enc = d_enc
    self.seed = seed
    self.piece_sig = rng.normal(size=(vocab_size + 1, d_enc))
    self.phone_sig = 0.5 * rng.normal(size=(inventory_size, d_enc))
    self.piece_sig[0] = 0.0
    self.phone_sig[0] = 0.0


@dataclass(frozen=True)
class ReferenceWord:
  word: str
  pieces: Tuple[int, ...]
  # phoneme ids aligned to each piece, possibly empty
  phones: Tuple[Tuple[int, ...], ...]


def make_reference(words, vocab, lexicon, alignments, segmentations=None):
  """
  Inputs:
  - words: reference word sequence
  - vocab: SubwordVocab
  - lexicon: word -> LexiconEntry
  - alignments: word -> hard character->phoneme AlignmentMatrix
  - segmentations: optional word -> Segmentation; tokenized otherwise

  Returns a tuple of ReferenceWord.
  """
  out = []
  for w in words:
    if w not in alignments:
      raise MissingAlignment(w)
    seg = segmentations[w] if segmentations and w in segmentations else tokenize_word(vocab, w)
    a = compose(subword_char_matrix(lexicon[w], seg), alignments[w])
    owner = np.argmax(a, axis=0)
    phones = tuple(tuple(int(lexicon[w].phonemes[j]) for j in np.flatnonzero(owner == i))
                   for i in range(seg.l_s))
    out.append(ReferenceWord(word=w, pieces=seg.piece_ids, phones=phones))
  return tuple(out)


@dataclass(eq=False)
class MockUtterance:
  reference: Tuple[ReferenceWord, ...]
  frames: np.ndarray            # (T, d_enc)
  rnnt_posteriors: np.ndarray   # (T, K, V+1)
  ctc_posteriors: np.ndarray    # (T, |inventory|)
  frame_pieces: np.ndarray      # (T,) piece emitted on each frame, 0 if none
  noise: float
  seed: int

  @property
  def reference_pieces(self):
    return tuple(p for rw in self.reference for p in rw.pieces)

  @property
  def words(self):
    return tuple(rw.word for rw in self.reference)

  @property
  def T(self):
    return self.frames.shape[0]

  def posterior(self, t, k):
    return self.rnnt_posteriors[t, min(k, self.rnnt_posteriors.shape[1] - 1)]


def _rnnt_row(target, noise, confusers, size):
  row = np.zeros(size)
  row[target] = 1.0 - noise
  if noise > 0:
    if confusers:
      for c in confusers:
        row[c] += noise / len(confusers)
    else:
      others = [i for i in range(1, size) if i != target]
      row[others] += noise / len(others)
  return (1.0 - SMOOTHING) * row + SMOOTHING / size


def _ctc_row(target, noise, size):
  row = np.full(size, noise / (size - 1))
  row[target] = 1.0 - noise
  return row


def synthesize_utterance(world, reference, noise=0.0, confusion=None, seed=0,
                         confused_words=None):
  """
  Build the mock acoustics of one utterance.

  Inputs:
  - world: AcousticWorld
  - reference: tuple of ReferenceWord
  - noise: mass in [0, 1) taken from the true symbol
  - confusion: piece id -> tuple of piece ids that receive the noise mass;
    pieces without an entry spread the noise uniformly over the vocabulary
  - seed: integer seeding the encoder-state noise
  - confused_words: words whose pieces use ``confusion``; all by default

  Returns a MockUtterance.
  """
  if not reference:
    raise ConfigError('reference is empty')
  if not 0.0 <= noise < 1.0:
    raise ConfigError('noise must lie in [0, 1), got %r' % noise)
  confusion = confusion or {}
  for p, cs in confusion.items():
    if p in cs:
      raise InvalidConfusion('piece %d listed as its own confusion' % p)
    for c in cs:
      if not 0 < c <= world.vocab_size:
        raise InvalidConfusion('confusion piece %d outside vocabulary' % c)

  size = world.vocab_size + 1
  pieces, phones, confused = [], [], []
  for rw in reference:
    targeted = confused_words is None or rw.word in confused_words
    for p, ph in zip(rw.pieces, rw.phones):
      pieces.append(p)
      phones.append(ph)
      confused.append(confusion.get(p, ()) if targeted else ())

  T = FRAMES_PER_PIECE * len(pieces)
  rng = np.random.default_rng(seed)
  frames = np.zeros((T, world.d_enc))
  rnnt = np.zeros((T, 2, size))
  ctc = np.zeros((T, world.inventory_size))
  frame_pieces = np.zeros(T, dtype=np.int64)
  blank_row = _rnnt_row(0, noise, (), size)

  for j, (p, ph, cs) in enumerate(zip(pieces, phones, confused)):
    for f in range(FRAMES_PER_PIECE):
      t = FRAMES_PER_PIECE * j + f
      phone = ph[min(f * len(ph) // FRAMES_PER_PIECE, len(ph) - 1)] if ph else 0
      frames[t] = world.piece_sig[p] + world.phone_sig[phone]
      ctc[t] = _ctc_row(phone, noise, world.inventory_size)
      if f == 0:
        frame_pieces[t] = p
        rnnt[t, 0] = _rnnt_row(p, noise, cs, size)
      else:
        rnnt[t, 0] = blank_row
      rnnt[t, 1] = blank_row
  frames += ENCODER_NOISE * noise * rng.normal(size=frames.shape)

  return MockUtterance(reference=tuple(reference), frames=frames, rnnt_posteriors=rnnt,
                       ctc_posteriors=ctc, frame_pieces=frame_pieces, noise=noise,
                       seed=seed)


@dataclass
class DecodeConfig:
  beam: int = 4
  max_symbols_per_frame: int = 2
  biasing_enabled: bool = True
  phoneme_query_enabled: bool = False
  # fixes p_gen at every step when set
  pgen_override: Optional[float] = None

  def __post_init__(self):
    if self.beam < 1:
      raise ConfigError('beam must be >= 1')
    if self.max_symbols_per_frame < 1:
      raise ConfigError('max_symbols_per_frame must be >= 1')
    if self.pgen_override is not None and not 0.0 <= self.pgen_override <= 1.0:
      raise ConfigError('pgen_override must lie in [0, 1]')


def next_prefix(tree, vocab, prefix, piece):
  """
  Partial-word prefix after emitting ``piece``: unchanged on blank, reset on a
  word-final piece or when the extension leaves the tree.
  """
  if piece == 0:
    return prefix
  if vocab.is_final(piece):
    return ()
  extended = prefix + (piece,)
  if tree is None or tree.walk(extended) is None:
    return ()
  return extended


class _Stepper(object):
  """Output distribution of one decoding step."""

  def __init__(self, utt, tree, encodings, head, config, inv=None, phoneme_table=None):
    self.utt = utt
    self.tree = tree
    self.encodings = encodings
    self.head = head
    self.config = config
    self.inv = inv
    self.phoneme_table = phoneme_table
    if config.phoneme_query_enabled and (inv is None or phoneme_table is None):
      raise ConfigError('phoneme-aware queries need the inventory and phoneme table')

  def __call__(self, t, k, y_prev, prefix):
    p_rnnt = self.utt.posterior(t, k)
    cfg = self.config
    if not cfg.biasing_enabled or self.tree is None or cfg.pgen_override == 0.0:
      return p_rnnt
    active = active_set(self.tree, prefix)
    if not active:
      return p_rnnt
    h_ctc = None
    if cfg.phoneme_query_enabled:
      h_ctc = ctc_phoneme_embedding(self.utt.ctc_posteriors[t], self.inv, self.phoneme_table)
    q = compute_query(self.head, self.utt.frames[t], y_prev, h_ctc)
    dist = ptr_distribution(self.head, q, self.encodings, active, self.tree)
    if cfg.pgen_override is not None:
      p_gen = cfg.pgen_override
    else:
      h_ptr = pointer_context(dist, self.head, self.encodings, self.tree)
      p_gen = generation_prob(self.head, np.log(p_rnnt), h_ptr)
    return interpolate(p_rnnt, dist, p_gen)


@dataclass
class Hypothesis:
  pieces: Tuple[int, ...] = ()
  log_prob: float = 0.0
  prefix: Tuple[int, ...] = ()
  done: bool = False

  @property
  def y_prev(self):
    return self.pieces[-1] if self.pieces else 0

  @property
  def key(self):
    return (self.pieces, self.done)

  def sort_key(self):
    return (-self.log_prob, self.pieces)


def greedy_decode(utt, tree, encodings, head, config, vocab, inv=None, phoneme_table=None):
  """Argmax decoding; ties go to the lowest id, so blank wins a tie."""
  step = _Stepper(utt, tree, encodings, head, config, inv, phoneme_table)
  hyp = []
  prefix = ()
  for t in range(utt.T):
    for k in range(config.max_symbols_per_frame):
      y = int(np.argmax(step(t, k, hyp[-1] if hyp else 0, prefix)))
      if y == 0:
        break
      hyp.append(y)
      prefix = next_prefix(tree, vocab, prefix, y)
  return hyp


def _top_pieces(dist, n):
  order = sorted(range(1, dist.shape[0]), key=lambda i: (-dist[i], i))
  return order[:n]


def _prune(pool, beam):
  best = {}
  for h in pool:
    old = best.get(h.key)
    if old is None or h.log_prob > old.log_prob:
      best[h.key] = h
  return sorted(best.values(), key=Hypothesis.sort_key)[:beam]


def beam_decode(utt, tree, encodings, head, config, vocab, inv=None, phoneme_table=None):
  """
  Frame-synchronous beam search. Within a frame, extensions of the live
  hypotheses compete with the hypotheses that already emitted blank for the
  ``beam`` slots; equal scores rank by piece sequence.
  """
  step = _Stepper(utt, tree, encodings, head, config, inv, phoneme_table)
  beam = [Hypothesis()]
  for t in range(utt.T):
    live = [Hypothesis(h.pieces, h.log_prob, h.prefix) for h in beam]
    finished = []
    for k in range(config.max_symbols_per_frame):
      pool = list(finished)
      for h in live:
        dist = step(t, k, h.y_prev, h.prefix)
        logp = np.log(dist)
        pool.append(Hypothesis(h.pieces, h.log_prob + logp[0], h.prefix, done=True))
        for y in _top_pieces(dist, config.beam):
          pool.append(Hypothesis(h.pieces + (y,), h.log_prob + logp[y],
                                 next_prefix(tree, vocab, h.prefix, y)))
      kept = _prune(pool, config.beam)
      finished = [h for h in kept if h.done]
      live = [h for h in kept if not h.done]
      if not live:
        break
    beam = _prune(finished + live, config.beam)
  return list(min(beam, key=Hypothesis.sort_key).pieces)


def decode(utt, tree, encodings, head, config, vocab, inv=None, phoneme_table=None):
  """
  Decode one utterance.

  Inputs:
  - utt: MockUtterance
  - tree: PrefixTree, or None for no biasing list
  - encodings: (N+1, d) node encodings of the tree
  - head: TcpgenHead
  - config: DecodeConfig
  - vocab: SubwordVocab
  - inv, phoneme_table: needed for phoneme-aware queries

  Returns the decoded piece ids.
  """
  fn = greedy_decode if config.beam == 1 else beam_decode
  return fn(utt, tree, encodings, head, config, vocab, inv, phoneme_table)


@dataclass(frozen=True)
class ForcedStep:
  t: int
  k: int
  target: int
  y_prev: int
  prefix: Tuple[int, ...]


def forced_steps(utt, tree, vocab):
  """
  The forced path through the reference: one step per emitted piece
  and one blank step closing every frame.
  """
  steps = []
  y_prev = 0
  prefix = ()
  for t in range(utt.T):
    k = 0
    p = int(utt.frame_pieces[t])
    if p:
      steps.append(ForcedStep(t, 0, p, y_prev, prefix))
      y_prev = p
      prefix = next_prefix(tree, vocab, prefix, p)
      k = 1
    steps.append(ForcedStep(t, k, 0, y_prev, prefix))
  return steps


def make_training_example(utt, tree, vocab, features=None, inv=None, phoneme_table=None,
                          phoneme_query=False):
  steps = forced_steps(utt, tree, vocab)
  S, size = len(steps), tree.N + 1
  mask = np.zeros((S, size), dtype=bool)
  target_node = np.full(S, -1, dtype=np.int64)
  h_joint = np.zeros((S, utt.rnnt_posteriors.shape[2]))
  p_target = np.zeros(S)
  for i, st in enumerate(steps):
    active = active_set(tree, st.prefix)
    mask[i, list(active)] = True
    for n in active:
      if tree.piece(n) == st.target:
        target_node[i] = n
    post = utt.posterior(st.t, st.k)
    h_joint[i] = np.log(post)
    p_target[i] = post[st.target]
  ts = [st.t for st in steps]
  h_ctc = None
  if phoneme_query:
    h_ctc = np.array([ctc_phoneme_embedding(utt.ctc_posteriors[t], inv, phoneme_table)
                      for t in ts])
  return TrainingExample(tree=tree, features=features, h_enc=utt.frames[ts],
                         y_prev=np.array([st.y_prev for st in steps], dtype=np.int64),
                         h_joint=h_joint, p_target=p_target, target_node=target_node,
                         mask=mask, h_ctc=h_ctc)


def make_training_examples(utts, trees, vocab, features=None, inv=None, phoneme_table=None,
                           phoneme_query=False):
  """One TrainingExample per (utterance, tree) pair, in order."""
  features = features if features is not None else [None] * len(utts)
  return [make_training_example(u, tr, vocab, f, inv, phoneme_table, phoneme_query)
          for u, tr, f in zip(utts, trees, features)]


def toy_train(model, examples, lr=0.05, steps=200, seed=0, update_rule='adam',
              batch_size=None, verbose=False):
  """
  Train the model on reference-forced examples.

  Returns a tuple of:
  - params: the model's params dict
  - loss_history: loss at every step
  """
  solver = Solver(model, examples, update_rule=update_rule,
                  optim_config={'learning_rate': lr}, num_steps=steps,
                  batch_size=batch_size, seed=seed, verbose=verbose)
  history = solver.train()
  return model.params, history


@dataclass
class Scenario:
  """One synthetic utterance and its biasing list."""
  name: str
  words: Tuple[str, ...]
  biasing_words: Tuple[str, ...]
  noise: float
  seed: int
  confused_words: Tuple[str, ...] = ()
  pieces: Tuple[Tuple[int, ...], ...] = ()

  def word_spans(self):
    spans, start = [], 0
    for p in self.pieces:
      spans.append((start, start + len(p)))
      start += len(p)
    return spans


def save_scenarios(scenarios, path):
  obj = []
  for s in scenarios:
    obj.append({'name': s.name, 'words': list(s.words),
                'biasing_list': list(s.biasing_words), 'noise': s.noise,
                'seed': s.seed, 'confused_words': list(s.confused_words),
                'pieces': [list(p) for p in s.pieces],
                'word_spans': [list(x) for x in s.word_spans()]})
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(obj, f, indent=1, ensure_ascii=False)


def load_scenarios(path):
  with io.open(path, 'r', encoding='utf-8') as f:
    obj = json.load(f)
  return [Scenario(name=o['name'], words=tuple(o['words']),
                   biasing_words=tuple(o['biasing_list']), noise=float(o['noise']),
                   seed=int(o['seed']), confused_words=tuple(o.get('confused_words', ())),
                   pieces=tuple(tuple(p) for p in o.get('pieces', ())))
          for o in obj]
