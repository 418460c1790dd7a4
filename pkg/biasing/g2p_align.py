"""
Character-to-phoneme alignment.

Hard alignments come from a joint multigram model trained with EM over each
word's monotonic chunk lattice and decoded with Viterbi. Soft alignments are
attention matrices computed elsewhere and ingested from JSON. Both end up as
an l_c x l_p column-stochastic AlignmentMatrix; subword_char_matrix gives the
l_s x l_c matrix that maps subwords onto characters.

Chunk pairs always have a non-empty grapheme side. A grapheme chunk paired
with an empty phoneme chunk is a silent letter and leaves an all-zero row.
"""
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.special import logsumexp

from biasing.errors import (EmptyInput, InvalidSegmentation, MissingAlignment,
                            NotColumnStochastic, NumericalError, ShapeError,
                            UnalignableEntry)

logger = logging.getLogger(__name__)

SOFT = 'soft'
HARD = 'hard'

PROB_FLOOR = 1e-12
PRUNE_BELOW = 1e-6
COLUMN_TOL = 1e-6
SOFT_RENORM_TOL = 1e-3
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AlignmentMatrix:
  weights: np.ndarray
  kind: str = SOFT

  def validate(self):
    w = self.weights
    if w.ndim != 2:
      raise ShapeError('alignment must be a matrix, got shape %r' % (w.shape,))
    if np.any(w < 0) or np.any(w > 1) or not np.all(np.isfinite(w)):
      raise NotColumnStochastic('alignment entries must lie in [0, 1]')
    if np.any(np.abs(w.sum(axis=0) - 1) > COLUMN_TOL):
      raise NotColumnStochastic('alignment columns must sum to 1')
    if self.kind == HARD:
      if not np.all((w == 0) | (w == 1)):
        raise NotColumnStochastic('hard alignment must be binary')
      rows = np.argmax(w, axis=0)
      if np.any(np.diff(rows) < 0):
        raise NotColumnStochastic('hard alignment must be monotonic')
    return self

  @property
  def shape(self):
    return self.weights.shape


@dataclass(frozen=True, eq=False)
class SubwordCharMatrix:
  weights: np.ndarray


@dataclass(eq=False)
class MultigramModel:
  """
  Joint distribution over (grapheme chunk, phoneme chunk) pairs. Phoneme
  chunks are tuples of inventory ids; () is the empty chunk.
  """
  chunk_probs: Dict[Tuple[str, Tuple[int, ...]], float]
  max_g: int
  max_p: int
  log_likelihoods: Tuple[float, ...] = field(default_factory=tuple)

  def logp(self, g, p):
    prob = self.chunk_probs.get((g, p))
    return None if prob is None else np.log(prob)

  def conditional(self, g, p):
    """P(phoneme chunk p | grapheme chunk g) under the joint model."""
    total = sum(v for (gg, _), v in self.chunk_probs.items() if gg == g)
    if total == 0:
      return 0.0
    return self.chunk_probs.get((g, tuple(p)), 0.0) / total


def _check_limits(max_g, max_p):
  if max_g < 1 or max_p < 1:
    raise ValueError('chunk limits must be >= 1, got max_g=%d max_p=%d' % (max_g, max_p))


def _lattice_edges(entry, max_g, max_p):
  """
  All edges of the monotonic segmentation lattice that lie on at least one
  complete path from (0, 0) to (l_c, l_p), as (i, j, a, b, key) tuples.
  """
  l_c, l_p = entry.l_c, entry.l_p
  if l_p > l_c * max_p:
    raise UnalignableEntry(entry.word)
  word = ''.join(entry.chars)
  edges = []
  for i in range(l_c):
    for j in range(l_p + 1):
      # (i, j) reachable and end reachable from (i + a, j + b)
      if j > i * max_p:
        continue
      for a in range(1, min(max_g, l_c - i) + 1):
        for b in range(0, min(max_p, l_p - j) + 1):
          if l_p - (j + b) > (l_c - i - a) * max_p:
            continue
          key = (word[i:i + a], tuple(entry.phonemes[j:j + b]))
          edges.append((i, j, a, b, key))
  return edges


def _forward_backward(entry, edges, logp):
  l_c, l_p = entry.l_c, entry.l_p
  alpha = np.full((l_c + 1, l_p + 1), -np.inf)
  beta = np.full((l_c + 1, l_p + 1), -np.inf)
  alpha[0, 0] = 0.0
  beta[l_c, l_p] = 0.0
  incoming = defaultdict(list)
  outgoing = defaultdict(list)
  for i, j, a, b, key in edges:
    incoming[i + a, j + b].append((i, j, logp[key]))
    outgoing[i, j].append((i + a, j + b, logp[key]))
  # every edge consumes at least one grapheme, so row order is topological
  for node in sorted(incoming):
    terms = [alpha[i, j] + lp for i, j, lp in incoming[node]]
    alpha[node] = logsumexp(terms)
  for node in sorted(outgoing, reverse=True):
    terms = [beta[i, j] + lp for i, j, lp in outgoing[node]]
    beta[node] = logsumexp(terms)
  return alpha, beta


def lattice_log_likelihood(model, entry):
  edges = [e for e in _lattice_edges(entry, model.max_g, model.max_p)
           if e[4] in model.chunk_probs]
  logp = {e[4]: np.log(model.chunk_probs[e[4]]) for e in edges}
  alpha, _ = _forward_backward(entry, edges, logp)
  return alpha[entry.l_c, entry.l_p]


def train_em_aligner(lexicon, max_g=2, max_p=2, max_iters=50, tol=1e-6):
  """
  Estimate a joint multigram model with EM.

  Inputs:
  - lexicon: map word -> LexiconEntry
  - max_g, max_p: longest grapheme / phoneme chunk
  - max_iters: iteration cap
  - tol: stop once the total log-likelihood improves by less than this

  Returns a MultigramModel whose log_likelihoods holds the total
  log-likelihood measured in the E-step of every iteration.
  """
  _check_limits(max_g, max_p)
  if not lexicon:
    raise EmptyInput('cannot train an aligner on an empty lexicon')

  words = sorted(lexicon)
  lattices = [(lexicon[w], _lattice_edges(lexicon[w], max_g, max_p)) for w in words]
  keys = sorted(set(e[4] for _, edges in lattices for e in edges))
  probs = {k: 1.0 / len(keys) for k in keys}

  trace = []
  for it in range(max_iters):
    logp = {k: np.log(max(v, PROB_FLOOR)) for k, v in probs.items()}
    counts = defaultdict(float)
    total_ll = 0.0
    for entry, edges in lattices:
      live = [e for e in edges if e[4] in logp]
      alpha, beta = _forward_backward(entry, live, logp)
      z = alpha[entry.l_c, entry.l_p]
      if not np.isfinite(z):
        raise NumericalError('likelihood of %r is not finite' % entry.word, step=it)
      total_ll += z
      for i, j, a, b, key in live:
        counts[key] += np.exp(alpha[i, j] + logp[key] + beta[i + a, j + b] - z)

    if not np.isfinite(total_ll):
      raise NumericalError('total log-likelihood is not finite', step=it)
    if trace and total_ll < trace[-1] - 1e-9:
      logger.warning('EM log-likelihood fell from %.12g to %.12g at iteration %d',
                     trace[-1], total_ll, it)
    trace.append(total_ll)
    logger.debug('EM iteration %d: log-likelihood %.9f', it, total_ll)

    norm = sum(counts.values())
    probs = {k: max(c / norm, PROB_FLOOR) for k, c in counts.items()}
    kept = {k: v for k, v in probs.items() if v >= PRUNE_BELOW}
    if len(kept) < len(probs):
      logger.debug('pruned %d chunks below %g', len(probs) - len(kept), PRUNE_BELOW)
    s = sum(kept.values())
    probs = {k: v / s for k, v in kept.items()}

    if len(trace) > 1 and trace[-1] - trace[-2] < tol:
      logger.info('EM converged after %d iterations', it + 1)
      break

  return MultigramModel(chunk_probs=probs, max_g=max_g, max_p=max_p,
                        log_likelihoods=tuple(trace))


def viterbi_path(model, entry):
  """
  Best monotonic chunk path for an entry.

  Ties are broken toward the path whose first differing chunk has the
  shorter grapheme side (then the shorter phoneme side).

  Returns a tuple of:
  - path: list of (i, j, a, b) chunk placements
  - score: log-probability of the path, summed left to right
  """
  l_c, l_p = entry.l_c, entry.l_p
  if l_p > l_c * model.max_p:
    raise UnalignableEntry(entry.word)
  word = ''.join(entry.chars)
  best = np.full((l_c + 1, l_p + 1), -np.inf)
  choice = {}
  best[l_c, l_p] = 0.0
  for i in range(l_c - 1, -1, -1):
    for j in range(l_p, -1, -1):
      for a in range(1, min(model.max_g, l_c - i) + 1):
        for b in range(0, min(model.max_p, l_p - j) + 1):
          lp = model.logp(word[i:i + a], tuple(entry.phonemes[j:j + b]))
          if lp is None or not np.isfinite(best[i + a, j + b]):
            continue
          s = lp + best[i + a, j + b]
          if s > best[i, j] + TIE_TOL:
            best[i, j] = s
            choice[i, j] = (a, b)
  if not np.isfinite(best[0, 0]):
    raise UnalignableEntry(entry.word)

  path, score = [], 0.0
  i = j = 0
  while (i, j) != (l_c, l_p):
    a, b = choice[i, j]
    path.append((i, j, a, b))
    score += model.logp(word[i:i + a], tuple(entry.phonemes[j:j + b]))
    i, j = i + a, j + b
  return path, score


def path_to_matrix(path, l_c, l_p):
  """
  Expand a chunk path into a binary l_c x l_p matrix. Inside a chunk of n
  characters and m phonemes, phoneme k goes to chunk character min(k, n - 1).
  """
  w = np.zeros((l_c, l_p))
  for i, j, a, b in path:
    for k in range(b):
      w[i + min(k, a - 1), j + k] = 1.0
  return w


def viterbi_align(model, entry):
  path, _ = viterbi_path(model, entry)
  return AlignmentMatrix(path_to_matrix(path, entry.l_c, entry.l_p), HARD).validate()


def _matrix_from_json(obj, entry):
  rows, cols = int(obj['rows']), int(obj['cols'])
  data = np.asarray(obj['data'], dtype=np.float64)
  if (rows, cols) != (entry.l_c, entry.l_p) or data.size != rows * cols:
    raise ShapeError('alignment for %r has shape %dx%d (%d values), expected %dx%d'
                     % (entry.word, rows, cols, data.size, entry.l_c, entry.l_p))
  w = data.reshape(rows, cols)
  if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
    raise NotColumnStochastic('alignment entries for %r must lie in [0, 1]' % entry.word)
  sums = w.sum(axis=0)
  if np.any(np.abs(sums - 1) > SOFT_RENORM_TOL):
    raise NotColumnStochastic('alignment columns for %r sum to %r' % (entry.word, sums))
  if np.any(sums != 1):
    logger.debug('renormalized soft alignment columns of %r', entry.word)
    w = w / sums
  return AlignmentMatrix(w, SOFT).validate()


def _read_json(path):
  with io.open(path, 'r', encoding='utf-8') as f:
    return json.load(f)


def load_soft_alignment(path, entry):
  """
  Read the attention alignment of one word from
  ``{"word", "rows", "cols", "data"}`` JSON (or a list of such objects).
  Columns within 1e-3 of summing to one are renormalized.
  """
  obj = _read_json(path)
  objs = obj if isinstance(obj, list) else [obj]
  for o in objs:
    if o.get('word') == entry.word:
      return _matrix_from_json(o, entry)
  raise MissingAlignment(entry.word)


def load_soft_alignments(path, lexicon):
  obj = _read_json(path)
  objs = obj if isinstance(obj, list) else [obj]
  out = {}
  for o in objs:
    word = o.get('word')
    if word not in lexicon:
      raise MissingAlignment(word)
    out[word] = _matrix_from_json(o, lexicon[word])
  return out


def subword_char_matrix(entry, segmentation):
  """
  Inputs:
  - entry: LexiconEntry
  - segmentation: a Segmentation or a sequence of (start, end) character spans

  Returns a SubwordCharMatrix of shape l_s x l_c.
  """
  spans = getattr(segmentation, 'char_spans', segmentation)
  spans = [tuple(s) for s in spans]
  pos = 0
  for start, end in spans:
    if start != pos or end <= start:
      raise InvalidSegmentation('spans %r of %r overlap or leave a gap' % (spans, entry.word))
    pos = end
  if pos != entry.l_c:
    raise InvalidSegmentation('spans %r do not cover %r' % (spans, entry.word))
  w = np.zeros((len(spans), entry.l_c))
  for r, (start, end) in enumerate(spans):
    w[r, start:end] = 1.0
  return SubwordCharMatrix(w)


def compose(a_sc, a_cp):
  """A_s->c A_c->p, an l_s x l_p matrix whose columns sum to one."""
  sc = getattr(a_sc, 'weights', a_sc)
  cp = getattr(a_cp, 'weights', a_cp)
  if sc.shape[1] != cp.shape[0]:
    raise ShapeError('cannot compose %r with %r' % (sc.shape, cp.shape))
  return sc.dot(cp)


def _chunk_name(key, inv):
  g, p = key
  return '%s|%s' % (g, ' '.join(inv.symbol(i) for i in p))


def save_model(model, inv, path):
  obj = {
    'max_g': model.max_g,
    'max_p': model.max_p,
    'log_likelihoods': list(model.log_likelihoods),
    'chunks': {_chunk_name(k, inv): v for k, v in sorted(model.chunk_probs.items())},
  }
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(obj, f, indent=1, sort_keys=True, ensure_ascii=False)


def load_model(path, inv):
  obj = _read_json(path)
  probs = {}
  for name, v in obj['chunks'].items():
    g, _, p = name.rpartition('|')
    probs[(g, tuple(inv.id(s) for s in p.split()))] = float(v)
  return MultigramModel(chunk_probs=probs, max_g=int(obj['max_g']),
                        max_p=int(obj['max_p']),
                        log_likelihoods=tuple(obj.get('log_likelihoods', ())))


def save_alignments(alignments, path):
  obj = {}
  for word in sorted(alignments):
    a = alignments[word]
    obj[word] = {'kind': a.kind, 'rows': a.shape[0], 'cols': a.shape[1],
                 'data': a.weights.ravel().tolist()}
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(obj, f, sort_keys=True, ensure_ascii=False)


def load_alignments(path):
  out = {}
  for word, o in _read_json(path).items():
    w = np.asarray(o['data'], dtype=np.float64).reshape(o['rows'], o['cols'])
    out[word] = AlignmentMatrix(w, o.get('kind', SOFT)).validate()
  return out


def align_lexicon(model, lexicon, words=None):
  """Viterbi-align every word (or just ``words``) of a lexicon."""
  words = sorted(lexicon) if words is None else words
  return {w: viterbi_align(model, lexicon[w]) for w in words}
