"""
Tree-constrained pointer generator head.

Single-step operations used by the decoder. Training evaluates the same
computation batched in biasing.classifiers.tcpgen_net.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit, softmax

from biasing.errors import (DuplicateActivePiece, InfiniteLoss, NotNormalized,
                            ShapeError)

logger = logging.getLogger(__name__)

NORM_TOL = 1e-9
GEN_BIAS_INIT = -2.0


class TcpgenHead(object):
  """
  View over the head entries of a shared params dict:

  - 'Wq': (d_enc, d_att) encoder-state query weights
  - 'Wq2': (d, d_att) previous-piece query weights
  - 'Wk', 'Wv': (d, d_att) key and value weights
  - 'Wgen': (d_joint + d_att,) generation weights, 'bgen': (1,) bias
  - 'Wpq': (d_p, d_enc) query phoneme projection, or the encoder's 'Wp'
    when tie_phoneme_proj is set
  - 'embed' (shared with the encoder) or 'dec_embed' when untied
  """

  def __init__(self, params, tie_embed=True, tie_phoneme_proj=False):
    self.params = params
    self.tie_embed = tie_embed
    self.tie_phoneme_proj = tie_phoneme_proj

  @property
  def Wq(self):
    return self.params['Wq']

  @property
  def Wq2(self):
    return self.params['Wq2']

  @property
  def Wk(self):
    return self.params['Wk']

  @property
  def Wv(self):
    return self.params['Wv']

  @property
  def Wgen(self):
    return self.params['Wgen']

  @property
  def bgen(self):
    return self.params['bgen']

  @property
  def embed_name(self):
    return 'embed' if self.tie_embed else 'dec_embed'

  @property
  def decoder_embed(self):
    return self.params[self.embed_name]

  @property
  def phoneme_proj_name(self):
    return 'Wp' if self.tie_phoneme_proj else 'Wpq'

  @property
  def query_phoneme_proj(self):
    return self.params.get(self.phoneme_proj_name)

  @property
  def d_enc(self):
    return self.Wq.shape[0]

  @property
  def d_att(self):
    return self.Wq.shape[1]

  @property
  def d_joint(self):
    return self.Wgen.shape[0] - self.d_att


def init_head_params(params, d_enc, d, d_att, d_joint, d_p, vocab_size, rng=None,
                     tie_embed=True, tie_phoneme_proj=False):
  """
  Fill ``params`` with head weights drawn uniform(-1/sqrt(d), 1/sqrt(d)).
  The generation bias starts at GEN_BIAS_INIT so an untrained head barely
  touches the base distribution.
  """
  if rng is None:
    rng = np.random.default_rng(0)
  scale = 1.0 / np.sqrt(d)
  params['Wq'] = rng.uniform(-scale, scale, size=(d_enc, d_att))
  params['Wq2'] = rng.uniform(-scale, scale, size=(d, d_att))
  params['Wk'] = rng.uniform(-scale, scale, size=(d, d_att))
  params['Wv'] = rng.uniform(-scale, scale, size=(d, d_att))
  params['Wgen'] = rng.uniform(-scale, scale, size=d_joint + d_att)
  params['bgen'] = np.array([GEN_BIAS_INIT])
  if tie_phoneme_proj:
    if d_enc != d:
      raise ShapeError('tying phoneme projections needs d_enc == d (%d != %d)' % (d_enc, d))
  else:
    params['Wpq'] = rng.uniform(-scale, scale, size=(d_p, d_enc))
  if not tie_embed:
    embed = rng.uniform(-scale, scale, size=(vocab_size + 1, d))
    embed[0] = 0.0
    params['dec_embed'] = embed
  return params


@dataclass(frozen=True, eq=False)
class PtrDistribution:
  """Pointer probabilities over the pieces of the active nodes."""
  active_ids: Tuple[int, ...]
  probs: np.ndarray
  node_ids: Tuple[int, ...] = ()

  def prob(self, piece):
    for i, p in enumerate(self.active_ids):
      if p == piece:
        return float(self.probs[i])
    return 0.0

  def as_dict(self):
    return {p: float(v) for p, v in zip(self.active_ids, self.probs)}

  def dense(self, size):
    out = np.zeros(size)
    out[list(self.active_ids)] = self.probs
    return out


def _vec(x, size, name):
  x = np.asarray(x, dtype=np.float64)
  if x.shape != (size,):
    raise ShapeError('%s has shape %r, expected (%d,)' % (name, x.shape, size))
  return x


def compute_query(head, h_enc, y_prev, h_ctc=None):
  """
  Inputs:
  - head: TcpgenHead
  - h_enc: encoder state, shape (d_enc,)
  - y_prev: previous piece id; 0 (start of sequence) embeds to zero
  - h_ctc: optional CTC phoneme embedding, shape (d_p,)

  Returns the query, shape (d_att,).
  """
  h_enc = _vec(h_enc, head.d_enc, 'h_enc')
  emb = head.decoder_embed
  if not 0 <= y_prev < emb.shape[0]:
    raise ShapeError('previous piece id %d outside vocabulary' % y_prev)
  x = h_enc
  if h_ctc is not None:
    wpq = head.query_phoneme_proj
    x = h_enc + _vec(h_ctc, wpq.shape[0], 'h_ctc').dot(wpq)
  q = x.dot(head.Wq)
  if y_prev != 0:
    q = q + emb[y_prev].dot(head.Wq2)
  return q


def ctc_phoneme_embedding(posterior, inv, phoneme_embed):
  """
  Embedding of the most probable non-blank phoneme of one CTC frame; ties go
  to the lowest inventory index.
  """
  posterior = np.asarray(posterior, dtype=np.float64)
  if posterior.shape != (len(inv),) or phoneme_embed.shape[0] != len(inv):
    raise ShapeError('posterior %r and table %r do not match an inventory of %d'
                     % (posterior.shape, phoneme_embed.shape, len(inv)))
  best = 1 + int(np.argmax(posterior[1:]))
  return phoneme_embed[best]


def ptr_distribution(head, q, htree, active, tree):
  """
  Inputs:
  - head: TcpgenHead
  - q: query, shape (d_att,)
  - htree: node encodings, shape (N+1, d)
  - active: non-empty sequence of node ids
  - tree: PrefixTree

  Returns a PtrDistribution over the pieces of the active nodes.
  """
  active = tuple(active)
  pieces = tuple(tree.piece(n) for n in active)
  if len(set(pieces)) != len(pieces):
    raise DuplicateActivePiece('active nodes %r share a piece' % (active,))
  keys = htree[list(active)].dot(head.Wk)
  logits = keys.dot(q) / np.sqrt(head.d_att)
  return PtrDistribution(active_ids=pieces, probs=softmax(logits), node_ids=active)


def pointer_context(dist, head, htree, tree=None):
  """Probability-weighted sum of the active nodes' values, shape (d_att,)."""
  values = htree[list(dist.node_ids)].dot(head.Wv)
  return dist.probs.dot(values)


def generation_prob(head, h_joint, h_ptr):
  x = np.concatenate([_vec(h_joint, head.d_joint, 'h_joint'), _vec(h_ptr, head.d_att, 'h_ptr')])
  return float(expit(x.dot(head.Wgen) + head.bgen[0]))


def interpolate(p_rnnt, p_ptr, p_gen):
  """
  (1 - p_gen) * p_rnnt + p_gen * p_ptr over the dense vocabulary, blank at
  index 0.
  """
  p_rnnt = np.asarray(p_rnnt, dtype=np.float64)
  if abs(p_rnnt.sum() - 1.0) > NORM_TOL:
    raise NotNormalized('base distribution sums to %r' % p_rnnt.sum())
  if abs(p_ptr.probs.sum() - 1.0) > NORM_TOL:
    raise NotNormalized('pointer distribution sums to %r' % p_ptr.probs.sum())
  if not 0.0 <= p_gen <= 1.0:
    raise NotNormalized('generation probability %r outside [0, 1]' % p_gen)
  if 0 in p_ptr.active_ids:
    raise NotNormalized('pointer distribution puts mass on blank')
  return (1.0 - p_gen) * p_rnnt + p_gen * p_ptr.dense(p_rnnt.shape[0])


def head_gradients(model, batch):
  """
  Mean negative log-likelihood of the batch targets and its gradients for
  every head, GCN and embedding parameter.

  Inputs:
  - model: TcpgenNet owning the shared params dict
  - batch: list of TrainingExample

  Returns a tuple of (loss, grads) with grads keyed like model.params.
  """
  loss, grads = model.loss(batch)
  if not np.isfinite(loss):
    raise InfiniteLoss('loss is %r' % loss)
  return loss, grads
