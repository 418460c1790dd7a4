import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from biasing.biastrie import adjacency
from biasing.encoder import (BOTH, GRAPHEME, ONE_HOT, ONE_HOT_LINEAR, PHONEME,
                             EncoderParams, encode_tree, init_encoder_params,
                             node_pieces, normalize_adjacency)
from biasing.errors import ConfigError, InfiniteLoss
from biasing.layer_utils import (gcn_stack_backward, gcn_stack_forward,
                                 pointer_attention_backward, pointer_attention_forward,
                                 query_backward, query_forward)
from biasing.layers import (gather_rows_backward, gather_rows_forward,
                            pointer_mixture_loss, sigmoid_backward, sigmoid_forward)
from biasing.tcpgen import TcpgenHead, init_head_params

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class TrainingExample:
  """
  All reference-forced decoding steps of one utterance.

  - tree: PrefixTree of the utterance's biasing list
  - features: (N+1, d_p) phoneme features of the tree nodes, or None
  - h_enc: (S, d_enc) encoder state at each step
  - y_prev: (S,) last emitted piece before each step, 0 at the start
  - h_joint: (S, d_joint) joint state at each step
  - p_target: (S,) base model probability of each step's target
  - target_node: (S,) active node carrying the target piece, or -1
  - mask: (S, N+1) active nodes at each step
  - h_ctc: (S, d_p) CTC phoneme embeddings, or None
  """
  tree: object
  features: Optional[np.ndarray]
  h_enc: np.ndarray
  y_prev: np.ndarray
  h_joint: np.ndarray
  p_target: np.ndarray
  target_node: np.ndarray
  mask: np.ndarray
  h_ctc: Optional[np.ndarray] = None

  @property
  def num_steps(self):
    return self.h_enc.shape[0]


class TcpgenNet(object):
  """
  Tree encoder (embeddings, phoneme encodings, GCN) plus pointer-generator
  head, trained on the interpolated likelihood of forced targets.

  The learnable parameters of the model are stored in the dictionary
  self.params; self.encoder and self.head are views over the same dict.
  """

  def __init__(self, vocab_size, d=16, d_enc=16, d_att=None, d_joint=None, d_p=None,
               num_layers=6, encoding=BOTH, phoneme_embed=ONE_HOT_LINEAR,
               include_root=True, tie_embed=True, tie_phoneme_proj=False,
               reg=0.0, seed=0):
    """
    Initialize a new network.

    Inputs:
    - vocab_size: V, the number of real pieces
    - d: node encoding size
    - d_enc: encoder state size
    - d_att: attention size, defaults to d
    - d_joint: joint state size, defaults to V + 1
    - d_p: phoneme feature size, defaults to d
    - num_layers: number of GCN layers
    - encoding: 'grapheme', 'phoneme' or 'both'
    - phoneme_embed: 'oh', 'oh+' or 'external'
    - include_root: connect depth-1 nodes to the root row
    - tie_embed: share the piece embedding between tree and query
    - tie_phoneme_proj: reuse the tree phoneme projection Wp on the query side
    - reg: Scalar giving L2 regularization strength
    - seed: seed of the initialization generator
    """
    d_att = d if d_att is None else d_att
    d_joint = vocab_size + 1 if d_joint is None else d_joint
    d_p = d if d_p is None else d_p
    if tie_phoneme_proj and phoneme_embed == ONE_HOT:
      raise ConfigError('one-hot phoneme embeddings have no projection to tie')
    self.vocab_size = vocab_size
    self.dims = {'V': vocab_size, 'd': d, 'd_enc': d_enc, 'd_att': d_att,
                 'd_joint': d_joint, 'd_p': d_p, 'L': num_layers}
    self.reg = reg
    self.seed = seed

    rng = np.random.default_rng(seed)
    self.params = {}
    init_encoder_params(self.params, vocab_size, d, d_p, num_layers, phoneme_embed, rng)
    init_head_params(self.params, d_enc, d, d_att, d_joint, d_p, vocab_size, rng,
                     tie_embed=tie_embed, tie_phoneme_proj=tie_phoneme_proj)
    self.encoder = EncoderParams(self.params, num_layers, encoding, phoneme_embed,
                                 include_root)
    self.head = TcpgenHead(self.params, tie_embed, tie_phoneme_proj)

  def config(self):
    return dict(self.dims, encoding=self.encoder.encoding,
                phoneme_embed=self.encoder.phoneme_embed_mode,
                include_root=self.encoder.include_root, tie_embed=self.head.tie_embed,
                tie_phoneme_proj=self.head.tie_phoneme_proj, reg=self.reg, seed=self.seed)

  def encode(self, tree, features=None):
    """H_L of the tree under the current parameters."""
    return encode_tree(tree, self.encoder, features)

  def _tree_forward(self, ex):
    enc = self.encoder
    size = ex.tree.N + 1
    s = normalize_adjacency(*adjacency(ex.tree, include_root=enc.include_root))
    emb_cache = None
    if enc.encoding == PHONEME:
      h0 = np.zeros((size, enc.d))
    else:
      h0, emb_cache = gather_rows_forward(node_pieces(ex.tree), enc.piece_embed)
    if enc.encoding != GRAPHEME:
      h0 = h0 + ex.features.dot(enc.phoneme_proj)
    h0[0] = enc.root_embed
    hl, gcn_cache = gcn_stack_forward(h0, s, enc.gcn_weights)
    return hl, (emb_cache, gcn_cache)

  def _tree_backward(self, dhl, cache, ex, grads):
    enc = self.encoder
    emb_cache, gcn_cache = cache
    dh0, dws = gcn_stack_backward(dhl, gcn_cache)
    for i, dw in enumerate(dws):
      grads['W%d' % (i + 1)] += dw
    grads['root'] += dh0[0]
    dh0[0] = 0.0
    if emb_cache is not None:
      grads['embed'] += gather_rows_backward(dh0, emb_cache)
    if enc.encoding != GRAPHEME and 'Wp' in grads:
      grads['Wp'] += ex.features.T.dot(dh0)

  def _head_forward(self, ex, hl):
    head = self.head
    d_joint = head.d_joint
    wpq = head.query_phoneme_proj if ex.h_ctc is not None else None
    q, q_cache = query_forward(ex.h_enc, ex.y_prev, head.Wq, head.Wq2,
                               head.decoder_embed, ex.h_ctc, wpq)
    probs, ctx, att_cache = pointer_attention_forward(q, hl, head.Wk, head.Wv, ex.mask)
    has_active = ex.mask.any(axis=1)
    z = ex.h_joint.dot(head.Wgen[:d_joint]) + ctx.dot(head.Wgen[d_joint:]) + head.bgen[0]
    gate, sig_cache = sigmoid_forward(z)
    gate = np.where(has_active, gate, 0.0)
    return probs, ctx, gate, has_active, (q_cache, att_cache, sig_cache)

  def generation_probs(self, ex):
    """(S,) generation probability at every step of one example."""
    hl, _ = self._tree_forward(ex)
    return self._head_forward(ex, hl)[2]

  def loss(self, batch):
    """
    Compute loss and gradient for a minibatch of utterances.

    Inputs:
    - batch: list of TrainingExample

    Returns a tuple of:
    - loss: mean over all steps of -log P(target), where
      P = (1 - p_gen) p_rnnt(target) + p_gen p_ptr(target)
    - grads: Dictionary with the same keys as self.params
    """
    head = self.head
    w_ptr = head.Wgen[head.d_joint:]
    grads = {k: np.zeros_like(v) for k, v in self.params.items()}
    total = sum(ex.num_steps for ex in batch)
    loss = 0.0

    for ex in batch:
      hl, tree_cache = self._tree_forward(ex)

      probs, ctx, gate, has_active, caches = self._head_forward(ex, hl)
      q_cache, att_cache, sig_cache = caches

      steps = np.arange(ex.num_steps)
      hit = ex.target_node >= 0
      p_ptr = np.zeros(ex.num_steps)
      p_ptr[hit] = probs[steps[hit], ex.target_node[hit]]

      mix = (1.0 - gate) * ex.p_target + gate * p_ptr
      if np.any(mix <= 0) or not np.all(np.isfinite(mix)):
        raise InfiniteLoss('a target has zero probability')
      ex_loss, dp_ptr, dgate = pointer_mixture_loss(ex.p_target, p_ptr, gate, total)
      loss += ex_loss

      dz = np.where(has_active, sigmoid_backward(dgate, sig_cache), 0.0)
      grads['Wgen'] += np.concatenate([ex.h_joint.T.dot(dz), ctx.T.dot(dz)])
      grads['bgen'] += np.sum(dz)
      dctx = np.outer(dz, w_ptr)
      dprobs = np.zeros_like(probs)
      dprobs[steps[hit], ex.target_node[hit]] = dp_ptr[hit]

      dq, dhl, dwk, dwv = pointer_attention_backward(dprobs, dctx, att_cache)
      grads['Wk'] += dwk
      grads['Wv'] += dwv
      dwq, dwq2, dembed, dwpq = query_backward(dq, q_cache)
      grads['Wq'] += dwq
      grads['Wq2'] += dwq2
      grads[head.embed_name] += dembed
      if dwpq is not None:
        grads[head.phoneme_proj_name] += dwpq

      self._tree_backward(dhl, tree_cache, ex, grads)

    if self.reg:
      for k, w in self.params.items():
        if k.startswith('W'):
          loss += 0.5 * self.reg * np.sum(w * w)
          grads[k] += self.reg * w

    return loss, grads
