import numpy as np

from biasing.layers import (affine_backward, affine_forward, gather_rows_backward,
                            gather_rows_forward, gcn_backward, gcn_forward,
                            masked_softmax_backward, masked_softmax_forward)


def gcn_stack_forward(x, s, weights):
  """
  Convenience layer that applies len(weights) graph convolutions sharing one
  normalized adjacency.

  Inputs:
  - x: Initial node encodings, of shape (N, D)
  - s: Normalized adjacency, of shape (N, N)
  - weights: list of (D, D) weight matrices; an empty list returns x

  Returns a tuple of:
  - out: Node encodings after the last layer
  - cache: Object to give to the backward pass
  """
  caches = []
  out = x
  for w in weights:
    out, c = gcn_forward(out, s, w)
    caches.append(c)
  return out, caches


def gcn_stack_backward(dout, cache):
  """
  Backward pass for the GCN stack.

  Returns a tuple of:
  - dx: Gradient with respect to the initial encodings
  - dws: list of weight gradients, in layer order
  """
  dws = []
  dx = dout
  for c in reversed(cache):
    dx, dw = gcn_backward(dx, c)
    dws.append(dw)
  dws.reverse()
  return dx, dws


def query_forward(h_enc, y_prev, wq, wq2, embed, h_ctc=None, wpq=None):
  """
  Attention queries for a batch of decoding steps:
  q = (h_enc + h_ctc Wpq) Wq + Emb(y_prev) Wq2.

  Inputs:
  - h_enc: Encoder states, of shape (S, d_enc)
  - y_prev: Previous piece ids, of shape (S,); id 0 embeds to zero
  - wq: (d_enc, d_att)
  - wq2: (d, d_att)
  - embed: (V+1, d) decoder-side piece embeddings
  - h_ctc: optional CTC phoneme embeddings, of shape (S, d_p)
  - wpq: (d_p, d_enc), needed with h_ctc

  Returns a tuple of:
  - q: Queries, of shape (S, d_att)
  - cache: Object to give to the backward pass
  """
  x = h_enc
  ctc_cache = None
  if h_ctc is not None:
    proj, ctc_cache = affine_forward(h_ctc, wpq)
    x = h_enc + proj
  qa, enc_cache = affine_forward(x, wq)
  e, emb_cache = gather_rows_forward(y_prev, embed)
  qb, dec_cache = affine_forward(e, wq2)
  cache = (enc_cache, emb_cache, dec_cache, ctc_cache)
  return qa + qb, cache


def query_backward(dq, cache):
  """
  Backward pass for query_forward.

  Returns a tuple of:
  - dwq, dwq2, dembed: parameter gradients
  - dwpq: gradient of the query phoneme projection, None without h_ctc
  """
  enc_cache, emb_cache, dec_cache, ctc_cache = cache
  dx, dwq, _ = affine_backward(dq, enc_cache)
  de, dwq2, _ = affine_backward(dq, dec_cache)
  dembed = gather_rows_backward(de, emb_cache)
  dwpq = None
  if ctc_cache is not None:
    _, dwpq, _ = affine_backward(dx, ctc_cache)
  return dwq, dwq2, dembed, dwpq


def pointer_attention_forward(q, h, wk, wv, mask):
  """
  Masked scaled dot-product attention of queries over tree nodes.

  Inputs:
  - q: Queries, of shape (S, d_att)
  - h: Node encodings, of shape (M, d)
  - wk, wv: Key and value weights, of shape (d, d_att)
  - mask: Boolean array of shape (S, M), True on active nodes

  Returns a tuple of:
  - probs: Node probabilities, of shape (S, M), exactly zero off the mask
  - ctx: Pointer contexts probs.dot(values), of shape (S, d_att)
  - cache: Object to give to the backward pass
  """
  scale = 1.0 / np.sqrt(wk.shape[1])
  k = h.dot(wk)
  v = h.dot(wv)
  logits = q.dot(k.T) * scale
  probs, sm_cache = masked_softmax_forward(logits, mask)
  ctx = probs.dot(v)
  cache = (q, h, wk, wv, k, v, probs, scale, sm_cache)
  return probs, ctx, cache


def pointer_attention_backward(dprobs, dctx, cache):
  """
  Backward pass for pointer_attention_forward.

  Returns a tuple of:
  - dq: (S, d_att)
  - dh: (M, d)
  - dwk, dwv: (d, d_att)
  """
  q, h, wk, wv, k, v, probs, scale, sm_cache = cache
  dprobs = dprobs + dctx.dot(v.T)
  dv = probs.T.dot(dctx)
  dlogits = masked_softmax_backward(dprobs, sm_cache) * scale
  dq = dlogits.dot(k)
  dk = dlogits.T.dot(q)
  dwk = h.T.dot(dk)
  dwv = h.T.dot(dv)
  dh = dk.dot(wk.T) + dv.dot(wv.T)
  return dq, dh, dwk, dwv
