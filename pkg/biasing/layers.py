import numpy as np
from scipy.special import expit


def affine_forward(x, w, b=None):
  """
  Computes the forward pass for an affine (fully-connected) layer.

  The input x has shape (N, d_1, ..., d_k) and contains a minibatch of N
  examples. Each example is reshaped into a vector of dimension
  D = d_1 * ... * d_k and mapped to an output vector of dimension M.

  Inputs:
  - x: A numpy array containing input data, of shape (N, d_1, ..., d_k)
  - w: A numpy array of weights, of shape (D, M)
  - b: A numpy array of biases, of shape (M,), or None for no bias

  Returns a tuple of:
  - out: output, of shape (N, M)
  - cache: (x, w, b)
  """
  out = x.reshape(x.shape[0], -1).dot(w)
  if b is not None:
    out = out + b
  cache = (x, w, b)
  return out, cache


def affine_backward(dout, cache):
  """
  Computes the backward pass for an affine layer.

  Inputs:
  - dout: Upstream derivative, of shape (N, M)
  - cache: Tuple of (x, w, b) from affine_forward

  Returns a tuple of:
  - dx: Gradient with respect to x, of shape (N, d1, ..., d_k)
  - dw: Gradient with respect to w, of shape (D, M)
  - db: Gradient with respect to b, of shape (M,), None when there is no bias
  """
  x, w, b = cache
  dx = dout.dot(w.T).reshape(x.shape)
  dw = x.reshape(x.shape[0], -1).T.dot(dout)
  db = np.sum(dout, axis=0) if b is not None else None
  return dx, dw, db


def relu_forward(x):
  """
  Computes the forward pass for a layer of rectified linear units (ReLUs).

  Input:
  - x: Inputs, of any shape

  Returns a tuple of:
  - out: Output, of the same shape as x
  - cache: x
  """
  out = np.maximum(0, x)
  cache = x
  return out, cache


def relu_backward(dout, cache):
  """
  Computes the backward pass for a layer of rectified linear units (ReLUs).

  Input:
  - dout: Upstream derivatives, of any shape
  - cache: Input x, of same shape as dout

  Returns:
  - dx: Gradient with respect to x
  """
  x = cache
  dx = np.where(x > 0, dout, 0.0)
  return dx


def sigmoid_forward(x):
  """
  Logistic sigmoid, elementwise.

  Returns a tuple of:
  - out: sigma(x), same shape as x
  - cache: out
  """
  out = expit(x)
  return out, out


def sigmoid_backward(dout, cache):
  out = cache
  return dout * out * (1.0 - out)


def gcn_forward(x, s, w):
  """
  One graph convolution: Relu(S x W) where S is the symmetrically normalized
  adjacency D^-1/2 A D^-1/2 (computed once by the caller).

  Inputs:
  - x: Node encodings, of shape (N, D)
  - s: Normalized adjacency, of shape (N, N)
  - w: Weights, of shape (D, M)

  Returns a tuple of:
  - out: Node encodings, of shape (N, M)
  - cache: Values needed for the backward pass
  """
  sx = s.dot(x)
  a = sx.dot(w)
  out, relu_cache = relu_forward(a)
  cache = (sx, s, w, relu_cache)
  return out, cache


def gcn_backward(dout, cache):
  """
  Backward pass for one graph convolution.

  Returns a tuple of:
  - dx: Gradient with respect to x, of shape (N, D)
  - dw: Gradient with respect to w, of shape (D, M)
  """
  sx, s, w, relu_cache = cache
  da = relu_backward(dout, relu_cache)
  dw = sx.T.dot(da)
  dx = s.T.dot(da.dot(w.T))
  return dx, dw


def gather_rows_forward(ids, table):
  """
  Row lookup where id 0 (blank / start of sequence) maps to a zero vector.

  Inputs:
  - ids: Integer array of shape (N,)
  - table: Embedding table of shape (V + 1, D)

  Returns a tuple of:
  - out: Embeddings, of shape (N, D)
  - cache: (ids, table shape)
  """
  ids = np.asarray(ids, dtype=np.int64)
  out = table[ids]
  out[ids == 0] = 0.0
  return out, (ids, table.shape)


def gather_rows_backward(dout, cache):
  """
  Scatter-add upstream gradients into the rows that were looked up. Row 0
  receives no gradient.
  """
  ids, shape = cache
  dtable = np.zeros(shape)
  np.add.at(dtable, ids, dout)
  dtable[0] = 0.0
  return dtable


def masked_softmax_forward(x, mask):
  """
  Softmax over the entries of each row where mask is True. Masked-out entries
  get exactly zero; a row with no True entry is all zeros.

  Inputs:
  - x: Scores, of shape (N, C)
  - mask: Boolean array of shape (N, C)

  Returns a tuple of:
  - out: Probabilities, of shape (N, C)
  - cache: out
  """
  shifted = np.where(mask, x, -np.inf)
  row_max = np.max(shifted, axis=1, keepdims=True)
  row_max = np.where(np.isfinite(row_max), row_max, 0.0)
  e = np.where(mask, np.exp(np.where(mask, x, 0.0) - row_max), 0.0)
  z = np.sum(e, axis=1, keepdims=True)
  out = np.divide(e, z, out=np.zeros_like(e), where=z > 0)
  return out, out


def masked_softmax_backward(dout, cache):
  out = cache
  return out * (dout - np.sum(out * dout, axis=1, keepdims=True))


def pointer_mixture_loss(p_model, p_ptr, gate, num_total=None):
  """
  Negative log-likelihood of targets under the interpolation
  P = (1 - gate) * p_model + gate * p_ptr.

  Inputs:
  - p_model: Base model probability of each target, of shape (N,)
  - p_ptr: Pointer probability of each target, of shape (N,)
  - gate: Generation probability at each step, of shape (N,)
  - num_total: Normalizer of the summed loss; defaults to N

  Returns a tuple of:
  - loss: Scalar giving the loss
  - dp_ptr: Gradient of the loss with respect to p_ptr
  - dgate: Gradient of the loss with respect to gate
  """
  n = p_model.shape[0] if num_total is None else num_total
  p = (1.0 - gate) * p_model + gate * p_ptr
  loss = -np.sum(np.log(p)) / n
  dp = -1.0 / (p * n)
  dp_ptr = dp * gate
  dgate = dp * (p_ptr - p_model)
  return loss, dp_ptr, dgate
