import numpy as np
import pytest
from scipy.special import softmax

from biasing.gradient_check import eval_numerical_gradient, grad_error, rel_error
from biasing.layer_utils import (gcn_stack_backward, gcn_stack_forward,
                                 pointer_attention_backward, pointer_attention_forward,
                                 query_backward, query_forward)
from biasing.layers import (affine_backward, affine_forward, gather_rows_backward,
                            gather_rows_forward, gcn_backward, gcn_forward,
                            masked_softmax_backward, masked_softmax_forward,
                            pointer_mixture_loss, relu_backward, relu_forward,
                            sigmoid_backward, sigmoid_forward)


def _check(forward, backward, x, dout, tol=1e-7):
  num = eval_numerical_gradient(lambda _: np.sum(forward(x) * dout), x)
  assert grad_error(backward(dout), num) < tol


def test_affine_gradients(rng):
  x = rng.normal(size=(4, 3))
  w = rng.normal(size=(3, 5))
  b = rng.normal(size=5)
  dout = rng.normal(size=(4, 5))
  _, cache = affine_forward(x, w, b)
  dx, dw, db = affine_backward(dout, cache)
  _check(lambda x: affine_forward(x, w, b)[0], lambda d: dx, x, dout)
  _check(lambda w: affine_forward(x, w, b)[0], lambda d: dw, w, dout)
  _check(lambda b: affine_forward(x, w, b)[0], lambda d: db, b, dout)
  assert affine_backward(dout, affine_forward(x, w)[1])[2] is None


def test_relu_and_sigmoid(rng):
  x = rng.normal(size=(3, 4))
  x[np.abs(x) < 1e-3] = 0.5
  dout = rng.normal(size=x.shape)
  out, cache = relu_forward(x)
  assert np.all(out >= 0)
  _check(lambda x: relu_forward(x)[0], lambda d: relu_backward(d, cache), x, dout)
  out, cache = sigmoid_forward(x)
  _check(lambda x: sigmoid_forward(x)[0], lambda d: sigmoid_backward(d, cache), x, dout)
  assert sigmoid_forward(np.zeros(1))[0][0] == 0.5


def test_gcn_layer_gradients(rng):
  s = rng.uniform(size=(5, 5))
  s = (s + s.T) / 2
  x = rng.normal(size=(5, 3))
  w = rng.normal(size=(3, 3))
  dout = rng.normal(size=(5, 3))
  _, cache = gcn_forward(x, s, w)
  dx, dw = gcn_backward(dout, cache)
  _check(lambda x: gcn_forward(x, s, w)[0], lambda d: dx, x, dout, tol=1e-6)
  _check(lambda w: gcn_forward(x, s, w)[0], lambda d: dw, w, dout, tol=1e-6)


def test_gcn_stack_with_no_layers_is_identity(rng):
  x = rng.normal(size=(4, 3))
  out, cache = gcn_stack_forward(x, np.eye(4), [])
  np.testing.assert_array_equal(out, x)
  dx, dws = gcn_stack_backward(np.ones_like(x), cache)
  np.testing.assert_array_equal(dx, np.ones_like(x))
  assert dws == []


def test_gather_rows(rng):
  table = rng.normal(size=(6, 3))
  ids = np.array([0, 2, 2, 5])
  out, cache = gather_rows_forward(ids, table)
  np.testing.assert_array_equal(out[0], np.zeros(3))
  np.testing.assert_array_equal(out[1], table[2])
  dout = rng.normal(size=out.shape)
  dtable = gather_rows_backward(dout, cache)
  np.testing.assert_array_equal(dtable[0], np.zeros(3))
  np.testing.assert_allclose(dtable[2], dout[1] + dout[2])
  _check(lambda t: gather_rows_forward(ids, t)[0], lambda d: dtable, table, dout)


def test_masked_softmax_matches_dense_softmax(rng):
  for _ in range(1000):
    n = int(rng.integers(1, 12))
    x = rng.normal(scale=3.0, size=(1, n))
    mask = rng.random(size=(1, n)) < 0.5
    mask[0, rng.integers(n)] = True
    out, _ = masked_softmax_forward(x, mask)
    dense = softmax(np.where(mask, x, -np.inf), axis=1)
    np.testing.assert_allclose(out, dense, rtol=1e-10, atol=1e-300)
    assert np.all(out[~mask] == 0.0)


def test_masked_softmax_empty_row_and_gradient(rng):
  x = rng.normal(size=(3, 4))
  mask = np.array([[True, False, True, True], [False] * 4, [True] * 4])
  out, cache = masked_softmax_forward(x, mask)
  np.testing.assert_array_equal(out[1], np.zeros(4))
  np.testing.assert_allclose(out.sum(axis=1), [1, 0, 1], atol=1e-12)
  dout = rng.normal(size=x.shape)
  _check(lambda x: masked_softmax_forward(x, mask)[0],
         lambda d: masked_softmax_backward(d, cache), x, dout)


def test_masked_softmax_shift_invariance(rng):
  x = rng.normal(size=(2, 5))
  mask = np.ones((2, 5), dtype=bool)
  a, _ = masked_softmax_forward(x, mask)
  b, _ = masked_softmax_forward(x + 0.5, mask)
  np.testing.assert_allclose(a, b, rtol=1e-12)


def test_query_gradients(rng):
  S, d_enc, d, d_att, d_p, V = 4, 3, 5, 2, 3, 6
  h_enc = rng.normal(size=(S, d_enc))
  y_prev = np.array([0, 1, 4, 6])
  wq = rng.normal(size=(d_enc, d_att))
  wq2 = rng.normal(size=(d, d_att))
  embed = rng.normal(size=(V + 1, d))
  embed[0] = 0
  h_ctc = rng.normal(size=(S, d_p))
  wpq = rng.normal(size=(d_p, d_enc))
  dq = rng.normal(size=(S, d_att))

  q, cache = query_forward(h_enc, y_prev, wq, wq2, embed, h_ctc, wpq)
  expected = (h_enc + h_ctc.dot(wpq)).dot(wq) + embed[y_prev].dot(wq2)
  np.testing.assert_allclose(q, expected, rtol=1e-12)
  dwq, dwq2, dembed, dwpq = query_backward(dq, cache)
  f = lambda _: np.sum(query_forward(h_enc, y_prev, wq, wq2, embed, h_ctc, wpq)[0] * dq)
  assert grad_error(dwq, eval_numerical_gradient(f, wq)) < 1e-7
  assert grad_error(dwq2, eval_numerical_gradient(f, wq2)) < 1e-7
  assert grad_error(dwpq, eval_numerical_gradient(f, wpq)) < 1e-7
  num = eval_numerical_gradient(f, embed)
  num[0] = 0.0
  assert grad_error(dembed, num) < 1e-7


def test_zero_ctc_embedding_leaves_query_unchanged(rng):
  h_enc = rng.normal(size=(3, 4))
  y_prev = np.array([1, 2, 0])
  wq, wq2 = rng.normal(size=(4, 2)), rng.normal(size=(5, 2))
  embed = rng.normal(size=(4, 5))
  plain, _ = query_forward(h_enc, y_prev, wq, wq2, embed)
  aware, _ = query_forward(h_enc, y_prev, wq, wq2, embed, np.zeros((3, 6)),
                           rng.normal(size=(6, 4)))
  np.testing.assert_array_equal(plain, aware)


def test_pointer_attention_gradients(rng):
  S, M, d, d_att = 3, 5, 4, 3
  q = rng.normal(size=(S, d_att))
  h = rng.normal(size=(M, d))
  wk, wv = rng.normal(size=(d, d_att)), rng.normal(size=(d, d_att))
  mask = np.array([[False, True, True, False, False],
                   [False, False, False, True, True],
                   [False] * 5])
  dprobs = rng.normal(size=(S, M))
  dctx = rng.normal(size=(S, d_att))
  probs, ctx, cache = pointer_attention_forward(q, h, wk, wv, mask)
  np.testing.assert_array_equal(probs[2], np.zeros(M))
  np.testing.assert_array_equal(ctx[2], np.zeros(d_att))
  dq, dh, dwk, dwv = pointer_attention_backward(dprobs, dctx, cache)

  def f(_):
    p, c, _ = pointer_attention_forward(q, h, wk, wv, mask)
    return np.sum(p * dprobs) + np.sum(c * dctx)

  for analytic, x in ((dq, q), (dh, h), (dwk, wk), (dwv, wv)):
    assert grad_error(analytic, eval_numerical_gradient(f, x)) < 1e-6


def test_pointer_mixture_loss():
  p_model = np.array([0.5, 0.2])
  p_ptr = np.array([0.0, 1.0])
  gate = np.array([0.0, 0.5])
  loss, dp_ptr, dgate = pointer_mixture_loss(p_model, p_ptr, gate)
  assert loss == pytest.approx(-(np.log(0.5) + np.log(0.6)) / 2)
  f = lambda x: pointer_mixture_loss(p_model, x, gate)[0]
  num = eval_numerical_gradient(f, p_ptr.copy())
  np.testing.assert_allclose(dp_ptr, num, rtol=1e-6)
  f = lambda x: pointer_mixture_loss(p_model, p_ptr, x)[0]
  num = eval_numerical_gradient(f, gate.copy())
  np.testing.assert_allclose(dgate, num, rtol=1e-6)


def test_rel_error():
  assert rel_error(np.ones(3), np.ones(3)) == 0.0
  assert grad_error(np.array([1e-10]), np.array([0.0])) == 0.0
  assert grad_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
