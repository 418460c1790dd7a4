import logging

import numpy as np

logger = logging.getLogger(__name__)

ABS_FLOOR = 1e-8


def eval_numerical_gradient(f, x, verbose=False, h=1e-6):
  """
  a naive implementation of numerical gradient of f at x
  - f should be a function that takes a single argument
  - x is the point (numpy array) to evaluate the gradient at; it is
    perturbed in place and restored
  """
  grad = np.zeros_like(x)
  # iterate over all indexes in x
  it = np.nditer(x, flags=['multi_index'], op_flags=['readwrite'])
  while not it.finished:

    # evaluate function at x+h
    ix = it.multi_index
    oldval = x[ix]
    x[ix] = oldval + h
    fxph = f(x)
    x[ix] = oldval - h
    fxmh = f(x)
    x[ix] = oldval

    # compute the partial derivative with centered formula
    grad[ix] = (fxph - fxmh) / (2 * h)
    if verbose:
      logger.debug('%s %g', ix, grad[ix])
    it.iternext()

  return grad


def rel_error(x, y):
  """ returns relative error """
  return np.max(np.abs(x - y) / (np.maximum(1e-8, np.abs(x) + np.abs(y))))


def grad_error(analytic, numeric, abs_floor=ABS_FLOOR):
  """
  Largest relative error over entries whose absolute difference exceeds
  abs_floor; 0.0 when every entry is within the floor.
  """
  diff = np.abs(analytic - numeric)
  scale = np.maximum(np.abs(analytic), np.abs(numeric))
  rel = np.where(diff <= abs_floor, 0.0, diff / np.maximum(scale, 1e-300))
  return float(np.max(rel)) if rel.size else 0.0


def check_model_gradients(model, batch, h=1e-6, names=None):
  """
  Compare model.loss analytic gradients with central differences.

  Inputs:
  - model: object with params dict and loss(batch) -> (loss, grads)
  - batch: argument passed to model.loss
  - h: finite-difference step
  - names: parameter names to check, all by default

  Returns a dict name -> grad_error.
  """
  _, grads = model.loss(batch)
  errors = {}
  for name in sorted(names or model.params):
    x = model.params[name]
    f = lambda _: model.loss(batch)[0]
    num = eval_numerical_gradient(f, x, h=h)
    errors[name] = grad_error(grads[name], num)
    logger.debug('%s max relative error %e', name, errors[name])
  return errors
