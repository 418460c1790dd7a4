"""
Update rules used by the Solver. Every rule has the signature

  next_w, config = rule(w, dw, config)

Inputs:
  - w: Current value of one parameter array.
  - dw: Gradient of the loss with respect to w, same shape.
  - config: Per-parameter dict of hyperparameters (learning_rate, ...). Rules
    that keep running statistics store them in this dict too, so the solver
    keeps one config per parameter name.

Returns a tuple of:
  - next_w: The updated parameter, a new array.
  - config: The dict to hand back on the following step.

w is never written in place; the encoder and head views read the model's
params dict and the solver swaps in next_w.
"""
import numpy as np

UPDATE_RULES = ('sgd', 'sgd_momentum', 'rmsprop', 'adam')


def _with_defaults(config, **defaults):
  config = {} if config is None else config
  for key, value in defaults.items():
    config.setdefault(key, value)
  return config


def sgd(w, dw, config=None):
  """Plain gradient step. Keys: learning_rate."""
  config = _with_defaults(config, learning_rate=1e-2)
  return w - config['learning_rate'] * dw, config


def sgd_momentum(w, dw, config=None):
  """
  Gradient step with a velocity term; momentum=0 gives sgd.

  Keys: learning_rate, momentum, velocity (running, created on first use).
  """
  config = _with_defaults(config, learning_rate=1e-2, momentum=0.9)
  velocity = config.get('velocity')
  if velocity is None:
    velocity = np.zeros_like(w)
  velocity = config['momentum'] * velocity - config['learning_rate'] * dw
  config['velocity'] = velocity
  return w + velocity, config


def rmsprop(w, dw, config=None):
  """
  Scales each coordinate by a running root mean square of its gradient.

  Keys: learning_rate, decay_rate, epsilon, cache (running).
  """
  config = _with_defaults(config, learning_rate=1e-2, decay_rate=0.99, epsilon=1e-8)
  rho = config['decay_rate']
  cache = config.get('cache')
  if cache is None:
    cache = np.zeros_like(w)
  cache = rho * cache + (1.0 - rho) * np.square(dw)
  config['cache'] = cache
  step = config['learning_rate'] * dw / (np.sqrt(cache) + config['epsilon'])
  return w - step, config


def adam(w, dw, config=None):
  """
  Adam with bias-corrected first and second moments.

  Keys: learning_rate, beta1, beta2, epsilon, and the running m, v, t.
  """
  config = _with_defaults(config, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                          epsilon=1e-8, t=0)
  b1, b2 = config['beta1'], config['beta2']
  m = config.get('m')
  v = config.get('v')
  if m is None:
    m, v = np.zeros_like(w), np.zeros_like(w)
  t = config['t'] + 1
  m = b1 * m + (1.0 - b1) * dw
  v = b2 * v + (1.0 - b2) * np.square(dw)
  config.update(m=m, v=v, t=t)
  m_hat = m / (1.0 - b1 ** t)
  v_hat = v / (1.0 - b2 ** t)
  return w - config['learning_rate'] * m_hat / (np.sqrt(v_hat) + config['epsilon']), config
