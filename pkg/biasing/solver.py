import logging

import numpy as np

from biasing import optim
from biasing.errors import NumericalError

logger = logging.getLogger(__name__)


class Solver(object):
  """
  Trains a model on reference-forced utterances with one of the update rules
  in optim.py.

  Construct it with the model, the training examples and keyword options,
  then call train(). Afterwards model.params holds the parameters with the
  lowest training loss seen (the dict is updated in place, so views over it
  stay valid) and solver.loss_history holds the loss of every step.

  Example usage:

  model = TcpgenNet(vocab_size=V, d=16, d_enc=16)
  solver = Solver(model, examples, update_rule='adam',
                  optim_config={'learning_rate': 5e-2},
                  num_steps=200, seed=0)
  solver.train()

  The model must expose:
  - model.params: dict of parameter name -> numpy array.
  - model.loss(batch): takes a list of examples and returns (loss, grads),
    grads keyed like model.params.
  """

  def __init__(self, model, examples, **kwargs):
    """
    Construct a new Solver instance.

    Required arguments:
    - model: A model object conforming to the API described above
    - examples: A list of training examples

    Optional arguments:
    - update_rule: A string giving the name of an update rule in optim.py.
      Default is 'adam'.
    - optim_config: A dictionary containing hyperparameters that will be
      passed to the chosen update rule. Each update rule requires different
      hyperparameters (see optim.py) but all update rules require a
      'learning_rate' parameter so that should always be present.
    - lr_decay: A scalar for learning rate decay; after every pass over the
      examples the learning rate is multiplied by this value.
    - batch_size: Number of examples per step; None uses every example.
    - num_steps: The number of gradient steps to take.
    - frozen: Parameter names that are never updated.
    - seed: Seed of the minibatch sampler.
    - print_every: Integer; training losses are logged every print_every
      steps.
    - verbose: Boolean; if set to false then no progress is logged.
    """
    self.model = model
    self.examples = list(examples)

    # Unpack keyword arguments
    self.update_rule = kwargs.pop('update_rule', 'adam')
    self.optim_config = kwargs.pop('optim_config', {})
    self.lr_decay = kwargs.pop('lr_decay', 1.0)
    self.batch_size = kwargs.pop('batch_size', None)
    self.num_steps = kwargs.pop('num_steps', 200)
    self.frozen = set(kwargs.pop('frozen', ()))
    self.seed = kwargs.pop('seed', 0)

    self.print_every = kwargs.pop('print_every', 10)
    self.verbose = kwargs.pop('verbose', False)

    # Throw an error if there are extra keyword arguments
    if len(kwargs) > 0:
      extra = ', '.join('"%s"' % k for k in kwargs.keys())
      raise ValueError('Unrecognized arguments %s' % extra)

    if self.update_rule not in optim.UPDATE_RULES:
      raise ValueError('Invalid update_rule "%s"' % self.update_rule)
    self.update_rule = getattr(optim, self.update_rule)
    if not self.examples:
      raise ValueError('no training examples')

    self._reset()

  def _reset(self):
    self.step = 0
    self.rng = np.random.default_rng(self.seed)
    self.best_loss = np.inf
    self.best_params = {}
    self.loss_history = []

    # Make a deep copy of the optim_config for each parameter
    self.optim_configs = {}
    for p in self.model.params:
      self.optim_configs[p] = {k: v for k, v in self.optim_config.items()}

  def _batch(self):
    num_train = len(self.examples)
    if self.batch_size is None or self.batch_size >= num_train:
      return self.examples
    idx = self.rng.choice(num_train, self.batch_size, replace=False)
    return [self.examples[i] for i in sorted(idx)]

  def _step(self):
    """
    Make a single gradient update. This is called by train() and should not
    be called manually.
    """
    loss, grads = self.model.loss(self._batch())
    if not np.isfinite(loss):
      raise NumericalError('training loss became %r' % loss, step=self.step)
    self.loss_history.append(loss)

    if loss < self.best_loss:
      self.best_loss = loss
      self.best_params = {k: v.copy() for k, v in self.model.params.items()}

    for p, w in list(self.model.params.items()):
      if p in self.frozen:
        continue
      next_w, next_config = self.update_rule(w, grads[p], self.optim_configs[p])
      if not np.all(np.isfinite(next_w)):
        raise NumericalError('parameter %s became non-finite' % p, step=self.step)
      self.model.params[p] = next_w
      self.optim_configs[p] = next_config
    if 'embed' in self.model.params:
      self.model.params['embed'][0] = 0.0

  def train(self):
    """
    Run optimization to train the model. Returns the loss history.
    """
    steps_per_pass = max(len(self.examples) // (self.batch_size or len(self.examples)), 1)
    for t in range(self.num_steps):
      self.step = t
      self._step()

      if self.verbose and t % self.print_every == 0:
        logger.info('(Step %d / %d) loss: %f', t + 1, self.num_steps, self.loss_history[-1])

      if (t + 1) % steps_per_pass == 0:
        for k in self.optim_configs:
          self.optim_configs[k]['learning_rate'] = (
            self.optim_configs[k].get('learning_rate', 1e-3) * self.lr_decay)

    # the last update is not scored by a loss; keep the best scored params
    final_loss, _ = self.model.loss(self._batch())
    if np.isfinite(final_loss) and final_loss <= self.best_loss:
      self.best_loss = final_loss
    else:
      self.model.params.update(self.best_params)
    if self.verbose:
      logger.info('training done, best loss %f', self.best_loss)
    return self.loss_history
