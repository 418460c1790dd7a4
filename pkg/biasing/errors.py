"""
Exceptions raised across the biasing package.

Every error carries the offending object (word, symbol, line number, step)
as an attribute so callers can report it without parsing the message.
"""


class BiasingError(Exception):
  """Base class of all package errors."""


class ConfigError(BiasingError, ValueError):
  pass


class EmptyInput(BiasingError, ValueError):
  pass


class EmptyInventory(BiasingError, ValueError):
  pass


class DuplicatePhoneme(BiasingError, ValueError):
  def __init__(self, symbol):
    super(DuplicatePhoneme, self).__init__('duplicate phoneme symbol %r' % symbol)
    self.symbol = symbol


class UnknownPhoneme(BiasingError, ValueError):
  def __init__(self, word, symbol):
    super(UnknownPhoneme, self).__init__(
      'word %r uses unknown phoneme %r' % (word, symbol))
    self.word = word
    self.symbol = symbol


class ParseError(BiasingError, ValueError):
  def __init__(self, line, reason=''):
    msg = 'malformed input at line %d' % line
    if reason:
      msg += ': ' + reason
    super(ParseError, self).__init__(msg)
    self.line = line


class MissingPronunciation(BiasingError, KeyError):
  def __init__(self, word):
    super(MissingPronunciation, self).__init__(word)
    self.word = word

  def __str__(self):
    return 'no pronunciation for %r' % self.word


class UnalignableEntry(BiasingError, ValueError):
  def __init__(self, word):
    super(UnalignableEntry, self).__init__(
      'no monotonic chunk path aligns %r' % word)
    self.word = word


class NumericalError(BiasingError, ArithmeticError):
  def __init__(self, message, step=None):
    if step is not None:
      message = '%s (step %d)' % (message, step)
    super(NumericalError, self).__init__(message)
    self.step = step


class ShapeError(BiasingError, ValueError):
  pass


class NotColumnStochastic(BiasingError, ValueError):
  pass


class InvalidSegmentation(BiasingError, ValueError):
  pass


class UnknownCharacter(BiasingError, ValueError):
  def __init__(self, word, position):
    super(UnknownCharacter, self).__init__(
      'cannot cover character %d of %r' % (position, word))
    self.word = word
    self.position = position


class MalformedSequence(BiasingError, ValueError):
  pass


class InvariantBreach(BiasingError, AssertionError):
  pass


class MissingAlignment(BiasingError, KeyError):
  def __init__(self, word):
    super(MissingAlignment, self).__init__(word)
    self.word = word

  def __str__(self):
    return 'no alignment for %r' % self.word


class DuplicateActivePiece(BiasingError, AssertionError):
  pass


class NotNormalized(BiasingError, ValueError):
  pass


class InfiniteLoss(BiasingError, ArithmeticError):
  pass


class InvalidConfusion(BiasingError, ValueError):
  pass
