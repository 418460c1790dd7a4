"""
Phoneme inventories, pronunciation lexicons and biasing lists.

File formats (UTF-8, LF):
- inventory: one phoneme symbol per line; the CTC blank is prepended at id 0.
- lexicon: ``word<TAB>ph1 ph2 ...``; a later line for the same word replaces
  the earlier one.
- biasing list: one word per line.

Words are case-sensitive; callers that want uppercase words pass
``uppercase=True``. Characters are Unicode code points, so a kanji is one
character.
"""
import io
import logging
from dataclasses import dataclass
from typing import Tuple

from biasing.errors import (DuplicatePhoneme, EmptyInventory, MissingPronunciation,
                            ParseError, UnknownPhoneme)

logger = logging.getLogger(__name__)

BLANK = '<blank>'


class PhonemeInventory(object):
  """
  Ordered phoneme symbols with the blank reserved at index 0.

  Inputs:
  - symbols: phoneme symbols, blank excluded, in file order
  """

  blank_id = 0

  def __init__(self, symbols):
    seen = set()
    for s in symbols:
      if not s or s == BLANK or s in seen:
        raise DuplicatePhoneme(s)
      seen.add(s)
    if not seen:
      raise EmptyInventory('phoneme inventory is empty')
    self.symbols = (BLANK,) + tuple(symbols)
    self._index = {s: i for i, s in enumerate(self.symbols)}

  def __len__(self):
    return len(self.symbols)

  def __contains__(self, symbol):
    return symbol in self._index and symbol != BLANK

  def __eq__(self, other):
    return isinstance(other, PhonemeInventory) and self.symbols == other.symbols

  def __hash__(self):
    return hash(self.symbols)

  def id(self, symbol):
    return self._index[symbol]

  def symbol(self, idx):
    return self.symbols[idx]


@dataclass(frozen=True)
class LexiconEntry:
  word: str
  chars: Tuple[str, ...]
  phonemes: Tuple[int, ...]

  @property
  def l_c(self):
    return len(self.chars)

  @property
  def l_p(self):
    return len(self.phonemes)

  @classmethod
  def create(cls, word, phonemes):
    return cls(word=word, chars=tuple(word), phonemes=tuple(int(p) for p in phonemes))


class Lexicon(dict):
  """
  Map word -> LexiconEntry. ``overrides`` counts the lines that replaced an
  earlier pronunciation of the same word while loading.
  """

  def __init__(self, *args, **kwargs):
    super(Lexicon, self).__init__(*args, **kwargs)
    self.overrides = 0


@dataclass(frozen=True)
class BiasingList:
  name: str
  entries: Tuple[LexiconEntry, ...]

  @property
  def words(self):
    return tuple(e.word for e in self.entries)

  def __len__(self):
    return len(self.entries)

  def __iter__(self):
    return iter(self.entries)


def _read_lines(path):
  with io.open(path, 'r', encoding='utf-8', newline='\n') as f:
    return [line.rstrip('\n').rstrip('\r') for line in f]


def load_inventory(path):
  """
  Load a phoneme inventory, one symbol per line. Blank lines are ignored.

  Returns a PhonemeInventory whose symbol i+1 is line i of the file.
  """
  symbols = [line.strip() for line in _read_lines(path)]
  symbols = [s for s in symbols if s]
  if not symbols:
    raise EmptyInventory('no phoneme symbols in %s' % path)
  return PhonemeInventory(symbols)


def parse_lexicon_line(line, lineno, inv, uppercase=False):
  if '\t' not in line:
    raise ParseError(lineno, 'expected word<TAB>phonemes')
  word, pron = line.split('\t', 1)
  if uppercase:
    word = word.upper()
  symbols = pron.split()
  if not word or not symbols or word != word.strip():
    raise ParseError(lineno, 'empty word or pronunciation')
  ids = []
  for s in symbols:
    if s not in inv:
      raise UnknownPhoneme(word, s)
    ids.append(inv.id(s))
  return LexiconEntry.create(word, ids)


def load_lexicon(path, inv, uppercase=False):
  """
  Load a TSV pronunciation lexicon.

  Inputs:
  - path: lexicon file
  - inv: PhonemeInventory the pronunciations are validated against
  - uppercase: uppercase every word before storing it

  Returns a Lexicon. Only the last pronunciation of a repeated word is kept.
  """
  lexicon = Lexicon()
  for lineno, line in enumerate(_read_lines(path), 1):
    if not line.strip():
      continue
    entry = parse_lexicon_line(line, lineno, inv, uppercase)
    if entry.word in lexicon:
      lexicon.overrides += 1
    lexicon[entry.word] = entry
  if lexicon.overrides:
    logger.warning('%s: %d repeated words, kept the last pronunciation',
                   path, lexicon.overrides)
  return lexicon


def save_lexicon(lexicon, inv, path):
  with io.open(path, 'w', encoding='utf-8', newline='\n') as f:
    for word in sorted(lexicon):
      entry = lexicon[word]
      f.write('%s\t%s\n' % (word, ' '.join(inv.symbol(p) for p in entry.phonemes)))


def make_biasing_list(words, lexicon, name='list'):
  """
  Resolve words against a lexicon, dropping repeats (first occurrence wins).
  """
  entries = []
  seen = set()
  for w in words:
    if w in seen:
      continue
    if w not in lexicon:
      raise MissingPronunciation(w)
    seen.add(w)
    entries.append(lexicon[w])
  return BiasingList(name=name, entries=tuple(entries))


def load_biasing_list(path, lexicon, name=None, uppercase=False):
  words = [line.strip() for line in _read_lines(path)]
  words = [w.upper() if uppercase else w for w in words if w]
  if name is None:
    name = str(path)
  return make_biasing_list(words, lexicon, name=name)
