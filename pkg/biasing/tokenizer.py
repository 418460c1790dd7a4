"""
Greedy longest-match subword segmentation with a suffix word-boundary marker.

Word-final pieces carry the marker ("THE_"), so a decoder can tell a word is
complete from the emitted piece alone. Id 0 of every vocabulary is the
blank / start-of-sequence symbol; real pieces have ids 1..V.
"""
import io
import logging
from dataclasses import dataclass
from typing import Tuple

from biasing.errors import (InvalidSegmentation, MalformedSequence, ParseError,
                            UnknownCharacter)

logger = logging.getLogger(__name__)

MARKER = '_'
BLANK_PIECE = '<blank>'


class SubwordVocab(object):
  """
  Inputs:
  - pieces: subword strings in id order, starting at id 1
  - boundary_marker: suffix that marks word-final pieces
  """

  def __init__(self, pieces, boundary_marker=MARKER):
    self.boundary_marker = boundary_marker
    self.id_to_piece = (BLANK_PIECE,) + tuple(pieces)
    self.piece_to_id = {}
    for i, p in enumerate(self.id_to_piece[1:], 1):
      if not p or p in self.piece_to_id or p == BLANK_PIECE:
        raise ValueError('vocabulary piece %r is empty or repeated' % p)
      stem = p[:-len(boundary_marker)] if p.endswith(boundary_marker) else p
      if not stem or boundary_marker in stem:
        raise ValueError('vocabulary piece %r has no stem' % p)
      self.piece_to_id[p] = i
    self.max_len = max(len(p) for p in self.id_to_piece[1:]) if pieces else 0

  @property
  def size(self):
    """V, the number of real pieces (blank excluded)."""
    return len(self.id_to_piece) - 1

  def __len__(self):
    return len(self.id_to_piece)

  def is_final(self, idx):
    return idx > 0 and self.id_to_piece[idx].endswith(self.boundary_marker)

  def stem(self, idx):
    p = self.id_to_piece[idx]
    return p[:-len(self.boundary_marker)] if self.is_final(idx) else p

  def id(self, piece):
    return self.piece_to_id[piece]

  def missing_characters(self, words):
    """Characters of ``words`` lacking a marked or an unmarked single piece."""
    missing = set()
    for w in words:
      for c in w:
        if c not in self.piece_to_id or c + self.boundary_marker not in self.piece_to_id:
          missing.add(c)
    return missing


@dataclass(frozen=True)
class Segmentation:
  piece_ids: Tuple[int, ...]
  char_spans: Tuple[Tuple[int, int], ...]

  @property
  def l_s(self):
    return len(self.piece_ids)


def load_vocab(path, boundary_marker=MARKER):
  """One piece per line; the piece on line i gets id i."""
  with io.open(path, 'r', encoding='utf-8') as f:
    pieces = [line.rstrip('\n').rstrip('\r') for line in f]
  while pieces and not pieces[-1]:
    pieces.pop()
  return SubwordVocab(pieces, boundary_marker)


def save_vocab(vocab, path):
  with io.open(path, 'w', encoding='utf-8', newline='\n') as f:
    for p in vocab.id_to_piece[1:]:
      f.write(p + '\n')


def build_vocab(words, pieces=(), boundary_marker=MARKER):
  """
  Build a complete vocabulary for ``words``: every character both with and
  without the marker, followed by the extra ``pieces`` in the given order.
  """
  chars = sorted(set(c for w in words for c in w))
  out = []
  seen = set()
  for p in [c for c in chars] + [c + boundary_marker for c in chars] + list(pieces):
    if p not in seen:
      seen.add(p)
      out.append(p)
  return SubwordVocab(out, boundary_marker)


def tokenize_word(vocab, word):
  """
  Segment one word by greedy longest match from the left.

  A candidate that consumes the last character must be the marked form of
  the piece; any other candidate must be unmarked.

  Returns a Segmentation.
  """
  if not word:
    raise UnknownCharacter(word, 0)
  marker = vocab.boundary_marker
  ids, spans = [], []
  start = 0
  n = len(word)
  while start < n:
    found = None
    end = min(n, start + vocab.max_len)
    while end > start:
      sub = word[start:end]
      if marker not in sub:
        piece = sub + marker if end == n else sub
        if piece in vocab.piece_to_id:
          found = vocab.piece_to_id[piece]
          break
      end -= 1
    if found is None:
      raise UnknownCharacter(word, start)
    ids.append(found)
    spans.append((start, end))
    start = end
  return Segmentation(piece_ids=tuple(ids), char_spans=tuple(spans))


def detokenize(vocab, piece_ids):
  piece_ids = list(piece_ids)
  if not piece_ids:
    raise MalformedSequence('empty piece sequence')
  for i, idx in enumerate(piece_ids):
    if not 0 < idx < len(vocab):
      raise MalformedSequence('piece id %d out of range' % idx)
    if vocab.is_final(idx) != (i == len(piece_ids) - 1):
      raise MalformedSequence(
        'boundary marker misplaced at position %d of %r' % (i, piece_ids))
  return ''.join(vocab.stem(i) for i in piece_ids)


def segmentation_from_pieces(vocab, word, pieces):
  """Build a Segmentation from explicit piece strings, checking it spells ``word``."""
  ids = []
  for p in pieces:
    if p not in vocab.piece_to_id:
      raise InvalidSegmentation('piece %r of %r not in vocabulary' % (p, word))
    ids.append(vocab.piece_to_id[p])
  try:
    spelled = detokenize(vocab, ids)
  except MalformedSequence as e:
    raise InvalidSegmentation(str(e))
  if spelled != word:
    raise InvalidSegmentation('pieces %r spell %r, not %r' % (pieces, spelled, word))
  spans, start = [], 0
  for i in ids:
    end = start + len(vocab.stem(i))
    spans.append((start, end))
    start = end
  return Segmentation(piece_ids=tuple(ids), char_spans=tuple(spans))


def load_pretokenized(path, vocab):
  """Read ``word<TAB>piece piece piece_`` lines into word -> Segmentation."""
  segs = {}
  with io.open(path, 'r', encoding='utf-8') as f:
    for lineno, line in enumerate(f, 1):
      line = line.rstrip('\n').rstrip('\r')
      if not line.strip():
        continue
      if '\t' not in line:
        raise ParseError(lineno, 'expected word<TAB>pieces')
      word, pieces = line.split('\t', 1)
      if not word or not pieces.split():
        raise ParseError(lineno, 'empty word or segmentation')
      segs[word] = segmentation_from_pieces(vocab, word, pieces.split())
  return segs


def save_segmentations(vocab, segs, path):
  with io.open(path, 'w', encoding='utf-8', newline='\n') as f:
    for word in sorted(segs):
      pieces = ' '.join(vocab.id_to_piece[i] for i in segs[word].piece_ids)
      f.write('%s\t%s\n' % (word, pieces))


def tokenize_words(vocab, words, pretokenized=None):
  """Segment each word, taking a pre-segmented entry when one is given."""
  out = {}
  for w in words:
    if pretokenized is not None and w in pretokenized:
      out[w] = pretokenized[w]
    else:
      out[w] = tokenize_word(vocab, w)
  return out


def pieces_to_words(vocab, piece_ids):
  """
  Split any decoded piece stream into words at marked pieces. Blank ids are
  skipped and a trailing unterminated word is kept as a word.
  """
  words, current = [], []
  for idx in piece_ids:
    if idx == 0:
      continue
    current.append(vocab.stem(idx))
    if vocab.is_final(idx):
      words.append(''.join(current))
      current = []
  if current:
    words.append(''.join(current))
  return words
