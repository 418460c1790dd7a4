"""
Word error rate, rare-word error rate and biasing-list construction.

Both rates come from one minimal edit alignment. When several alignments
have minimal cost the backtrace prefers match, then substitution, then
deletion, then insertion at every cell, which pins which words an error is
charged to.
"""
import io
import json
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

MATCH = 'M'
SUB = 'S'
DEL = 'D'
INS = 'I'

UNDEFINED = float('inf')


@dataclass(frozen=True)
class EditAlignment:
  """ops: tuple of (op, ref index or None, hyp index or None), in order."""
  ops: Tuple[Tuple[str, object, object], ...]

  def count(self, op):
    return sum(1 for o in self.ops if o[0] == op)

  @property
  def cost(self):
    return len(self.ops) - self.count(MATCH)


@dataclass(frozen=True)
class ErrorCounts:
  substitutions: int = 0
  deletions: int = 0
  insertions: int = 0
  reference_words: int = 0

  @property
  def errors(self):
    return self.substitutions + self.deletions + self.insertions

  def __add__(self, other):
    return ErrorCounts(self.substitutions + other.substitutions,
                       self.deletions + other.deletions,
                       self.insertions + other.insertions,
                       self.reference_words + other.reference_words)


@dataclass(frozen=True)
class ErrorRate:
  rate: float
  counts: ErrorCounts

  @property
  def defined(self):
    return self.rate != UNDEFINED

  def as_dict(self):
    c = self.counts
    return {'rate': self.rate if self.defined else None,
            'substitutions': c.substitutions, 'deletions': c.deletions,
            'insertions': c.insertions, 'reference_words': c.reference_words}


def align_words(ref, hyp):
  """
  Minimal-cost Levenshtein alignment of two word sequences.

  Returns an EditAlignment.
  """
  ref, hyp = list(ref), list(hyp)
  n, m = len(ref), len(hyp)
  cost = np.zeros((n + 1, m + 1), dtype=np.int64)
  cost[:, 0] = np.arange(n + 1)
  cost[0, :] = np.arange(m + 1)
  for i in range(1, n + 1):
    for j in range(1, m + 1):
      change = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
      cost[i, j] = min(change, cost[i - 1, j] + 1, cost[i, j - 1] + 1)

  ops = []
  i, j = n, m
  while i > 0 or j > 0:
    if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and cost[i, j] == cost[i - 1, j - 1]:
      ops.append((MATCH, i - 1, j - 1))
      i, j = i - 1, j - 1
    elif i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + 1:
      ops.append((SUB, i - 1, j - 1))
      i, j = i - 1, j - 1
    elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
      ops.append((DEL, i - 1, None))
      i -= 1
    else:
      ops.append((INS, None, j - 1))
      j -= 1
  ops.reverse()
  return EditAlignment(tuple(ops))


def _rate(counts, empty_is_zero):
  if counts.reference_words:
    return counts.errors / counts.reference_words
  if empty_is_zero and counts.errors == 0:
    return 0.0
  return UNDEFINED


def word_counts(ref, hyp, alignment=None):
  a = alignment or align_words(ref, hyp)
  return ErrorCounts(a.count(SUB), a.count(DEL), a.count(INS), len(ref))


def rare_counts(ref, hyp, biasing_words, alignment=None):
  a = alignment or align_words(ref, hyp)
  ref, hyp = list(ref), list(hyp)
  s = d = ins = 0
  for op, ri, hi in a.ops:
    if op == SUB and ref[ri] in biasing_words:
      s += 1
    elif op == DEL and ref[ri] in biasing_words:
      d += 1
    elif op == INS and hyp[hi] in biasing_words:
      ins += 1
  return ErrorCounts(s, d, ins, sum(1 for w in ref if w in biasing_words))


def wer(ref, hyp):
  """
  (S + D + I) / |ref|. An empty reference scores 0.0 against an empty
  hypothesis and UNDEFINED otherwise.

  Returns an ErrorRate.
  """
  counts = word_counts(ref, hyp)
  return ErrorRate(_rate(counts, empty_is_zero=True), counts)


def rwer(ref, hyp, biasing_words):
  """
  Error rate restricted to biasing words: substitutions and deletions of
  reference words in the set, insertions of hypothesis words in the set,
  over the number of reference words in the set (UNDEFINED when zero).
  """
  counts = rare_counts(ref, hyp, set(biasing_words))
  return ErrorRate(_rate(counts, empty_is_zero=False), counts)


def rare_words(words, common_words=(), top_k=None, counts=None, min_count=None):
  """
  Words that are rare by rank (not among the top_k of the ranked
  common_words) or, when min_count is given, by count (fewer than min_count
  occurrences in ``counts``). Repeats are dropped, first occurrence order.
  """
  if min_count is not None:
    counts = counts or {}
    is_rare = lambda w: counts.get(w, 0) < min_count
  else:
    common = set(list(common_words)[:top_k] if top_k is not None else common_words)
    is_rare = lambda w: w not in common
  out = []
  for w in words:
    if is_rare(w) and w not in out:
      out.append(w)
  return out


@dataclass(frozen=True)
class BiasingSelection:
  words: Tuple[str, ...]
  rare: Tuple[str, ...]
  distractors: Tuple[str, ...]
  shortfall: bool = False


def build_biasing_list(reference_words, common_words, top_k, distractor_pool,
                       n_distractors, seed=0, counts=None, min_count=None):
  """
  Rare reference words plus n_distractors words sampled from the rest of
  the pool.

  Inputs:
  - reference_words: words of the utterance(s)
  - common_words: frequency-ranked word list, most frequent first
  - top_k: words ranked below top_k are rare
  - distractor_pool: candidate distractor words
  - n_distractors: number of distractors to sample
  - seed: sampling seed
  - counts, min_count: count-threshold rarity instead of rank

  Returns a BiasingSelection; its words are sorted. A pool smaller than
  n_distractors is used whole and flagged as a shortfall.
  """
  rare = sorted(set(rare_words(reference_words, common_words, top_k, counts, min_count)))
  pool = sorted(set(distractor_pool) - set(rare))
  shortfall = len(pool) < n_distractors
  if shortfall:
    logger.warning('distractor pool has %d words, %d requested', len(pool), n_distractors)
    picked = pool
  else:
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=n_distractors, replace=False)
    picked = [pool[i] for i in sorted(idx)]
  words = tuple(sorted(set(rare) | set(picked)))
  return BiasingSelection(words=words, rare=tuple(rare), distractors=tuple(picked),
                          shortfall=shortfall)


@dataclass(frozen=True)
class CorpusScore:
  wer: ErrorRate
  rwer: ErrorRate
  utterances: int

  def as_dict(self):
    return {'utterances': self.utterances, 'wer': self.wer.as_dict(),
            'rwer': self.rwer.as_dict()}


def score_corpus(refs, hyps, biasing_words):
  """
  Corpus-level WER and R-WER from counts summed over utterances.

  Inputs:
  - refs, hyps: lists of word sequences
  - biasing_words: one set for every utterance, or a list of per-utterance sets
  """
  if len(refs) != len(hyps):
    raise ValueError('%d references but %d hypotheses' % (len(refs), len(hyps)))
  per_utt = isinstance(biasing_words, (list, tuple)) and (
    not biasing_words or isinstance(biasing_words[0], (set, frozenset, list, tuple)))
  wc, rc = ErrorCounts(), ErrorCounts()
  for i, (r, h) in enumerate(zip(refs, hyps)):
    words = set(biasing_words[i]) if per_utt else set(biasing_words)
    a = align_words(r, h)
    wc = wc + word_counts(r, h, a)
    rc = rc + rare_counts(r, h, words, a)
  return CorpusScore(wer=ErrorRate(_rate(wc, True), wc),
                     rwer=ErrorRate(_rate(rc, False), rc), utterances=len(refs))


def format_rate(rate):
  return 'undefined' if not rate.defined else '%.2f' % (100.0 * rate.rate)


def write_report(scores, path):
  """Write {name: CorpusScore} as JSON; undefined rates become null."""
  obj = {name: s.as_dict() for name, s in scores.items()}
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(obj, f, indent=1, sort_keys=True)
