import itertools
import json
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasing.metrics import (DEL, INS, MATCH, SUB, UNDEFINED, ErrorCounts, align_words,
                             build_biasing_list, format_rate, rare_words, rwer, score_corpus,
                             wer, write_report)


def _distance(ref, hyp):
  @lru_cache(maxsize=None)
  def d(i, j):
    if i == len(ref):
      return len(hyp) - j
    if j == len(hyp):
      return len(ref) - i
    return min(d(i + 1, j + 1) + (ref[i] != hyp[j]), d(i + 1, j) + 1, d(i, j + 1) + 1)
  return d(0, 0)


def _check_alignment(ref, hyp):
  a = align_words(ref, hyp)
  assert a.cost == _distance(tuple(ref), tuple(hyp))
  assert len(ref) == a.count(MATCH) + a.count(SUB) + a.count(DEL)
  assert len(hyp) == a.count(MATCH) + a.count(SUB) + a.count(INS)
  assert [ri for _, ri, _ in a.ops if ri is not None] == list(range(len(ref)))
  assert [hi for _, _, hi in a.ops if hi is not None] == list(range(len(hyp)))
  for op, ri, hi in a.ops:
    if op == MATCH:
      assert ref[ri] == hyp[hi]
    elif op == SUB:
      assert ref[ri] != hyp[hi]


def _check_rates(ref, hyp, words):
  a = align_words(ref, hyp)
  w = wer(ref, hyp)
  assert w.counts == ErrorCounts(a.count(SUB), a.count(DEL), a.count(INS), len(ref))
  assert w.counts.errors == a.cost
  if ref:
    assert w.rate == a.cost / len(ref)
  r = rwer(ref, hyp, words)
  assert r.counts.substitutions == sum(1 for op, ri, _ in a.ops if op == SUB and ref[ri] in words)
  assert r.counts.deletions == sum(1 for op, ri, _ in a.ops if op == DEL and ref[ri] in words)
  assert r.counts.insertions == sum(1 for op, _, hi in a.ops if op == INS and hyp[hi] in words)
  assert r.counts.reference_words == sum(1 for x in ref if x in words)
  assert r.defined == (r.counts.reference_words > 0)
  if r.defined:
    assert r.rate == r.counts.errors / r.counts.reference_words


def _all_sequences(n):
  return [tuple(s) for s in itertools.product('abc', repeat=n)]


def test_alignment_and_rates_over_all_short_sequences():
  by_length = {n: _all_sequences(n) for n in range(7)}
  for m in range(7):
    for n in range(7):
      if m + n <= 7:
        pairs = itertools.product(by_length[m], by_length[n])
      else:
        # every sequence of the longer side against a few of the other
        rng = np.random.default_rng(10 * m + n)
        longer, shorter = (m, n) if m >= n else (n, m)
        picks = [by_length[shorter][i]
                 for i in rng.choice(len(by_length[shorter]), 2, replace=False)]
        pairs = [(x, y) if m >= n else (y, x) for x in by_length[longer] for y in picks]
      for ref, hyp in pairs:
        _check_alignment(ref, hyp)
        _check_rates(ref, hyp, {'a'})


abc = st.lists(st.sampled_from('abc'), max_size=6)
abcd = st.lists(st.sampled_from('abcd'), max_size=6)


@settings(max_examples=500, deadline=None)
@given(abc, abc)
def test_alignment_matches_recursive_oracle(ref, hyp):
  _check_alignment(ref, hyp)


@settings(max_examples=200, deadline=None)
@given(abcd, abcd, st.sets(st.sampled_from('abcd')))
def test_rare_errors_never_exceed_all_errors(ref, hyp, words):
  w = wer(ref, hyp).counts
  r = rwer(ref, hyp, words).counts
  assert r.substitutions <= w.substitutions
  assert r.deletions <= w.deletions
  assert r.insertions <= w.insertions
  swapped = wer(hyp, ref).counts
  assert w.errors == swapped.errors


def test_wer_examples():
  assert wer(['a', 'b'], ['a', 'b']).rate == 0.0
  assert wer('a b c'.split(), 'a x c'.split()).rate == pytest.approx(1 / 3)
  assert wer(['a', 'b'], ['b']).rate == 0.5
  assert wer([], []).rate == 0.0
  r = wer([], ['a'])
  assert r.rate == UNDEFINED and not r.defined
  assert r.counts.insertions == 1


def test_tie_breaks():
  assert align_words(['a', 'b'], ['b']).ops == ((DEL, 0, None), (MATCH, 1, 0))
  assert align_words(['a', 'b'], ['c']).ops == ((DEL, 0, None), (SUB, 1, 0))
  assert align_words(['a'], ['b', 'a']).ops == ((INS, None, 0), (MATCH, 0, 1))


def test_rwer_examples():
  assert not rwer(['the', 'day'], ['the', 'day'], {'BRIDAL'}).defined
  r = rwer('the BRIDAL day'.split(), 'the BRIDLE day'.split(), {'BRIDAL', 'BRIDLE'})
  assert r.rate == 1.0
  assert r.counts.substitutions == 1 and r.counts.insertions == 0
  assert rwer(['BRIDAL'], ['BRIDAL'], {'BRIDAL'}).rate == 0.0


def test_rwer_counts_inserted_list_words():
  r = rwer(['BRIDAL', 'day'], ['BRIDAL', 'BRISKLY', 'day'], {'BRIDAL', 'BRISKLY'})
  assert r.counts.insertions == 1
  assert r.rate == 1.0
  # an inserted common word is not charged
  assert rwer(['BRIDAL'], ['BRIDAL', 'the'], {'BRIDAL'}).rate == 0.0


def test_rare_words():
  common = ['the', 'a', 'day', 'of']
  assert rare_words(['the', 'BRIDAL', 'of', 'BRIDAL'], common, top_k=2) == ['BRIDAL', 'of']
  counts = {'the': 100, 'BRIDAL': 3}
  assert rare_words(['the', 'BRIDAL', 'x'], counts=counts, min_count=15) == ['BRIDAL', 'x']


POOL = ['w%02d' % i for i in range(40)]


def test_biasing_list_is_deterministic_and_order_free():
  ref = ['the', 'BRIDAL', 'day', 'BRISKLY']
  a = build_biasing_list(ref, ['the', 'day'], 2, POOL, 10, seed=3)
  b = build_biasing_list(list(reversed(ref)), ['the', 'day'], 2, POOL, 10, seed=3)
  assert a == b
  assert a.rare == ('BRIDAL', 'BRISKLY')
  assert len(a.words) == 12
  assert set(a.rare) <= set(a.words)
  assert list(a.words) == sorted(a.words)
  assert not a.shortfall
  assert build_biasing_list(ref, ['the', 'day'], 2, POOL, 10, seed=4).distractors != \
    a.distractors


def test_all_common_reference_gives_distractors_only():
  sel = build_biasing_list(['the', 'day'], ['the', 'day'], 2, POOL, 5, seed=0)
  assert sel.rare == ()
  assert sel.words == sel.distractors
  assert len(sel.words) == 5


def test_small_pool_is_a_shortfall(caplog):
  sel = build_biasing_list(['BRIDAL'], [], 0, ['BRIDAL', 'x', 'y'], 5)
  assert sel.shortfall
  assert sel.distractors == ('x', 'y')
  assert sel.words == ('BRIDAL', 'x', 'y')
  assert 'distractor pool' in caplog.text


def test_count_threshold_lists():
  sel = build_biasing_list(['the', 'BRIDAL'], [], None, POOL, 3, counts={'the': 50},
                           min_count=15)
  assert sel.rare == ('BRIDAL',)


def test_score_corpus_sums_counts():
  refs = [['a', 'BRIDAL'], ['b']]
  hyps = [['a', 'BRIDLE'], ['b', 'c']]
  score = score_corpus(refs, hyps, [{'BRIDAL'}, set()])
  assert score.wer.rate == pytest.approx(2 / 3)
  assert score.rwer.rate == 1.0
  assert score.utterances == 2
  shared = score_corpus(refs, hyps, {'BRIDAL'})
  assert shared.rwer.counts == score.rwer.counts
  with pytest.raises(ValueError):
    score_corpus(refs, hyps[:1], set())


def test_report_writes_null_for_undefined(tmp_path):
  score = score_corpus([['a']], [['a']], set())
  assert format_rate(score.rwer) == 'undefined'
  assert format_rate(score.wer) == '0.00'
  path = str(tmp_path / 'report.json')
  write_report({'bias': score}, path)
  with open(path) as f:
    obj = json.load(f)
  assert obj['bias']['rwer']['rate'] is None
  assert obj['bias']['wer']['rate'] == 0.0
