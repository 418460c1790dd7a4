import json

import numpy as np
import pytest

from biasing.biastrie import adjacency, build_tree
from biasing.encoder import (BOTH, EXTERNAL, GRAPHEME, ONE_HOT, ONE_HOT_LINEAR, PHONEME,
                             EncoderParams, encode_tree, gcn_forward, init_encoder_params,
                             init_node_encodings, load_phoneme_table, normalize_adjacency,
                             one_hot_table, phoneme_features, phoneme_node_encoding,
                             phoneme_table, word_alignments, word_phoneme_embeds)
from biasing.errors import ConfigError, MissingAlignment, ShapeError
from biasing.tokenizer import Segmentation

from tests.conftest import BRI_PHONEMES


def _params(vocab, d, d_p, L=2, encoding=BOTH, phoneme_embed=ONE_HOT_LINEAR, seed=0,
            include_root=True):
  params = init_encoder_params({}, vocab.size, d, d_p, num_layers=L,
                               phoneme_embed=phoneme_embed, rng=np.random.default_rng(seed))
  return EncoderParams(params, L, encoding, phoneme_embed, include_root).check()


def _inputs(bri_tree, lexicon, identity_alignments, inventory):
  alignments = word_alignments(bri_tree, lexicon, identity_alignments)
  embeds = word_phoneme_embeds(lexicon.values(), one_hot_table(inventory))
  return alignments, embeds


def test_ri_node_phoneme_encoding(vocab, inventory, lexicon, bri_tree, identity_alignments):
  d = len(inventory)
  params = _params(vocab, d, d, encoding=PHONEME, phoneme_embed=ONE_HOT)
  alignments, embeds = _inputs(bri_tree, lexicon, identity_alignments, inventory)
  got = phoneme_node_encoding(bri_tree, 2, alignments, embeds, params)
  expected = np.zeros(d)
  expected[inventory.id('R')] = 2.0
  expected[inventory.id('AY')] = 1.0
  expected[inventory.id('IH')] = 1.0
  np.testing.assert_array_equal(got, expected)

  feats = phoneme_features(bri_tree, alignments, embeds)
  np.testing.assert_array_equal(feats[2], expected)
  np.testing.assert_array_equal(feats[0], np.zeros(d))
  # B is shared by both words, DAL_ carries D AH L
  assert feats[1][inventory.id('B')] == 2.0
  assert feats[3].sum() == 3.0


def test_one_hot_needs_matching_sizes(vocab):
  with pytest.raises(ConfigError):
    _params(vocab, 8, 11, phoneme_embed=ONE_HOT)
  with pytest.raises(ConfigError):
    EncoderParams({}, 2, encoding='spelling')


def test_grapheme_rows_are_embedding_lookups(vocab, bri_tree):
  params = _params(vocab, 6, 6, encoding=GRAPHEME)
  h0 = init_node_encodings(bri_tree, params)
  np.testing.assert_array_equal(h0[0], params.root_embed)
  for n in range(1, bri_tree.N + 1):
    np.testing.assert_array_equal(h0[n], params.piece_embed[bri_tree.piece(n)])


def test_zero_phoneme_features_give_grapheme_rows(vocab, bri_tree):
  params = _params(vocab, 6, 4, encoding=BOTH)
  both = init_node_encodings(bri_tree, params, np.zeros((bri_tree.N + 1, 4)))
  params.encoding = GRAPHEME
  np.testing.assert_array_equal(both, init_node_encodings(bri_tree, params))


def test_phoneme_modes_need_alignments(vocab, bri_tree, lexicon):
  params = _params(vocab, 6, 4, encoding=PHONEME)
  with pytest.raises(MissingAlignment):
    init_node_encodings(bri_tree, params)
  with pytest.raises(MissingAlignment):
    word_alignments(bri_tree, lexicon, {})


def test_zero_layers_is_identity(vocab, bri_tree):
  params = _params(vocab, 5, 5, L=0, encoding=GRAPHEME)
  np.testing.assert_array_equal(encode_tree(bri_tree, params),
                                init_node_encodings(bri_tree, params))


def test_two_node_tree_averages(vocab):
  tree = build_tree(['B'], {'B': Segmentation((vocab.id('B_'),), ((0, 1),))})
  a, d = adjacency(tree)
  np.testing.assert_allclose(normalize_adjacency(a, d), np.full((2, 2), 0.5))
  params = _params(vocab, 3, 3, L=1, encoding=GRAPHEME)
  params.params['W1'] = np.eye(3)
  h0 = init_node_encodings(tree, params)
  expected = np.maximum(0.0, 0.5 * (h0[0] + h0[1]))
  np.testing.assert_allclose(encode_tree(tree, params), np.vstack([expected, expected]))


def test_gcn_matches_dense_formula(vocab, bri_tree, rng):
  params = _params(vocab, 4, 4, L=3, encoding=GRAPHEME, seed=7)
  h = init_node_encodings(bri_tree, params)
  a, d = adjacency(bri_tree)
  dinv = np.diag(1.0 / np.sqrt(np.diag(d)))
  expected = h
  for w in params.gcn_weights:
    expected = np.maximum(0.0, dinv.dot(a).dot(dinv).dot(expected).dot(w))
  np.testing.assert_allclose(gcn_forward(h, a, d, params), expected, rtol=1e-12, atol=1e-15)


def test_gcn_is_permutation_equivariant(vocab, rng):
  params = _params(vocab, 4, 4, L=2, encoding=GRAPHEME)
  a = (rng.random((6, 6)) < 0.4).astype(float)
  a = np.maximum(a, a.T)
  np.fill_diagonal(a, 1.0)
  d = np.diag(a.sum(axis=1))
  h = rng.normal(size=(6, 4))
  perm = rng.permutation(6)
  p = np.eye(6)[perm]
  out = gcn_forward(h, a, d, params)
  permuted = gcn_forward(p.dot(h), p.dot(a).dot(p.T), p.dot(d).dot(p.T), params)
  np.testing.assert_allclose(permuted, p.dot(out), rtol=1e-12, atol=1e-15)


def test_zero_encodings_stay_zero(vocab, bri_tree):
  params = _params(vocab, 4, 4, L=3, encoding=GRAPHEME)
  a, d = adjacency(bri_tree)
  np.testing.assert_array_equal(gcn_forward(np.zeros((5, 4)), a, d, params), np.zeros((5, 4)))


def test_adjacency_shape_is_checked(vocab, bri_tree):
  params = _params(vocab, 4, 4, encoding=GRAPHEME)
  a, d = adjacency(bri_tree)
  with pytest.raises(ShapeError):
    gcn_forward(np.zeros((3, 4)), a, d, params)


def test_no_root_adjacency_changes_encodings(vocab, bri_tree):
  with_root = _params(vocab, 4, 4, encoding=GRAPHEME, seed=3)
  without = _params(vocab, 4, 4, encoding=GRAPHEME, seed=3, include_root=False)
  for p in (with_root, without):
    for name in p.params:
      p.params[name] = np.abs(p.params[name])
  a = encode_tree(bri_tree, with_root)
  b = encode_tree(bri_tree, without)
  assert a.shape == b.shape == (5, 4)
  assert not np.allclose(a, b)


def _random_tree(rng):
  words = {}
  for i in range(int(rng.integers(1, 8))):
    pieces = rng.integers(1, 5, size=int(rng.integers(1, 5)))
    words['w%d' % i] = Segmentation(tuple(int(p) for p in pieces),
                                    tuple((j, j + 1) for j in range(len(pieces))))
  return build_tree(sorted(words), words)


def _dense_gcn(tree, h, weights, include_root):
  size = tree.N + 1
  a = np.eye(size)
  for n in range(1, size):
    p = tree.nodes[n].parent
    if p or include_root:
      a[n, p] = a[p, n] = 1.0
  dinv = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
  s = dinv.dot(a).dot(dinv)
  for w in weights:
    h = np.maximum(0.0, s.dot(h).dot(w))
  return h


def test_gcn_matches_dense_reference_on_random_trees(vocab):
  rng = np.random.default_rng(2024)
  for i in range(100):
    tree = _random_tree(rng)
    assert 1 <= tree.N <= 30
    L = 1 + i % 6
    include_root = i % 5 != 0
    params = _params(vocab, 6, 6, L=L, encoding=GRAPHEME, seed=i, include_root=include_root)
    h0 = rng.normal(size=(tree.N + 1, 6))
    a, d = adjacency(tree, include_root=include_root)
    expected = _dense_gcn(tree, h0, params.gcn_weights, include_root)
    np.testing.assert_allclose(gcn_forward(h0, a, d, params), expected, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(
      encode_tree(tree, params),
      _dense_gcn(tree, init_node_encodings(tree, params), params.gcn_weights, include_root),
      rtol=1e-10, atol=1e-12)


def test_six_layers_keep_shapes(vocab, bri_tree):
  params = _params(vocab, 16, 16, L=6, encoding=GRAPHEME, seed=5)
  assert len(params.gcn_weights) == 6
  assert encode_tree(bri_tree, params).shape == (bri_tree.N + 1, 16)


def _write_table(path, vectors):
  path.write_text(json.dumps(vectors), encoding='utf-8')
  return str(path)


def test_external_phoneme_table(tmp_path, vocab, inventory, lexicon, bri_tree,
                                identity_alignments, rng):
  vectors = {s: rng.normal(size=3).tolist() for s in BRI_PHONEMES}
  path = _write_table(tmp_path / 'g2p.json', vectors)
  table = load_phoneme_table(path, inventory)
  assert table.shape == (len(inventory), 3)
  np.testing.assert_array_equal(table[0], np.zeros(3))
  np.testing.assert_array_equal(table[inventory.id('AY')], vectors['AY'])
  np.testing.assert_array_equal(phoneme_table(inventory, EXTERNAL, path), table)
  with pytest.raises(ConfigError):
    phoneme_table(inventory, EXTERNAL)

  params = _params(vocab, 6, 3, encoding=BOTH, phoneme_embed=EXTERNAL)
  alignments = word_alignments(bri_tree, lexicon, identity_alignments)
  embeds = word_phoneme_embeds(lexicon.values(), table)
  feats = phoneme_features(bri_tree, alignments, embeds)
  v = lambda s: np.array(vectors[s])
  np.testing.assert_allclose(feats[2], 2 * v('R') + v('AY') + v('IH'), rtol=1e-12)
  h0 = init_node_encodings(bri_tree, params, feats)
  np.testing.assert_allclose(h0[2], feats[2].dot(params.phoneme_proj) +
                             params.piece_embed[bri_tree.piece(2)], rtol=1e-12)
  assert encode_tree(bri_tree, params, feats).shape == (bri_tree.N + 1, 6)


def test_external_phoneme_table_errors(tmp_path, inventory):
  missing = {s: [0.0, 1.0] for s in BRI_PHONEMES if s != 'IH'}
  with pytest.raises(ShapeError):
    load_phoneme_table(_write_table(tmp_path / 'missing.json', missing), inventory)
  ragged = {s: [0.0, 1.0] for s in BRI_PHONEMES}
  ragged['K'] = [0.0]
  with pytest.raises(ShapeError):
    load_phoneme_table(_write_table(tmp_path / 'ragged.json', ragged), inventory)
  with pytest.raises(ShapeError):
    load_phoneme_table(_write_table(tmp_path / 'empty.json', {}), inventory)
