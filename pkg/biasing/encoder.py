"""
Node encodings for the biasing prefix tree.

H0 row n is the embedding of the node's piece, the phoneme encoding of the
node, or their sum; row 0 is a learned root row. L graph convolutions then
propagate encodings along tree edges.
"""
import io
import json
import logging

import numpy as np

from biasing.biastrie import adjacency
from biasing.errors import (ConfigError, InvariantBreach, MissingAlignment,
                            NumericalError, ShapeError)
from biasing.g2p_align import compose, subword_char_matrix
from biasing.layer_utils import gcn_stack_forward
from biasing.layers import gather_rows_forward

logger = logging.getLogger(__name__)

GRAPHEME = 'grapheme'
PHONEME = 'phoneme'
BOTH = 'both'
ENCODING_MODES = (GRAPHEME, PHONEME, BOTH)

ONE_HOT = 'oh'
ONE_HOT_LINEAR = 'oh+'
EXTERNAL = 'external'
PHONEME_EMBED_MODES = (ONE_HOT, ONE_HOT_LINEAR, EXTERNAL)


class EncoderParams(object):
  """
  View over the encoder entries of a shared params dict:

  - 'embed': (V+1, d) piece embeddings, row 0 pinned to zero
  - 'root': (d,) root row
  - 'W1' ... 'WL': (d, d) GCN weights
  - 'Wp': (d_p, d) phoneme projection; absent for one-hot mode, where the
    projection is the identity
  """

  def __init__(self, params, num_layers, encoding=BOTH, phoneme_embed=ONE_HOT_LINEAR,
               include_root=True):
    if encoding not in ENCODING_MODES:
      raise ConfigError('unknown encoding mode %r' % encoding)
    if phoneme_embed not in PHONEME_EMBED_MODES:
      raise ConfigError('unknown phoneme embedding mode %r' % phoneme_embed)
    self.params = params
    self.L = num_layers
    self.encoding = encoding
    self.phoneme_embed_mode = phoneme_embed
    self.include_root = include_root

  @property
  def piece_embed(self):
    return self.params['embed']

  @property
  def root_embed(self):
    return self.params['root']

  @property
  def gcn_weights(self):
    return [self.params['W%d' % (i + 1)] for i in range(self.L)]

  @property
  def d(self):
    return self.params['embed'].shape[1]

  @property
  def uses_phonemes(self):
    return self.encoding != GRAPHEME

  @property
  def phoneme_proj(self):
    if 'Wp' in self.params:
      return self.params['Wp']
    return np.eye(self.d)

  @property
  def d_p(self):
    return self.phoneme_proj.shape[0]

  def check(self):
    for name, v in self.params.items():
      if not np.all(np.isfinite(v)):
        raise NumericalError('parameter %s is not finite' % name)
    d = self.d
    if self.root_embed.shape != (d,):
      raise ShapeError('root row has shape %r, expected (%d,)' % (self.root_embed.shape, d))
    for i, w in enumerate(self.gcn_weights):
      if w.shape != (d, d):
        raise ShapeError('W%d has shape %r, expected (%d, %d)' % (i + 1, w.shape, d, d))
    if self.phoneme_proj.shape[1] != d:
      raise ShapeError('phoneme projection maps to %d, not %d' % (self.phoneme_proj.shape[1], d))
    return self


def init_encoder_params(params, vocab_size, d, d_p, num_layers=6,
                        phoneme_embed=ONE_HOT_LINEAR, rng=None):
  """
  Fill ``params`` with uniform(-1/sqrt(d), 1/sqrt(d)) encoder weights.

  Inputs:
  - params: dict to fill in place
  - vocab_size: V, the number of real pieces
  - d: encoding size
  - d_p: phoneme feature size
  - num_layers: number of GCN layers
  - phoneme_embed: 'oh' needs d_p == d and stores no projection
  - rng: numpy Generator
  """
  if rng is None:
    rng = np.random.default_rng(0)
  scale = 1.0 / np.sqrt(d)
  embed = rng.uniform(-scale, scale, size=(vocab_size + 1, d))
  embed[0] = 0.0
  params['embed'] = embed
  params['root'] = rng.uniform(-scale, scale, size=d)
  for i in range(num_layers):
    params['W%d' % (i + 1)] = rng.uniform(-scale, scale, size=(d, d))
  if phoneme_embed == ONE_HOT:
    if d_p != d:
      raise ConfigError('one-hot phoneme embeddings need d_p == d (%d != %d)' % (d_p, d))
  else:
    params['Wp'] = rng.uniform(-scale, scale, size=(d_p, d))
  return params


def one_hot_table(inv):
  """(|inventory|, |inventory|) identity; row 0 is the blank."""
  return np.eye(len(inv))


def load_phoneme_table(path, inv):
  """
  Read a JSON object ``{symbol: [floats]}`` with one vector per inventory
  symbol. The blank row is zero.
  """
  with io.open(path, 'r', encoding='utf-8') as f:
    obj = json.load(f)
  if not isinstance(obj, dict) or not obj:
    raise ShapeError('%s holds no phoneme vectors' % path)
  sizes = set(len(v) for v in obj.values())
  if len(sizes) != 1:
    raise ShapeError('phoneme vectors in %s differ in length' % path)
  table = np.zeros((len(inv), sizes.pop()))
  for s in inv.symbols[1:]:
    if s not in obj:
      raise ShapeError('no vector for phoneme %r in %s' % (s, path))
    table[inv.id(s)] = obj[s]
  return table


def phoneme_table(inv, mode, path=None):
  if mode == EXTERNAL:
    if path is None:
      raise ConfigError('external phoneme embeddings need a table file')
    return load_phoneme_table(path, inv)
  return one_hot_table(inv)


def word_phoneme_embeds(entries, table):
  """word -> P(w), the (l_p, d_p) stack of its phoneme vectors."""
  return {e.word: table[list(e.phonemes)] for e in entries}


def word_alignments(tree, lexicon, char_phone):
  """
  Pair each tree word's subword->character matrix with its
  character->phoneme alignment.

  Inputs:
  - tree: PrefixTree
  - lexicon: word -> LexiconEntry
  - char_phone: word -> AlignmentMatrix (or raw l_c x l_p array)

  Returns word -> (A_sc, A_cp) as arrays.
  """
  out = {}
  for w in tree.words:
    if w not in char_phone:
      raise MissingAlignment(w)
    a_sc = subword_char_matrix(lexicon[w], tree.segmentations[w]).weights
    a_cp = getattr(char_phone[w], 'weights', char_phone[w])
    out[w] = (a_sc, a_cp)
  return out


def _word_rows(tree, alignments, phoneme_embeds):
  rows = {}
  for w in tree.words:
    if w not in alignments or w not in phoneme_embeds:
      raise MissingAlignment(w)
    a_sc, a_cp = alignments[w]
    rows[w] = compose(a_sc, a_cp).dot(phoneme_embeds[w])
  return rows


def _node_feature(tree, n, rows):
  depth = tree.depth(n)
  total = None
  for wi in sorted(tree.word_set(n)):
    w = tree.words[wi]
    r = rows[w]
    if depth > r.shape[0]:
      raise InvariantBreach('node %d at depth %d is deeper than %r (%d pieces)'
                            % (n, depth, w, r.shape[0]))
    total = r[depth - 1] if total is None else total + r[depth - 1]
  return total


def phoneme_node_encoding(tree, n, alignments, phoneme_embeds, params):
  """
  Phoneme encoding of one node: the projection of the summed alignment-
  weighted phoneme vectors of every word through the node.

  Inputs:
  - tree: PrefixTree
  - n: node id, 1..N
  - alignments: word -> (A_sc, A_cp)
  - phoneme_embeds: word -> P(w)
  - params: EncoderParams

  Returns a vector of shape (d,).
  """
  rows = _word_rows(tree, alignments, phoneme_embeds)
  return _node_feature(tree, n, rows).dot(params.phoneme_proj)


def phoneme_features(tree, alignments, phoneme_embeds, d_p=None):
  """
  Pre-projection phoneme encodings of every node at once.

  d_p is the phoneme vector width; it may be left out when the tree has at
  least one word. An empty tree gives a single zero root row.

  Returns F of shape (N+1, d_p) with a zero root row, so that the phoneme
  encodings are F.dot(Wp).
  """
  rows = _word_rows(tree, alignments, phoneme_embeds)
  if d_p is None:
    if not rows:
      raise ShapeError('phoneme width unknown for a tree without words')
    d_p = next(iter(rows.values())).shape[1]
  for w, r in rows.items():
    if r.shape[1] != d_p:
      raise ShapeError('phoneme vectors of %r have width %d, expected %d' % (w, r.shape[1], d_p))
  feats = np.zeros((tree.N + 1, d_p))
  for n in range(1, tree.N + 1):
    feats[n] = _node_feature(tree, n, rows)
  return feats


def node_pieces(tree):
  return np.array([node.piece for node in tree.nodes], dtype=np.int64)


def init_node_encodings(tree, params, phoneme_inputs=None):
  """
  Inputs:
  - tree: PrefixTree
  - params: EncoderParams
  - phoneme_inputs: F from phoneme_features, or a pair
    (alignments, phoneme_embeds); needed unless params.encoding is grapheme

  Returns H0 of shape (N+1, d).
  """
  if params.encoding == GRAPHEME:
    h0, _ = gather_rows_forward(node_pieces(tree), params.piece_embed)
  else:
    if phoneme_inputs is None:
      raise MissingAlignment(tree.words[0] if tree.words else '')
    if isinstance(phoneme_inputs, tuple):
      phoneme_inputs = phoneme_features(tree, *phoneme_inputs, d_p=params.d_p)
    h0 = phoneme_inputs.dot(params.phoneme_proj)
    if params.encoding == BOTH:
      h0 = h0 + gather_rows_forward(node_pieces(tree), params.piece_embed)[0]
  h0[0] = params.root_embed
  return h0


def normalize_adjacency(a, d):
  """S = D^-1/2 A D^-1/2 for a degree matrix with positive diagonal."""
  inv_sqrt = 1.0 / np.sqrt(np.diag(d))
  return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_forward(h0, a, d, params):
  """
  Apply params.L graph convolutions to H0.

  Inputs:
  - h0: (N+1, d) initial encodings
  - a, d: adjacency and degree matrices from biastrie.adjacency
  - params: EncoderParams

  Returns H_L of shape (N+1, d).
  """
  if a.shape != (h0.shape[0], h0.shape[0]):
    raise ShapeError('adjacency %r does not match %d nodes' % (a.shape, h0.shape[0]))
  s = normalize_adjacency(a, d)
  out, _ = gcn_stack_forward(h0, s, params.gcn_weights)
  if not np.all(np.isfinite(out)):
    raise NumericalError('non-finite node encodings after GCN')
  return out


def encode_tree(tree, params, phoneme_inputs=None):
  """H_L for a tree, honoring the root / no-root adjacency choice in params."""
  h0 = init_node_encodings(tree, params, phoneme_inputs)
  a, d = adjacency(tree, include_root=params.include_root)
  hl = gcn_forward(h0, a, d, params)
  logger.debug('encoded tree with %d nodes, %d layers', tree.N, params.L)
  return hl
