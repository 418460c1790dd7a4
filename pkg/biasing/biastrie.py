"""
Prefix tree over the subword segmentations of a biasing list.

Node 0 is a virtual root: it takes part in the GCN graph but is never an
active node. Real nodes 1..N are numbered breadth first, siblings in
increasing piece id, so matrix layouts are reproducible.
"""
import io
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional

import numpy as np

from biasing.tokenizer import Segmentation


@dataclass
class TrieNode:
  id: int
  piece: int
  depth: int
  parent: Optional[int]
  children: Dict[int, int] = field(default_factory=dict)
  words: FrozenSet[int] = frozenset()


class PrefixTree(object):
  """
  Inputs:
  - nodes: list of TrieNode, index == node id, nodes[0] is the root
  - words: biasing words; TrieNode.words holds indices into this tuple
  - segmentations: word -> Segmentation
  """

  def __init__(self, nodes, words, segmentations):
    self.nodes = nodes
    self.words = tuple(words)
    self.segmentations = dict(segmentations)

  @property
  def N(self):
    return len(self.nodes) - 1

  @property
  def root(self):
    return self.nodes[0]

  def piece(self, n):
    return self.nodes[n].piece

  def depth(self, n):
    return self.nodes[n].depth

  def word_set(self, n):
    return self.nodes[n].words

  def children(self, n):
    return tuple(sorted(self.nodes[n].children.values()))

  def walk(self, prefix):
    """Node reached by following ``prefix`` from the root, or None."""
    n = 0
    for p in prefix:
      n = self.nodes[n].children.get(p)
      if n is None:
        return None
    return n


def build_tree(words, segmentations):
  """
  Inputs:
  - words: a BiasingList or any iterable of words (repeats are merged)
  - segmentations: map word -> Segmentation

  Returns a PrefixTree.
  """
  if hasattr(words, 'words'):
    words = words.words
  ordered = []
  for w in words:
    if w not in ordered:
      ordered.append(w)

  # nested dict trie first, ids assigned afterwards in BFS order
  trie = {}
  ends = {}
  for wi, w in enumerate(ordered):
    cur = trie
    path = ()
    for p in segmentations[w].piece_ids:
      cur = cur.setdefault(p, {})
      path += (p,)
    ends.setdefault(path, set()).add(wi)

  nodes = [TrieNode(id=0, piece=0, depth=0, parent=None)]
  paths = {0: ()}
  queue = deque([(0, trie)])
  while queue:
    n, sub = queue.popleft()
    for p in sorted(sub):
      m = len(nodes)
      nodes.append(TrieNode(id=m, piece=p, depth=nodes[n].depth + 1, parent=n))
      nodes[n].children[p] = m
      paths[m] = paths[n] + (p,)
      queue.append((m, sub[p]))

  # children always have larger ids than their parent
  for n in range(len(nodes) - 1, 0, -1):
    ws = set(ends.get(paths[n], ()))
    for c in nodes[n].children.values():
      ws |= nodes[c].words
    nodes[n].words = frozenset(ws)

  return PrefixTree(nodes, ordered, {w: segmentations[w] for w in ordered})


def active_set(tree, partial_prefix):
  """
  Node ids that may follow ``partial_prefix`` within the current word. A
  prefix that leaves the tree behaves like the empty prefix.
  """
  n = tree.walk(partial_prefix)
  if n is None:
    n = 0
  return tree.children(n)


def adjacency(tree, include_root=True):
  """
  Returns a tuple of:
  - A: (N+1, N+1) symmetric 0/1 adjacency with self-loops
  - D: diagonal degree matrix of A

  With include_root=False the root keeps only its self-loop, so depth-1
  nodes connect to nothing but themselves and their children.
  """
  size = tree.N + 1
  a = np.eye(size)
  for node in tree.nodes[1:]:
    if node.parent == 0 and not include_root:
      continue
    a[node.id, node.parent] = 1.0
    a[node.parent, node.id] = 1.0
  d = np.diag(a.sum(axis=1))
  return a, d


def tree_to_json(tree, vocab=None):
  def name(p):
    return vocab.id_to_piece[p] if vocab is not None else p
  return {
    'words': list(tree.words),
    'segmentations': {w: {'pieces': list(s.piece_ids), 'spans': [list(x) for x in s.char_spans]}
                      for w, s in sorted(tree.segmentations.items())},
    'nodes': [{'id': n.id, 'piece': n.piece, 'label': name(n.piece) if n.id else '<root>',
               'depth': n.depth, 'parent': n.parent,
               'words': sorted(n.words)} for n in tree.nodes],
    'edges': [[n.parent, n.id] for n in tree.nodes[1:]],
  }


def save_tree(tree, path, vocab=None):
  with io.open(path, 'w', encoding='utf-8') as f:
    json.dump(tree_to_json(tree, vocab), f, indent=1, ensure_ascii=False)


def load_tree(path):
  with io.open(path, 'r', encoding='utf-8') as f:
    obj = json.load(f)
  segs = {w: Segmentation(piece_ids=tuple(s['pieces']),
                          char_spans=tuple(tuple(x) for x in s['spans']))
          for w, s in obj['segmentations'].items()}
  return build_tree(obj['words'], segs)
