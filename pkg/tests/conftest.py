import numpy as np
import pytest

from biasing.biastrie import build_tree
from biasing.g2p_align import HARD, AlignmentMatrix
from biasing.lexicon import Lexicon, LexiconEntry, PhonemeInventory
from biasing.tokenizer import build_vocab, tokenize_words

BRI_PHONEMES = ['B', 'R', 'AY', 'D', 'AH', 'L', 'IH', 'S', 'K', 'IY']
BRI_PRONUNCIATIONS = {
  'BRIDAL': 'B R AY D AH L',
  'BRISKLY': 'B R IH S K L IY',
}


@pytest.fixture
def inventory():
  return PhonemeInventory(BRI_PHONEMES)


@pytest.fixture
def lexicon(inventory):
  lex = Lexicon()
  for word, pron in BRI_PRONUNCIATIONS.items():
    lex[word] = LexiconEntry.create(word, [inventory.id(p) for p in pron.split()])
  return lex


@pytest.fixture
def vocab():
  # B, RI, DAL_ / B, RI, SKLY_
  return build_vocab(sorted(BRI_PRONUNCIATIONS), ['RI', 'DAL_', 'SKLY_'])


@pytest.fixture
def segmentations(vocab):
  return tokenize_words(vocab, ['BRIDAL', 'BRISKLY'])


@pytest.fixture
def bri_tree(segmentations):
  return build_tree(['BRIDAL', 'BRISKLY'], segmentations)


@pytest.fixture
def identity_alignments(lexicon):
  """Each character carries the phoneme at the same position."""
  return {w: AlignmentMatrix(np.eye(e.l_c, e.l_p), HARD) for w, e in lexicon.items()}


@pytest.fixture
def rng():
  return np.random.default_rng(1234)


def write_lines(path, lines):
  path.write_text(''.join(line + '\n' for line in lines), encoding='utf-8')
  return str(path)
