"""Tree-constrained pointer-generator biasing with phoneme-aware encodings."""

__version__ = '0.1.0'
