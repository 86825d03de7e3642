"""Causally-masked language modeling over minimal HTML with inline image tokens."""

__version__ = "0.1.0"

from .vocab import Vocab, DEFAULT_VOCAB, TokenizationError

__all__ = ["Vocab", "DEFAULT_VOCAB", "TokenizationError", "__version__"]
