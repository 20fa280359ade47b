"""Early ICU mortality prediction from fused structured and note-derived features."""

__version__ = "0.1.0"
