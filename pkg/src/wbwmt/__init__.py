"""Unsupervised word-by-word translation with cross-lingual embeddings, an n-gram LM
and synthetic-noise corpora for denoising."""

__version__ = "0.1.0"
