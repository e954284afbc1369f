"""Corpus-engineering toolkit for synthetic disease mentions: prompt
rendering, mention extraction, augmentation strategies, normalization
engines, and evaluation metrics."""

__version__ = "0.1.0"
