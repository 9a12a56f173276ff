"""Proofs-of-retrievability toolkit."""

__version__ = "0.1.0"
