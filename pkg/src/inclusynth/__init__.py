"""Synthetic inclusive-language datasets for Italian job ads, and tooling to
benchmark language models on them across prompting strategies."""

__version__ = "0.1.0"
