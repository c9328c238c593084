"""Structured pruning toolkit: graph-centrality neuron scores for MLPs and
decoder-only transformers, uniform structured pruning, and accounting."""

__version__ = "0.1.0"

FORMAT_VERSION = "1"
