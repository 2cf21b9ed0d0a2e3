"""taxoarena: evaluation engine for taxonomy-conditioned image generation.

Computes taxonomy-aware similarity metrics and distributional metrics from
precomputed embeddings, ranks systems from pairwise preferences with a
Bradley-Terry fit plus bootstrap confidence intervals, and numerically
validates the metric semantics on explicit discrete probabilistic worlds.
"""

__version__ = "0.1.0"
