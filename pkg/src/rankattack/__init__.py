"""Bradley-Terry rankings from pairwise comparisons, and flip attacks on them."""

__version__ = "0.1.0"
