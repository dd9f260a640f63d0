"""Session-based recommendation with time-aware graph attention on the
Poincare ball: manifold numerics, a reverse-mode tape, session graphs with
time intervals, the attention model, training, and MRR/P evaluation."""

__version__ = "0.1.0"

from . import data, evaluate, grad, graph, manifold, metrics, model, train

__all__ = [
    "data", "evaluate", "grad", "graph",
    "manifold", "metrics", "model", "train",
]
