"""earlycast: early classification of catching trials with predictive
sequential classification, plus the LSTM/TCN baselines, metrics and the
synthetic trial generator."""

__version__ = "0.1.0"

from .autodiff import Graph, Tensor, backward, forward  # noqa: F401
from .kernels import BACKEND  # noqa: F401
