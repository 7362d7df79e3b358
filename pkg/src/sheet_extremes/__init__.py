"""Tail bounds for suprema of fractional Brownian sheets, with Monte-Carlo certification."""

from .field_model import HurstPair, Point2, Rect, fbs_covariance
from .bounds import BoundResult, evaluate_family
from .optimizer import best_bound, optimize_p
from .series import SeriesDivergenceError, SeriesValue
from .simulator import Grid2, McConfig, TailEstimate, empirical_sup_tail

__version__ = "0.1.0"

__all__ = ["HurstPair", "Point2", "Rect", "fbs_covariance", "BoundResult", "evaluate_family",
           "best_bound", "optimize_p", "SeriesDivergenceError", "SeriesValue", "Grid2",
           "McConfig", "TailEstimate", "empirical_sup_tail"]
