"""Primal-dual incremental gradient method for conic-constrained finite sums."""

from .cones import ConeSpec, Free, Nonneg, SecondOrder, Zero
from .problem import Ball, Box, ConicProblem, LeastSquaresL1, build_bpd, build_lasso, make_problem
from .solver import gap_metrics, run_baseline_fullpd, run_pdig

__version__ = "0.1.0"
