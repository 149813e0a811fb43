"""Approximate factor analysis models ``H H^T + D`` by I-divergence minimization."""

from ._accel import BACKEND
from .divergence import DivergenceValue, i_div, i_div_with_means, objective, singular_div_decomposition
from .lifted import (
    LiftedCov,
    constrained_second_partial_min,
    first_partial_min,
    pythagoras_residual_first,
    pythagoras_residual_second,
    second_partial_min,
)
from .linalg import BlockSplit, CovMatrix, delta, l2_diff, psd_sqrt
from .params import FactorParams, LpdParams
from .solvers import SingularPattern, SolverConfig, SolverTrace, default_init, iterate, run

__version__ = "0.1.0"
