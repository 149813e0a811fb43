"""Partial minimizations on the lifted (n + k)-dimensional covariances.

A lifted covariance is

    Sigma = [[S11, S12],
             [S21, S22]]     S11: n x n,  S22: k x k.

Two families matter. ``Sigma_0`` fixes ``S11`` to the target
``sigma_hat``. ``Sigma_1`` holds the factor-structured matrices
``[[H H^T + D, H Q], [Q^T H^T, Q^T Q]]``. Alternating the two I-divergence
projections gives the fitting algorithms in :mod:`approxfa.solvers`.
"""

from dataclasses import dataclass

import numpy as np

from .divergence import i_div
from .errors import DimensionError, SingularMatrixError
from .linalg import as_square, guarded_solve, is_pd, psd_inv_sqrt, psd_sqrt, sym
from .params import FactorParams, LpdParams

SIGMA1_TOL = 1e-8
SIGMA0_TOL = 1e-12

__all__ = [
    "FactorParams",
    "LiftedCov",
    "LpdParams",
    "constrained_second_partial_min",
    "first_partial_min",
    "pythagoras_residual_first",
    "pythagoras_residual_second",
    "second_partial_min",
]


@dataclass(frozen=True, eq=False)
class LiftedCov:
    """Symmetric (n + k) x (n + k) covariance with named blocks."""

    matrix: np.ndarray
    n: int
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise DimensionError("lifted covariance needs k >= 1 latent dimensions")
        if self.n < 1:
            raise DimensionError("lifted covariance needs n >= 1 observed dimensions")
        M = as_square(self.matrix, "lifted covariance")
        if M.shape[0] != self.n + self.k:
            raise DimensionError(f"expected size {self.n + self.k}, got {M.shape[0]}")
        M = sym(M)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_blocks(cls, S11, S12, S22):
        S11 = np.atleast_2d(np.asarray(S11, dtype=float))
        S12 = np.atleast_2d(np.asarray(S12, dtype=float))
        S22 = np.atleast_2d(np.asarray(S22, dtype=float))
        n, k = S12.shape
        return cls(np.block([[S11, S12], [S12.T, S22]]), n, k)

    @classmethod
    def from_factor(cls, params, Q=None):
        """``[[H H^T + D, H Q], [Q^T H^T, Q^T Q]]``; ``Q`` defaults to the identity."""
        H = params.H
        Q = np.eye(params.k) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
        return cls.from_blocks(params.model(), H @ Q, Q.T @ Q)

    @classmethod
    def from_lpd(cls, params):
        """``[[L P L^T + D, L P], [P L^T, P]]``."""
        return cls.from_blocks(params.model(), params.L @ params.P, params.P)

    @property
    def s11(self):
        return self.matrix[: self.n, : self.n]

    @property
    def s12(self):
        return self.matrix[: self.n, self.n :]

    @property
    def s21(self):
        return self.matrix[self.n :, : self.n]

    @property
    def s22(self):
        return self.matrix[self.n :, self.n :]

    def conditional_cov(self):
        """``S11 - S12 S22^-1 S21``."""
        return sym(self.s11 - self.s12 @ guarded_solve(self.s22, self.s21, "S22"))

    def is_pd(self):
        return is_pd(self.matrix)

    def in_sigma0(self, sigma_hat, tol=SIGMA0_TOL):
        S = np.asarray(sigma_hat, dtype=float)
        return np.linalg.norm(self.s11 - S) <= tol * max(1.0, np.linalg.norm(S))

    def in_sigma1(self, tol=SIGMA1_TOL):
        if not is_pd(self.s22):
            return False
        C = self.conditional_cov()
        off = C - np.diag(np.diag(C))
        return np.linalg.norm(off) <= tol * max(1.0, np.linalg.norm(self.s11))

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def first_partial_min(sigma_hat, sigma):
    """Project ``sigma`` onto ``Sigma_0``: the minimizer of ``I(S0 || sigma)``.

    The result keeps ``S11 = sigma_hat``, maps the cross block to
    ``sigma_hat S11^-1 S12`` and corrects ``S22`` accordingly; the value
    achieved equals ``I(sigma_hat || S11)``. Only positive definite
    ``sigma`` is accepted; a singular one raises
    :class:`SingularMatrixError`.
    """
    S = as_square(sigma_hat, "sigma_hat")
    if S.shape[0] != sigma.n:
        raise DimensionError(f"sigma_hat has size {S.shape[0]}, lifted n is {sigma.n}")
    if not is_pd(sigma.matrix):
        raise SingularMatrixError("lifted covariance must be positive definite", block="sigma")
    S11, S12, S22 = sigma.s11, sigma.s12, sigma.s22
    G = guarded_solve(S11, S12, "S11")  # S11^-1 S12
    new12 = S @ G
    new22 = S22 - G.T @ (S11 - S) @ G
    return LiftedCov.from_blocks(S, new12, sym(new22))


def second_partial_min(sigma):
    """Project ``sigma`` onto ``Sigma_1``: the minimizer of ``I(sigma || S1)``.

    Returns ``(params, Q, projected)``. ``Q`` is the symmetric root of
    ``S22``, ``H = S12 S22^-1/2`` and ``D`` is the diagonal of the
    conditional covariance; only the upper-left block of ``projected``
    differs from ``sigma``.
    """
    S12, S22 = sigma.s12, sigma.s22
    Q = psd_sqrt(S22)
    H = S12 @ psd_inv_sqrt(S22)
    C = sigma.conditional_cov()
    D = np.diag(C).copy()
    upper = sym(S12 @ guarded_solve(S22, sigma.s21, "S22")) + np.diag(D)
    projected = LiftedCov.from_blocks(upper, S12, S22)
    return FactorParams(H, D), Q, projected


def constrained_second_partial_min(sigma, P0):
    """Projection onto ``Sigma_1`` with the latent block pinned to ``P0``.

    ``Q0`` is the symmetric root of ``P0``; ``H = S12 S22^-1 Q0^T``.
    Returns ``(params, projected)``.
    """
    P0 = sym(as_square(P0, "P0"))
    if P0.shape[0] != sigma.k:
        raise DimensionError(f"P0 must be {sigma.k}x{sigma.k}")
    if not is_pd(P0):
        raise SingularMatrixError("P0 must be positive definite", block="P0")
    Q0 = psd_sqrt(P0)
    G = guarded_solve(sigma.s22, sigma.s21, "S22").T  # S12 S22^-1
    H = G @ Q0.T
    D = np.diag(sigma.conditional_cov()).copy()
    upper = sym(G @ P0 @ G.T) + np.diag(D)
    projected = LiftedCov.from_blocks(upper, G @ P0, P0)
    return FactorParams(H, D), projected


def pythagoras_residual_first(sigma0, sigma):
    """``I(S0||S) - I(S0||S*) - I(S*||S)`` with ``S*`` the ``Sigma_0`` projection of ``S``.

    ``sigma0`` defines the target through its upper-left block.
    """
    star = first_partial_min(sigma0.s11, sigma)
    return float(i_div(sigma0, sigma) - i_div(sigma0, star) - i_div(star, sigma))


def pythagoras_residual_second(sigma, sigma1):
    """``I(S||S1) - I(S||S*) - I(S*||S1)`` with ``S*`` the ``Sigma_1`` projection of ``S``."""
    if not sigma1.in_sigma1():
        raise ValueError("second argument is not factor-structured")
    _, _, star = second_partial_min(sigma)
    return float(i_div(sigma, sigma1) - i_div(sigma, star) - i_div(star, sigma1))
