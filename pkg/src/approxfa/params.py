"""Parameter containers for factor models ``H H^T + D`` and ``L P L^T + D``."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotPSDError
from .linalg import is_pd, psd_sqrt, sym

# D entries produced as the diagonal of a PSD difference can undershoot
# zero by rounding; anything below this (relative) is a real violation.
_NEG_SLACK = 1e-12


def _diag_vector(D, n):
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = np.diag(D)
    D = D.reshape(-1)
    if D.shape != (n,):
        raise DimensionError(f"D must have {n} entries, got {D.shape}")
    return D


@dataclass(frozen=True, eq=False)
class FactorParams:
    """Loadings ``H`` (n x k) and noise variances ``D`` (length n)."""

    H: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.ndim != 2:
            raise DimensionError(f"H must be 2-D, got shape {H.shape}")
        D = _diag_vector(self.D, H.shape[0])
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(D))):
            raise ValueError("parameters contain non-finite values")
        if D.size and D.min() < -_NEG_SLACK * max(1.0, float(np.abs(D).max())):
            raise ValueError(f"D must be nonnegative, min entry {D.min():.3e}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "D", D)

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def k(self):
        return self.H.shape[1]

    def loading_gram(self):
        """``H H^T``."""
        return self.H @ self.H.T

    def model(self):
        """The implied covariance ``H H^T + diag(D)``."""
        return sym(self.H @ self.H.T) + np.diag(self.D)

    def rotated(self, U):
        return FactorParams(self.H @ U, self.D)


@dataclass(frozen=True, eq=False)
class LpdParams:
    """Alternative parametrization ``L P L^T + D`` with ``P`` positive definite."""

    L: np.ndarray
    P: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        k = L.shape[1]
        if P.shape != (k, k):
            raise DimensionError(f"P must be {k}x{k}, got {P.shape}")
        P = sym(P)
        if not is_pd(P):
            raise NotPSDError("P must be positive definite")
        D = _diag_vector(self.D, L.shape[0])
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "D", D)

    @classmethod
    def from_factor(cls, params, P=None):
        """Embed ``(H, D)`` with ``P = I`` (or ``L = H Q^-1`` for a given ``P``)."""
        if P is None:
            return cls(params.H, np.eye(params.k), params.D)
        Q = psd_sqrt(P)
        return cls(np.linalg.solve(Q, params.H.T).T, P, params.D)

    def model(self):
        return sym(self.L @ self.P @ self.L.T) + np.diag(self.D)

    def to_factor(self):
        """``H = L Q`` with ``Q`` the symmetric root of ``P``."""
        return FactorParams(self.L @ psd_sqrt(self.P), self.D)
