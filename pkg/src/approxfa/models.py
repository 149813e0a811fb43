"""Synthetic targets, sample covariances and exact factor-model constructions."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InfeasibleModelError, NotPSDError, StructureError
from .linalg import BlockSplit, CovMatrix, as_square, blocks, guarded_solve, psd_sqrt, schur_complement, sym
from .params import FactorParams

log = logging.getLogger(__name__)

EXACT_TOL = 1e-8
RECONSTRUCTION_TOL = 1e-10

__all__ = [
    "GeneratorSpec",
    "StructureReport",
    "exact_fa_check",
    "exact_fa_realization",
    "generate_sigma",
    "make_rng",
    "sample_covariance",
    "stationary_structure_check",
]


def make_rng(seed):
    """Counter-based Philox stream; the only generator used for synthetic data."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class GeneratorSpec:
    """Target ``A A^T + c diag(u)`` with ``A`` (n x m) and ``u`` uniform on [0, 1]."""

    n: int
    m: int
    c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError("n and m must be positive")
        if self.m > self.n:
            raise DimensionError(f"m={self.m} must not exceed n={self.n}")
        if self.c < 0:
            raise ValueError("c must be nonnegative")


def generate_sigma(spec, A=None):
    """Draw a synthetic target.

    Returns ``(sigma_hat, (A, d))`` where ``d = c * u`` is the noise diagonal,
    so ``sigma_hat = A A^T + diag(d)``. Passing ``A`` skips its draw (the
    noise draw still happens). A singular result, possible only for
    ``c = 0`` and ``m < n``, is returned flagged as PSD-only with a
    warning.
    """
    rng = make_rng(spec.seed)
    drawn = rng.random((spec.n, spec.m))
    A = drawn if A is None else np.asarray(A, dtype=float)
    if A.shape != (spec.n, spec.m):
        raise DimensionError(f"A must be {spec.n}x{spec.m}")
    d = spec.c * rng.random(spec.n)
    S = CovMatrix.from_array(sym(A @ A.T) + np.diag(d), require_psd=True)
    if not S.pd:
        log.warning("generated matrix is only positive semidefinite (c=%g, m=%d, n=%d)",
                    spec.c, spec.m, spec.n)
    return S, (A, d)


def sample_covariance(data, center=False):
    """``(1/N) sum_i y_i y_i^T`` over the rows of ``data`` (zero-mean convention).

    With ``center=True`` the column means are removed first. Fewer rows
    than columns yields a singular matrix flagged PSD-only.
    """
    Y = np.atleast_2d(np.asarray(data, dtype=float))
    N = Y.shape[0]
    if N < 1:
        raise DimensionError("need at least one observation")
    if center:
        Y = Y - Y.mean(axis=0)
    return CovMatrix.from_array(Y.T @ Y / N, require_psd=True)


def exact_fa_check(sigma_hat, split):
    """Test whether ``S11 - S12 S22^-1 S21`` is diagonal.

    Returns ``(is_exact, offdiag_norm)``; the test is relative to ``||S11||``.
    """
    S = as_square(sigma_hat, "sigma_hat")
    C = schur_complement(S, split)
    off = float(np.linalg.norm(C - np.diag(np.diag(C))))
    scale = float(np.linalg.norm(blocks(S, split)[0]))
    return off <= EXACT_TOL * scale, off


def exact_fa_realization(sigma_hat, split, k):
    """Exact ``k``-factor model with the trailing ``n2`` noise variances zero.

    With ``R`` the symmetric root of ``S22``: ``H1 = S12 (R^-1, 0)``,
    ``H2 = (R, 0)`` and ``D = diag(S11 - S12 S22^-1 S21, 0)``.
    """
    S = as_square(sigma_hat, "sigma_hat")
    split.check(S.shape[0])
    n1, n2 = split.n1, split.n2
    if n2 < 1:
        raise StructureError("exact realization needs n2 >= 1")
    if n2 > k:
        raise StructureError(f"n2={n2} exceeds k={k}")
    ok, off = exact_fa_check(S, split)
    if not ok:
        raise InfeasibleModelError(
            f"conditional covariance is not diagonal (off-diagonal norm {off:.3e})",
            offdiag_norm=off,
        )
    S11, S12, S21, S22 = blocks(S, split)
    R = psd_sqrt(S22)
    H = np.zeros((S.shape[0], k))
    H[:n1, :n2] = guarded_solve(R, S21, "S22^1/2").T
    H[n1:, :n2] = R
    D = np.r_[np.diag(schur_complement(S, split)), np.zeros(n2)]
    params = FactorParams(H, D)
    err = np.linalg.norm(params.model() - S)
    if err > RECONSTRUCTION_TOL * max(1.0, np.linalg.norm(S)):
        raise InfeasibleModelError(f"reconstruction error {err:.3e}", offdiag_norm=off)
    return params


@dataclass(frozen=True)
class StructureReport:
    """Residual norms describing a stationary point with ``D2 = 0``."""

    d2_norm: float
    s22_residual: float
    s12_residual: float
    reduced_h_residual: float
    reduced_d_residual: float

    @property
    def max_residual(self):
        return max(self.d2_norm, self.s22_residual, self.s12_residual,
                   self.reduced_h_residual, self.reduced_d_residual)

    def ok(self, tol=1e-6):
        return self.max_residual < tol


def stationary_structure_check(sigma_hat, params, split):
    """Check the structure every stationary point with ``D2 = 0`` must have.

    Reports ``||S22 - H2 H2^T||``, ``||S12 - H1 H2^T||`` and the residuals
    of the reduced likelihood equations for ``(H~1, D1)`` against the
    conditional covariance ``S~11``, where ``H~1 = H1 (I - H2^T (H2 H2^T)^-1 H2)``.
    """
    S = as_square(sigma_hat, "sigma_hat")
    split.check(S.shape[0])
    n1 = split.n1
    H, D = params.H, params.D
    H1, H2 = H[:n1], H[n1:]
    G = H2 @ H2.T
    if split.n2 < 1 or np.linalg.matrix_rank(G) < split.n2:
        raise StructureError("lower block of H must have full row rank")
    S11, S12, S21, S22 = blocks(S, split)
    proj = np.eye(H.shape[1]) - H2.T @ np.linalg.solve(G, H2)
    Ht = H1 @ proj
    D1 = D[:n1]
    St = schur_complement(S, split)
    Mt = Ht @ Ht.T + np.diag(D1)
    return StructureReport(
        d2_norm=float(np.linalg.norm(D[n1:])),
        s22_residual=float(np.linalg.norm(S22 - G)),
        s12_residual=float(np.linalg.norm(S12 - H1 @ H2.T)),
        reduced_h_residual=float(np.linalg.norm(Ht - St @ np.linalg.solve(Mt, Ht))),
        reduced_d_residual=float(np.linalg.norm(D1 - np.diag(St - Ht @ Ht.T))),
    )
