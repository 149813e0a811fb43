"""Dense symmetric / positive semidefinite matrix primitives.

Everything here is a pure function of its inputs. The block formulas
follow the usual partition

    M = [[A, C],
         [B, D]]

with ``A`` the upper-left block of size ``n1`` and ``D`` the lower-right
block of size ``n2``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NotPSDError, SingularMatrixError

SYMMETRY_TOL = 1e-8
PSD_TOL = 1e-10
COND_LIMIT = 1e14

__all__ = [
    "BlockSplit",
    "CovMatrix",
    "as_square",
    "block_inverse",
    "blocks",
    "delta",
    "guarded_inv",
    "guarded_solve",
    "is_pd",
    "l2_diff",
    "psd_inv_sqrt",
    "psd_sqrt",
    "schur_complement",
    "sym",
    "woodbury_inverse",
]


def as_square(M, name="matrix"):
    """Return ``M`` as a float 2-D square array or raise :class:`DimensionError`."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def sym(M):
    return 0.5 * (M + M.T)


def is_pd(M):
    """True if ``M`` admits a Cholesky factorization."""
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


@dataclass(frozen=True)
class BlockSplit:
    """Partition of a square matrix into an ``n1`` and an ``n2`` diagonal block."""

    n1: int
    n2: int

    def __post_init__(self):
        if int(self.n1) != self.n1 or int(self.n2) != self.n2:
            raise DimensionError("block sizes must be integers")
        if self.n1 < 1 or self.n2 < 0:
            raise DimensionError(f"need n1 >= 1 and n2 >= 0, got ({self.n1}, {self.n2})")

    @property
    def dim(self):
        return self.n1 + self.n2

    def check(self, dim):
        if self.dim != dim:
            raise DimensionError(f"split ({self.n1}, {self.n2}) does not fit dimension {dim}")


def blocks(M, split):
    """Return ``(M11, M12, M21, M22)`` for the given split."""
    M = np.asarray(M, dtype=float)
    split.check(M.shape[0])
    n1 = split.n1
    return M[:n1, :n1], M[:n1, n1:], M[n1:, :n1], M[n1:, n1:]


@dataclass(frozen=True)
class CovMatrix:
    """Validated symmetric matrix, stored exactly symmetrized and read-only.

    Use :meth:`from_array` to build one. ``psd`` and ``pd`` record what
    was verified at construction.
    """

    entries: np.ndarray
    symmetry_tol: float = SYMMETRY_TOL
    psd: bool = False
    pd: bool = False
    min_eigenvalue: float = field(default=float("nan"), compare=False)

    @classmethod
    def from_array(cls, M, symmetry_tol=SYMMETRY_TOL, require_psd=True, require_pd=False):
        M = as_square(M)
        if not np.all(np.isfinite(M)):
            raise ValueError("matrix has non-finite entries")
        scale = np.linalg.norm(M)
        asym = np.linalg.norm(M - M.T)
        if asym > symmetry_tol * max(scale, np.finfo(float).tiny):
            raise ValueError(
                f"matrix is not symmetric: asymmetry {asym:.3e} exceeds "
                f"{symmetry_tol:g} relative to norm {scale:.3e}"
            )
        S = sym(M)
        S.setflags(write=False)
        eig = np.linalg.eigvalsh(S)
        lam_min, lam_max = float(eig[0]), float(eig[-1])
        psd = lam_min >= -PSD_TOL * max(abs(lam_max), 0.0)
        pd = psd and lam_min > 0 and is_pd(S)
        if require_pd and not pd:
            raise NotPSDError(
                f"matrix is not positive definite (smallest eigenvalue {lam_min:.3e})",
                min_eigenvalue=lam_min,
            )
        if require_psd and not psd:
            raise NotPSDError(
                f"matrix is not positive semidefinite (smallest eigenvalue {lam_min:.3e})",
                min_eigenvalue=lam_min,
            )
        return cls(S, symmetry_tol, psd, pd, lam_min)

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __repr__(self):
        return f"CovMatrix(dim={self.dim}, psd={self.psd}, pd={self.pd})"


def delta(M):
    """Keep the diagonal of a square matrix and zero everything else."""
    M = as_square(M)
    return np.diag(np.diag(M))


def _check_psd(P, name):
    P = sym(as_square(P, name))
    w, V = np.linalg.eigh(P)
    if w[0] < -PSD_TOL * max(abs(w[-1]), 0.0):
        raise NotPSDError(
            f"{name} is not positive semidefinite (smallest eigenvalue {w[0]:.3e})",
            min_eigenvalue=float(w[0]),
        )
    return w, V


def psd_sqrt(P):
    """Symmetric PSD square root via eigendecomposition."""
    w, V = _check_psd(P, "P")
    S = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return sym(S)


def psd_inv_sqrt(P):
    """Inverse of the symmetric square root of a positive definite ``P``."""
    w, V = _check_psd(P, "P")
    if w[0] <= 0 or w[-1] / w[0] > COND_LIMIT:
        raise SingularMatrixError(
            f"cannot take inverse square root: eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}]",
            block="P",
            condition=np.inf if w[0] <= 0 else w[-1] / w[0],
        )
    return sym((V / np.sqrt(w)) @ V.T)


def _condition(M):
    if M.size == 0:
        return 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.linalg.cond(M)
    return float(c) if np.isfinite(c) else np.inf


def guarded_inv(M, name="matrix"):
    """Inverse with a condition-number guard.

    Raises :class:`SingularMatrixError` naming ``name`` when the condition
    estimate exceeds ``COND_LIMIT``.
    """
    M = as_square(M, name)
    cond = _condition(M)
    if cond > COND_LIMIT:
        raise SingularMatrixError(
            f"{name} is singular or ill-conditioned (condition {cond:.3e})",
            block=name,
            condition=cond,
        )
    return np.linalg.inv(M)


def guarded_solve(M, B, name="matrix"):
    """Solve ``M X = B`` with the same guard as :func:`guarded_inv`."""
    M = as_square(M, name)
    cond = _condition(M)
    if cond > COND_LIMIT:
        raise SingularMatrixError(
            f"{name} is singular or ill-conditioned (condition {cond:.3e})",
            block=name,
            condition=cond,
        )
    return np.linalg.solve(M, B)


def block_inverse(M, split):
    """Invert ``M`` blockwise through the Schur complement of its ``D`` block."""
    M = as_square(M)
    A, C, B, D = blocks(M, split)
    if split.n2 == 0:
        return guarded_inv(A, "A")
    Dinv = guarded_inv(D, "D")
    S = A - C @ Dinv @ B
    Sinv = guarded_inv(S, "Schur complement A - C D^-1 B")
    upper_right = -Sinv @ C @ Dinv
    lower_left = -Dinv @ B @ Sinv
    lower_right = Dinv + Dinv @ B @ Sinv @ C @ Dinv
    return np.block([[Sinv, upper_right], [lower_left, lower_right]])


def woodbury_inverse(D, B, A, C):
    """Return ``(D - B A C)^-1`` inverting only ``D`` and inner-size matrices.

    ``D`` may be a 1-D array, read as a diagonal matrix. Scalars are
    promoted to 1x1 matrices.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        if np.any(D == 0):
            raise SingularMatrixError("diagonal D has zero entries", block="D")
        Dinv = np.diag(1.0 / D)
    else:
        Dinv = guarded_inv(D, "D")
    n = Dinv.shape[0]
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    m = A.shape[0]
    if A.shape != (m, m) or B.shape[1] != m or C.shape[0] != m:
        raise DimensionError(
            f"inconsistent shapes D{Dinv.shape}, B{B.shape}, A{A.shape}, C{C.shape}"
        )
    inner = guarded_inv(A, "A") - C @ Dinv @ B
    DinvB = Dinv @ B
    return Dinv + DinvB @ guarded_solve(inner, C @ Dinv, "A^-1 - C D^-1 B")


def schur_complement(M, split):
    """``M11 - M12 M22^-1 M21``, symmetrized."""
    M = as_square(M)
    M11, M12, M21, M22 = blocks(M, split)
    if split.n2 == 0:
        return M11.copy()
    return sym(M11 - M12 @ guarded_solve(M22, M21, "M22"))


def l2_diff(A, B):
    """Frobenius norm of ``A - B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.linalg.norm(A - B))
