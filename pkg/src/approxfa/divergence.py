"""I-divergence (Kullback-Leibler) between zero-mean Gaussian laws.

For positive definite ``S1``, ``S2`` of size m::

    I(S1 || S2) = 1/2 log(|S2| / |S1|) - m/2 + 1/2 tr(S2^-1 S1)

Log-determinants come from Cholesky factors, so large ``m`` does not
overflow. A singular second argument gives ``+inf``.
"""

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionError, DomainError, StructureError
from .linalg import BlockSplit, as_square, blocks, guarded_solve, schur_complement, sym
from .params import FactorParams

ZERO_CLAMP = 1e-12

__all__ = [
    "DivergenceValue",
    "i_div",
    "i_div_with_means",
    "objective",
    "reduce_loading",
    "singular_div_decomposition",
]


class DivergenceValue(float):
    """A divergence in nats.

    The float value is the raw computed number (it may be a hair below
    zero). :attr:`nats` is the reported value, clamped to 0 when within
    ``ZERO_CLAMP`` of zero. ``+inf`` marks a singular second argument.
    """

    @property
    def raw(self):
        return float(self)

    @property
    def nats(self):
        v = float(self)
        return 0.0 if abs(v) < ZERO_CLAMP else v

    @property
    def is_infinite(self):
        return math.isinf(self)

    def __repr__(self):
        return f"DivergenceValue({float(self)!r})"


INFINITE = DivergenceValue(math.inf)


def _cholesky(S):
    try:
        return cho_factor(S, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        return None


def _logdet(cf):
    return 2.0 * float(np.sum(np.log(np.diag(cf[0]))))


def i_div(S1, S2):
    """I-divergence ``I(S1 || S2)`` between two covariance matrices."""
    S1 = sym(as_square(S1, "S1"))
    S2 = sym(as_square(S2, "S2"))
    if S1.shape != S2.shape:
        raise DimensionError(f"shape mismatch {S1.shape} vs {S2.shape}")
    c1 = _cholesky(S1)
    if c1 is None:
        raise DomainError("first argument of the I-divergence must be positive definite")
    c2 = _cholesky(S2)
    if c2 is None:
        return INFINITE
    m = S1.shape[0]
    tr = float(np.trace(cho_solve(c2, S1)))
    return DivergenceValue(0.5 * (_logdet(c2) - _logdet(c1)) - 0.5 * m + 0.5 * tr)


def i_div_with_means(mu1, S1, mu2, S2):
    """I-divergence between ``N(mu1, S1)`` and ``N(mu2, S2)``."""
    base = i_div(S1, S2)
    mu1 = np.asarray(mu1, dtype=float).reshape(-1)
    mu2 = np.asarray(mu2, dtype=float).reshape(-1)
    m = np.asarray(S1).shape[0] if np.ndim(S1) else 1
    if mu1.shape != (m,) or mu2.shape != (m,):
        raise DimensionError("mean vectors must match the covariance dimension")
    if base.is_infinite:
        return base
    d = mu1 - mu2
    S2 = sym(as_square(S2, "S2"))
    quad = float(d @ cho_solve(cho_factor(S2, lower=True), d))
    return DivergenceValue(float(base) + 0.5 * quad)


def objective(sigma_hat, params):
    """``I(sigma_hat || H H^T + D)``."""
    return i_div(sigma_hat, params.model())


def reduce_loading(H, split):
    """Rotate ``H`` so its lower block reads ``(0, H22)`` with ``H22`` square.

    Returns ``H V`` for an orthogonal ``V`` built from the SVD of the lower
    ``n2`` rows, so that ``H V V^T H^T = H H^T``. Requires the lower block to
    have full row rank.
    """
    H = np.asarray(H, dtype=float)
    n1, n2 = split.n1, split.n2
    k = H.shape[1]
    if n2 > k:
        raise StructureError(f"n2={n2} exceeds the number of factors k={k}")
    _, s, Vt = np.linalg.svd(H[n1:], full_matrices=True)
    if s.size and s[-1] <= 1e-12 * s[0]:
        raise StructureError("lower block of H is rank deficient")
    # svd puts the row space first; move it to the trailing n2 columns
    V = Vt.T[:, np.r_[n2:k, 0:n2]]
    Hr = H @ V
    Hr[n1:, : k - n2] = 0.0
    return Hr


def singular_div_decomposition(sigma_hat, params, split, atol=1e-12):
    """Split the objective for a model whose trailing ``n2`` noise variances vanish.

    ``params.H`` must already be in reduced form ``[[H11, H12], [0, H22]]``
    with ``H22`` (n2 x n2) invertible, see :func:`reduce_loading`.

    Returns
    -------
    term_tilde : DivergenceValue
        ``I(S~11 || H11 H11^T + D1)`` with ``S~11`` the Schur complement of
        the lower block of ``sigma_hat``.
    term_22 : DivergenceValue
        ``I(S22 || H22 H22^T)``.
    trace_term : float
        ``1/2 tr(S22 K^T (H11 H11^T + D1)^-1 K)`` where
        ``K = S12 S22^-1 - H12 H22^-1``.
    """
    S = as_square(sigma_hat, "sigma_hat")
    H, D = params.H, params.D
    n, k = H.shape
    split.check(n)
    n1, n2 = split.n1, split.n2
    if n2 < 1:
        raise StructureError("decomposition needs at least one zero noise variance")
    if n2 > k:
        raise StructureError(f"n2={n2} exceeds the number of factors k={k}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)), float(np.abs(D).max(initial=0.0)))
    if np.any(np.abs(D[n1:]) > atol * scale):
        raise StructureError("trailing noise variances must be zero")
    if np.any(np.abs(H[n1:, : k - n2]) > atol * scale):
        raise StructureError("H is not in reduced form: lower-left block must vanish")
    H11 = H[:n1, : k - n2]
    H12 = H[:n1, k - n2 :]
    H22 = H[n1:, k - n2 :]
    S11, S12, S21, S22 = blocks(S, split)
    S_tilde = schur_complement(S, split)
    inner = H11 @ H11.T + np.diag(D[:n1])
    K = guarded_solve(S22, S21, "sigma_hat_22").T - guarded_solve(H22.T, H12.T, "H22").T
    term_tilde = i_div(S_tilde, inner)
    term_22 = i_div(S22, H22 @ H22.T)
    trace_term = 0.5 * float(np.trace(S22 @ K.T @ np.linalg.solve(inner, K)))
    return term_tilde, term_22, trace_term
