"""Per-iteration numeric kernels.

Written against the subset of numpy that numba's nopython mode accepts,
so the same source runs compiled or interpreted (see :mod:`._accel`).
Inputs are float64 arrays; ``D`` is always a 1-D vector of noise
variances. No validation happens here: callers check shapes and
definiteness once, outside the loop.
"""

import numpy as np

from ._accel import jit


@jit
def sym(A):
    return 0.5 * (A + A.T)


@jit
def model_matrix(H, D):
    return sym(H @ H.T) + np.diag(D)


@jit
def chol_logdet(M):
    C = np.linalg.cholesky(M)
    return 2.0 * np.sum(np.log(np.diag(C)))


@jit
def gauss_idiv(S1, logdet1, S2):
    """I-divergence with the log-determinant of ``S1`` supplied by the caller."""
    m = S1.shape[0]
    tr = np.trace(np.linalg.solve(S2, S1))
    return 0.5 * (chol_logdet(S2) - logdet1) - 0.5 * m + 0.5 * tr


@jit
def sqrt_sym(R):
    w, V = np.linalg.eigh(R)
    w = np.maximum(w, 0.0)
    return sym((V * np.sqrt(w)) @ V.T)


@jit
def inv_sqrt_sym(R):
    w, V = np.linalg.eigh(R)
    return sym((V / np.sqrt(w)) @ V.T)


@jit
def gain_matrix(sigma, H, D, fast):
    """Return ``W = (H H^T + D)^-1 H`` and the k x k matrix ``R``.

    ``R = I - H^T W + W^T sigma W``. With ``fast`` set, only k x k systems
    are solved, using ``W = D^-1 H (I + H^T D^-1 H)^-1``.
    """
    k = H.shape[1]
    if fast:
        DiH = H / D.reshape(-1, 1)
        G = np.eye(k) + H.T @ DiH
        Gi = np.linalg.inv(G)
        W = DiH @ Gi
        R = Gi + Gi @ (DiH.T @ sigma @ DiH) @ Gi
    else:
        M = model_matrix(H, D)
        W = np.linalg.solve(M, H)
        R = np.eye(k) - H.T @ W + W.T @ sigma @ W
    return np.ascontiguousarray(W), sym(R)


@jit
def diag_residual(sigma, H1, K):
    """``diag(sigma - H1 K H1^T)`` for symmetric ``K``."""
    return np.diag(sigma) - np.sum((H1 @ K) * H1, axis=1)


@jit
def alt_update(sigma, H, D, fast):
    W, R = gain_matrix(sigma, H, D, fast)
    H1 = sigma @ W @ inv_sqrt_sym(R)
    D1 = np.diag(sigma) - np.sum(H1 * H1, axis=1)
    return H1, D1


@jit
def em_update(sigma, H, D, fast):
    W, R = gain_matrix(sigma, H, D, fast)
    SW = sigma @ W
    H1 = np.linalg.solve(R, SW.T).T
    D1 = diag_residual(sigma, H1, R)
    return H1, D1


@jit
def lpd_update(sigma, L, P, D):
    M = sym(L @ P @ L.T) + np.diag(D)
    W = np.linalg.solve(M, L)
    P1 = sym(P - P @ (L.T @ W - W.T @ sigma @ W) @ P)
    L1 = np.linalg.solve(P1, (sigma @ W @ P).T).T
    D1 = diag_residual(sigma, L1, P1)
    return L1, P1, D1


@jit
def hh_update(sigma, HH, D):
    M = HH + np.diag(D)
    X = np.linalg.solve(M, HH)
    T = np.diag(D) + sigma @ X
    return sym(sigma @ X @ np.linalg.solve(T, sigma))


@jit
def hh_update_rank(sigma, HH, D, k):
    """``hh_update`` followed by truncation to the best rank-``k`` PSD part.

    The exact recursion keeps ``HH`` PSD of rank ``k``, but in floating
    point it amplifies rounding outside that subspace by a constant factor
    per step, so long runs must cut it back.
    """
    F = factor_psd(hh_update(sigma, HH, D), k)
    return sym(F @ F.T)


@jit
def factor_psd(HH, k):
    """An n x k factor ``H`` with ``H H^T`` the best rank-k part of ``HH``."""
    w, V = np.linalg.eigh(HH)
    n = HH.shape[0]
    w = np.maximum(w[n - k :], 0.0)
    return V[:, n - k :] * np.sqrt(w)


@jit
def ml_residuals(sigma, H, D):
    """Residuals of the likelihood equations.

    ``r_H = ||H - (sigma - H H^T) D^-1 H||`` (nan unless D > 0),
    ``r_H2 = ||H - sigma (H H^T + D)^-1 H||``,
    ``r_D = ||D - diag(sigma - H H^T)||``.
    """
    M = model_matrix(H, D)
    r_H2 = np.linalg.norm(H - sigma @ np.linalg.solve(M, H))
    r_D = np.linalg.norm(D - (np.diag(sigma) - np.sum(H * H, axis=1)))
    if np.min(D) > 0.0:
        E = sigma - H @ H.T
        r_H = np.linalg.norm(H - E @ (H / D.reshape(-1, 1)))
    else:
        r_H = np.nan
    return r_H, r_H2, r_D


@jit
def _assemble(S11, S12, S22):
    n = S11.shape[0]
    k = S22.shape[0]
    out = np.empty((n + k, n + k))
    out[:n, :n] = S11
    out[:n, n:] = S12
    out[n:, :n] = S12.T
    out[n:, n:] = S22
    return out


@jit
def lifted_gain(sigma, H, D, model1):
    """Lifted gain of one alternating step from ``(H, D)`` to ``model1``.

    With ``Q_t = I`` the four lifted covariances are

    - ``S1_t  = [[M, H], [H^T, I]]``
    - ``S0_t  = [[sigma, sigma W], [W^T sigma, R]]``
    - ``S1_t1 = [[model1, sigma W], [W^T sigma, R]]``
    - ``S0_t1`` the projection of ``S1_t1`` with ``sigma`` in the corner

    and the gain is ``I(S1_t1 || S1_t) + I(S0_t || S0_t1)``.
    """
    k = H.shape[1]
    M = model_matrix(H, D)
    W = np.linalg.solve(M, H)
    R = sym(np.eye(k) - H.T @ W + W.T @ sigma @ W)
    SW = sigma @ W
    S1t = _assemble(M, H, np.eye(k))
    S0t = _assemble(sigma, SW, R)
    S1t1 = _assemble(model1, SW, R)
    G = np.linalg.solve(model1, SW)
    S0t1 = _assemble(sigma, sigma @ G, sym(R - G.T @ (model1 - sigma) @ G))
    g1 = gauss_idiv(S1t1, chol_logdet(S1t1), S1t)
    g0 = gauss_idiv(S0t, chol_logdet(S0t), S0t1)
    return g1 + g0
