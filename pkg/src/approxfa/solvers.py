"""Iterative engines for fitting ``H H^T + D`` to a target covariance.

Engines
-------
``alt``
    Alternating I-divergence minimization in ``(H, D)`` form. The latent
    root is the symmetric one, so iterates of ``H`` are reproducible.
``lpd``
    The same algorithm in ``(L, P, D)`` form; no square roots per step.
``hh``
    The same algorithm run on ``HH = H H^T``; no square roots per step.
``em``
    The EM recursion for factor analysis (constrained second projection).
``singular``
    The ``HH`` recursion under the constraint that the trailing ``n2``
    noise variances are zero. It works on ``n1 x n1`` reduced matrices.

All engines except ``singular`` produce identical models ``H H^T + D`` per
iteration up to rounding when started from matched points (``alt``,
``lpd``, ``hh``), and all of them decrease the divergence monotonically.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .divergence import i_div, objective
from .errors import (
    DimensionError,
    InfeasiblePatternError,
    MonotonicityError,
    NotPSDError,
    SingularMatrixError,
    StructureError,
)
from .lifted import LiftedCov, first_partial_min, second_partial_min
from .linalg import BlockSplit, CovMatrix, as_square, guarded_solve, is_pd, psd_sqrt, schur_complement, sym
from .params import FactorParams, LpdParams

log = logging.getLogger(__name__)

ENGINES = ("alt", "lpd", "hh", "em", "singular")

MONOTONE_SLACK = 1e-10
BOUNDARY_TOL = 1e-10
FIXED_POINT_TOL = 1e-12
# the k x k route divides by D; below this (relative to the largest
# target variance) the direct n x n route is more accurate
FAST_PATH_MIN_D = 1e-8

CONVERGED_REASONS = ("fixed point", "converged", "stationary", "one-step convergence")

__all__ = [
    "ENGINES",
    "Residuals",
    "SingularPattern",
    "SolverConfig",
    "SolverTrace",
    "alt_step",
    "compute_R",
    "default_init",
    "em_step",
    "hh_step",
    "iterate",
    "lpd_step",
    "run",
    "singular_step",
    "stationarity_residuals",
    "step_gain_decomposition",
]


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule and trace stride.

    A run stops at the first of: the model stops changing (fixed point),
    the divergence drops by less than ``div_tol`` in one step, both
    likelihood residuals fall below ``residual_tol``, or ``max_iters``.
    """

    max_iters: int = 1000
    div_tol: float = 1e-12
    residual_tol: float = 1e-12
    record_every: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.div_tol > 0 and self.residual_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class SingularPattern(BlockSplit):
    """Zero pattern ``D = diag(D1, 0)`` with the zeros on the trailing ``n2`` entries."""

    def check_k(self, k):
        if self.n2 < 1:
            raise InfeasiblePatternError("singular pattern needs n2 >= 1")
        if self.n2 > k:
            raise InfeasiblePatternError(f"n2={self.n2} zero variances need k >= n2, got k={k}")


class Residuals(NamedTuple):
    r_H: float
    r_H2: float
    r_D: float


TRACE_COLUMNS = ("iter", "divergence", "l2", "gain", "r_H", "r_D", "min_D")


@dataclass
class SolverTrace:
    """Per-iteration record of a run.

    Row ``i`` describes the iterate after step ``iters[i]``; ``gain[i]`` is
    the lifted gain of that step (nan for engines without one). The
    starting point is summarized by ``initial_divergence`` and
    ``initial_l2``.
    """

    engine: str
    iters: np.ndarray
    divergence: np.ndarray
    l2: np.ndarray
    gain: np.ndarray
    r_H: np.ndarray
    r_H2: np.ndarray
    r_D: np.ndarray
    min_D: np.ndarray
    initial_divergence: float
    initial_l2: float
    reason: str
    n_iter: int
    params: FactorParams
    state: object = None
    boundary_indices: tuple = ()
    divergence_all: np.ndarray = field(default=None, repr=False)

    @property
    def converged(self):
        return self.reason in CONVERGED_REASONS

    @property
    def boundary(self):
        return bool(self.boundary_indices)

    @property
    def final_divergence(self):
        return float(self.divergence[-1])

    @property
    def final_l2(self):
        return float(self.l2[-1])

    def as_array(self):
        """Rows in ``TRACE_COLUMNS`` order; divergence clamped for reporting."""
        div = np.where(np.abs(self.divergence) < 1e-12, 0.0, self.divergence)
        return np.column_stack(
            [self.iters, div, self.l2, self.gain, self.r_H, self.r_D, self.min_D]
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.as_array():
                fh.write(f"{int(row[0])}," + ",".join(_fmt(v) for v in row[1:]) + "\n")


def _fmt(v):
    return "nan" if math.isnan(v) else f"{v:.17g}"


# ---------------------------------------------------------------- validation


def _target(sigma_hat):
    if isinstance(sigma_hat, CovMatrix):
        if not sigma_hat.pd:
            raise NotPSDError(
                "target covariance must be positive definite",
                min_eigenvalue=sigma_hat.min_eigenvalue,
            )
        return np.ascontiguousarray(sigma_hat.entries)
    return np.ascontiguousarray(CovMatrix.from_array(sigma_hat, require_pd=True).entries)


def _check_params(S, params):
    if params.n != S.shape[0]:
        raise DimensionError(f"H has {params.n} rows, target has size {S.shape[0]}")
    if not is_pd(params.model()):
        raise SingularMatrixError("H H^T + D is not positive definite", block="H H^T + D")
    return np.ascontiguousarray(params.H), np.ascontiguousarray(params.D)


def _use_fast(S, H, D):
    n, k = H.shape
    return bool(n > 2 * k and D.min() > FAST_PATH_MIN_D * np.max(np.diag(S)))


# ----------------------------------------------------------------- one step


def compute_R(sigma_hat, params, method="auto"):
    """``R = I - H^T M^-1 H + H^T M^-1 sigma_hat M^-1 H`` with ``M = H H^T + D``.

    ``method`` is ``"direct"`` (n x n solve), ``"lowrank"`` (k x k inverses,
    needs D > 0) or ``"auto"``.
    """
    S = _target(sigma_hat)
    H, D = _check_params(S, params)
    if method == "auto":
        fast = _use_fast(S, H, D)
    elif method in ("direct", "lowrank"):
        fast = method == "lowrank"
        if fast and D.min() <= 0:
            raise SingularMatrixError("low-rank route needs D > 0", block="D")
    else:
        raise ValueError(f"unknown method {method!r}")
    return K.gain_matrix(S, H, D, fast)[1]


def _check_R(R):
    if not is_pd(R):
        raise SingularMatrixError("R is not positive definite", block="R")


def alt_step(sigma_hat, params):
    """One step of alternating minimization.

    ``H+ = S M^-1 H R^-1/2`` and ``D+ = diag(S - H+ H+^T)`` with the
    symmetric inverse root of ``R``.
    """
    S = _target(sigma_hat)
    H, D = _check_params(S, params)
    _check_R(K.gain_matrix(S, H, D, False)[1])
    H1, D1 = K.alt_update(S, H, D, _use_fast(S, H, D))
    return FactorParams(H1, D1)


def em_step(sigma_hat, params):
    """One EM step: ``H+ = S M^-1 H R^-1``, ``D+ = diag(S - H+ R H+^T)``."""
    S = _target(sigma_hat)
    H, D = _check_params(S, params)
    _check_R(K.gain_matrix(S, H, D, False)[1])
    H1, D1 = K.em_update(S, H, D, _use_fast(S, H, D))
    return FactorParams(H1, D1)


def lpd_step(sigma_hat, params):
    """One alternating step in the ``(L, P, D)`` parametrization."""
    S = _target(sigma_hat)
    if not is_pd(params.model()):
        raise SingularMatrixError("L P L^T + D is not positive definite", block="L P L^T + D")
    L1, P1, D1 = K.lpd_update(
        S, np.ascontiguousarray(params.L), np.ascontiguousarray(params.P), params.D
    )
    return LpdParams(L1, P1, D1)


def hh_step(sigma_hat, HH, D):
    """One step of the recursion on ``HH = H H^T``.

    ``HH+ = S (HH + D)^-1 HH (D + S (HH + D)^-1 HH)^-1 S``; the rank of
    ``HH`` is preserved.
    """
    S = _target(sigma_hat)
    HH = np.ascontiguousarray(sym(as_square(HH, "HH")))
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = np.diag(D).copy()
    if HH.shape != S.shape or D.shape != (S.shape[0],):
        raise DimensionError("HH and D must match the target dimension")
    if not is_pd(HH + np.diag(D)):
        raise SingularMatrixError("HH + D is not positive definite", block="HH + D")
    try:
        return K.hh_update(S, HH, np.ascontiguousarray(D))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("D + S (HH + D)^-1 HH is singular", block="inner") from exc


def _pattern(split):
    if isinstance(split, SingularPattern):
        return split
    return SingularPattern(split.n1, split.n2)


def singular_step(sigma_hat, Htilde, Dtilde, split, k=None):
    """One step of the reduced recursion with the trailing ``n2`` variances pinned to zero.

    Works on the conditional covariance ``S~11 = S11 - S12 S22^-1 S21``;
    returns the updated ``(Htilde, Dtilde)`` of size ``n1``. ``k`` (if
    given) is checked against ``n2``.
    """
    S = _target(sigma_hat)
    pattern = _pattern(split)
    pattern.check(S.shape[0])
    if k is not None:
        pattern.check_k(k)
    S_tilde = np.ascontiguousarray(schur_complement(S, pattern))
    HH1 = hh_step(S_tilde, Htilde, Dtilde)
    return HH1, np.diag(S_tilde) - np.diag(HH1)


def stationarity_residuals(sigma_hat, params):
    """Residual norms ``(r_H, r_H2, r_D)`` of the likelihood equations.

    ``r_H`` needs D > 0 and is nan otherwise.
    """
    S = _target(sigma_hat)
    H, D = _check_params(S, params)
    return Residuals(*(float(v) for v in K.ml_residuals(S, H, D)))


def step_gain_decomposition(sigma_hat, params_t, params_t1):
    """Divergence drop of one ``alt`` step next to its lifted gain.

    The lifted covariances are rebuilt through the two projections,
    starting from ``Sigma(H_t, D_t, I)``. For a genuine step the two
    numbers agree.
    """
    S = _target(sigma_hat)
    drop = float(objective(S, params_t)) - float(objective(S, params_t1))
    s1_t = LiftedCov.from_factor(params_t)
    s0_t = first_partial_min(S, s1_t)
    _, _, star = second_partial_min(s0_t)
    # the projection fixes the cross and latent blocks; the corner is the new model
    s1_t1 = LiftedCov.from_blocks(params_t1.model(), star.s12, star.s22)
    s0_t1 = first_partial_min(S, s1_t1)
    gain = float(i_div(s1_t1, s1_t)) + float(i_div(s0_t, s0_t1))
    return drop, gain


def default_init(sigma_hat, k, seed=0):
    """Random feasible starting point.

    ``H0`` has standard normal entries from a Philox stream, rescaled so
    that ``H0 H0^T <= S / 2``; ``D0 = diag(S) / 2``.
    """
    S = _target(sigma_hat)
    n = S.shape[0]
    if not 1 <= k < n:
        raise DimensionError(f"need 1 <= k < n, got k={k}, n={n}")
    rng = np.random.Generator(np.random.Philox(seed))
    H = rng.standard_normal((n, k))
    lam = np.linalg.eigvalsh(H.T @ np.linalg.solve(S, H))[-1]
    H *= math.sqrt(0.5 / lam)
    return FactorParams(H, 0.5 * np.diag(S))


# -------------------------------------------------------------------- driver


class _Engine:
    """Engine-specific state handling used by :func:`run`."""

    def __init__(self, name, S, init, pattern=None):
        self.name = name
        self.S = S
        self.n = S.shape[0]
        self.sdiag = np.diag(S).copy()
        if name in ("alt", "em"):
            H, D = _check_params(S, init)
            self.k = H.shape[1]
            self.state = (H, D)
        elif name == "lpd":
            lpd = init if isinstance(init, LpdParams) else LpdParams.from_factor(init)
            if not is_pd(lpd.model()):
                raise SingularMatrixError("L P L^T + D is not positive definite")
            self.k = lpd.L.shape[1]
            self.state = (np.ascontiguousarray(lpd.L), np.ascontiguousarray(lpd.P), lpd.D)
        elif name == "hh":
            H, D = _check_params(S, init)
            self.k = H.shape[1]
            self.state = (np.ascontiguousarray(sym(H @ H.T)), D)
        elif name == "singular":
            self._init_singular(init, pattern)
        else:
            raise ValueError(f"unknown engine {name!r}; choose from {ENGINES}")

    def _init_singular(self, init, pattern):
        if pattern is None:
            raise StructureError("singular engine needs a zero pattern")
        pattern = _pattern(pattern)
        pattern.check(self.n)
        self.k = init.k
        pattern.check_k(self.k)
        n1 = pattern.n1
        H = init.H
        H1, H2 = H[:n1], H[n1:]
        if np.linalg.matrix_rank(H2) < pattern.n2:
            raise StructureError("lower block of the initial H must have full row rank")
        Dt = init.D[:n1].copy()
        if Dt.min() <= 0:
            raise StructureError("initial D1 must be positive")
        self.pattern = pattern
        S = self.S
        S11, S12, S22 = S[:n1, :n1], S[:n1, n1:], S[n1:, n1:]
        self.S_tilde = np.ascontiguousarray(schur_complement(S, pattern))
        self.border = sym(S12 @ guarded_solve(S22, S12.T, "S22"))
        self.R2 = psd_sqrt(S22)
        self.top_right = guarded_solve(self.R2, S12.T, "S22^1/2").T  # S12 R2^-1
        proj = np.eye(self.k) - H2.T @ np.linalg.solve(H2 @ H2.T, H2)
        HHt = np.ascontiguousarray(sym(H1 @ proj @ H1.T))
        self.init_model = sym(H @ H.T) + np.diag(np.r_[Dt, np.zeros(pattern.n2)])
        self.state = (HHt, Dt)

    # -- per-engine pieces

    def advance(self):
        S = self.S
        if self.name == "alt":
            H, D = self.state
            self.state = K.alt_update(S, H, D, _use_fast(S, H, D))
        elif self.name == "em":
            H, D = self.state
            self.state = K.em_update(S, H, D, _use_fast(S, H, D))
        elif self.name == "lpd":
            self.state = K.lpd_update(S, *self.state)
        elif self.name == "hh":
            HH, D = self.state
            HH1 = K.hh_update_rank(S, HH, D, self.k)
            self.state = (HH1, self.sdiag - np.diag(HH1))
        else:
            HHt, Dt = self.state
            HHt1 = K.hh_update_rank(self.S_tilde, HHt, Dt, self.k - self.pattern.n2)
            self.state = (HHt1, np.diag(self.S_tilde) - np.diag(HHt1))

    def model(self):
        if self.name in ("alt", "em"):
            H, D = self.state
            return K.model_matrix(H, D)
        if self.name == "lpd":
            L, P, D = self.state
            return sym(L @ P @ L.T) + np.diag(D)
        if self.name == "hh":
            HH, D = self.state
            return HH + np.diag(D)
        HHt, Dt = self.state
        n1 = self.pattern.n1
        M = self.S.copy()
        M[:n1, :n1] = HHt + self.border + np.diag(Dt)
        return M

    def factors(self, state=None):
        """``(H, D)`` with ``H H^T + D`` equal to the model of ``state`` (default: current)."""
        state = self.state if state is None else state
        if self.name in ("alt", "em"):
            return state
        if self.name == "lpd":
            L, P, D = state
            return np.ascontiguousarray(L @ K.sqrt_sym(P)), D
        if self.name == "hh":
            HH, D = state
            return np.ascontiguousarray(K.factor_psd(HH, self.k)), D
        HHt, Dt = state
        n1, n2 = self.pattern.n1, self.pattern.n2
        H = np.zeros((self.n, self.k))
        if self.k > n2:
            H[:n1, : self.k - n2] = K.factor_psd(HHt, self.k - n2)
        H[:n1, self.k - n2 :] = self.top_right
        H[n1:, self.k - n2 :] = self.R2
        return H, np.r_[Dt, np.zeros(n2)]

    def native_state(self):
        if self.name == "lpd":
            return LpdParams(*self.state)
        if self.name in ("hh", "singular"):
            return tuple(np.array(a) for a in self.state)
        return None

    def gain(self, prev_state, model1):
        """Lifted gain of the step that left ``prev_state`` and produced ``model1``."""
        if self.name == "em":
            return math.nan
        if self.name == "singular":
            reduced_k = self.k - self.pattern.n2
            if reduced_k == 0:
                return math.nan
            HHt, Dt = prev_state
            Ht = np.ascontiguousarray(K.factor_psd(HHt, reduced_k))
            n1 = self.pattern.n1
            m1 = np.ascontiguousarray(model1[:n1, :n1] - self.border)
            return K.lifted_gain(self.S_tilde, Ht, Dt, m1)
        H, D = self.factors(prev_state)
        return K.lifted_gain(self.S, H, D, model1)


def _initial_model(engine):
    if engine.name == "singular":
        return engine.init_model
    return engine.model()


def iterate(engine, sigma_hat, init, pattern=None):
    """Yield the model matrix ``H_t H_t^T + D_t`` after each step, t = 1, 2, ...

    Same engines and arguments as :func:`run`, without stopping rules or
    bookkeeping.
    """
    eng = _Engine(engine, _target(sigma_hat), init, pattern)
    while True:
        eng.advance()
        yield eng.model()


def run(engine, sigma_hat, init, config=None, pattern=None):
    """Iterate ``engine`` from ``init`` and record a :class:`SolverTrace`.

    Parameters
    ----------
    engine : {"alt", "lpd", "hh", "em", "singular"}
    sigma_hat : array_like or CovMatrix
        Positive definite target.
    init : FactorParams or LpdParams
        Starting point. ``lpd`` accepts ``FactorParams`` (embedded with
        ``P = I``). For ``singular`` the trailing ``n2`` entries of
        ``init.D`` are ignored and the lower block of ``init.H`` must have
        full row rank.
    config : SolverConfig, optional
    pattern : SingularPattern or BlockSplit, optional
        Required for ``singular``.

    Raises
    ------
    MonotonicityError
        If the divergence increases by more than ``MONOTONE_SLACK``.
    """
    config = config or SolverConfig()
    S = _target(sigma_hat)
    eng = _Engine(engine, S, init, pattern)
    logdet_S = K.chol_logdet(S)
    model = _initial_model(eng)
    prev_div = K.gauss_idiv(S, logdet_S, model)
    initial_div, initial_l2 = prev_div, float(np.linalg.norm(S - model))
    one_step = engine == "singular" and eng.pattern.n2 == eng.k

    rows = []
    all_div = []
    reason = "max_iters"
    boundary = ()
    t = 0
    for t in range(1, config.max_iters + 1):
        state_before = eng.state
        try:
            eng.advance()
            new_model = eng.model()
            div = K.gauss_idiv(S, logdet_S, new_model)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"{engine}: singular matrix at iteration {t}: {exc}") from exc
        all_div.append(div)
        if div > prev_div + MONOTONE_SLACK:
            raise MonotonicityError(
                f"{engine}: divergence increased at iteration {t} ({prev_div!r} -> {div!r})",
                diagnostic={
                    "iteration": t,
                    "previous": prev_div,
                    "current": div,
                    "state_before": state_before,
                    "state_after": eng.state,
                },
            )
        change = np.linalg.norm(new_model - model)
        H, D = eng.factors()
        res = K.ml_residuals(S, H, D)
        if one_step:
            reason = "one-step convergence"
        elif change <= FIXED_POINT_TOL * np.linalg.norm(model):
            reason = "fixed point"
        elif prev_div - div < config.div_tol:
            reason = "converged"
        elif res[1] <= config.residual_tol and res[2] <= config.residual_tol:
            reason = "stationary"
        stop = reason != "max_iters" or t == config.max_iters
        if stop or t % config.record_every == 0:
            gain = eng.gain(state_before, new_model)
            rows.append(
                (t, div, float(np.linalg.norm(S - new_model)), gain, *res, float(D.min()))
            )
        if engine != "singular" and D.min() < BOUNDARY_TOL:
            boundary = tuple(int(i) for i in np.flatnonzero(D < BOUNDARY_TOL))
        model, prev_div = new_model, div
        if stop:
            break

    if boundary:
        log.warning(
            "%s: noise variances %s approach zero; consider the singular engine "
            "with these coordinates ordered last",
            engine,
            list(boundary),
        )
    cols = np.array(rows, dtype=float).reshape(-1, 8)
    H, D = eng.factors()
    return SolverTrace(
        engine=engine,
        iters=cols[:, 0].astype(int),
        divergence=cols[:, 1],
        l2=cols[:, 2],
        gain=cols[:, 3],
        r_H=cols[:, 4],
        r_H2=cols[:, 5],
        r_D=cols[:, 6],
        min_D=cols[:, 7],
        initial_divergence=float(initial_div),
        initial_l2=initial_l2,
        reason=reason,
        n_iter=t,
        params=FactorParams(np.array(H), np.array(D)),
        state=eng.native_state(),
        boundary_indices=boundary,
        divergence_all=np.array(all_div),
    )
