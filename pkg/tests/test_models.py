import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from approxfa import BlockSplit, FactorParams, SolverConfig, default_init, objective, run
from approxfa.errors import DimensionError, InfeasibleModelError, StructureError
from approxfa.matrix_io import read_matrix
from approxfa.models import (
    GeneratorSpec,
    exact_fa_check,
    exact_fa_realization,
    generate_sigma,
    sample_covariance,
    stationary_structure_check,
)
from approxfa.solvers import SingularPattern

from conftest import FIG_DIR, fig_sigma, random_spd

# off-diagonal Schur norm of A3 with split (2, 1), 50-digit mpmath value
A3 = np.array([[4, 1, 0.5], [1, 3, 0.25], [0.5, 0.25, 2]])
A3_OFFDIAG = 1.3258252147247766083


# -- generator

def test_generator_identity_hook():
    S, (A, d) = generate_sigma(GeneratorSpec(3, 3, 0.0, 0), A=np.eye(3))
    np.testing.assert_array_equal(S.entries, np.eye(3))
    np.testing.assert_array_equal(d, 0)


def test_generator_matches_fixture():
    S, (A, d) = generate_sigma(GeneratorSpec(10, 5, 2.0, 1))
    np.testing.assert_allclose(S.entries, fig_sigma(1), rtol=1e-15)
    np.testing.assert_allclose(A, read_matrix(FIG_DIR / "A_01.csv"), rtol=0)
    assert np.all((A >= 0) & (A <= 1)) and np.all((d >= 0) & (d <= 2))


def test_fixture_structure():
    S = fig_sigma(1)
    A = read_matrix(FIG_DIR / "A_01.csv")
    assert np.linalg.eigvalsh(S).min() > 0
    lam = np.linalg.eigvalsh(A @ A.T)
    assert int(np.sum(lam > 1e-10 * lam.max())) == 5


def test_generator_determinism():
    a, _ = generate_sigma(GeneratorSpec(10, 5, 2.0, 7))
    b, _ = generate_sigma(GeneratorSpec(10, 5, 2.0, 7))
    assert a.entries.tobytes() == b.entries.tobytes()
    c, _ = generate_sigma(GeneratorSpec(10, 5, 2.0, 8))
    assert not np.array_equal(a.entries, c.entries)


def test_generator_rank_deficient_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="approxfa.models"):
        S, _ = generate_sigma(GeneratorSpec(6, 2, 0.0, 0))
    assert S.psd and not S.pd
    assert "semidefinite" in caplog.text


def test_generator_spec_validation():
    with pytest.raises(DimensionError):
        GeneratorSpec(4, 5)
    with pytest.raises(ValueError):
        GeneratorSpec(4, 2, c=-1.0)


# -- sample covariance

def test_sample_covariance_single_row():
    y = np.array([1.0, 2.0, -1.0])
    np.testing.assert_allclose(sample_covariance(y[None, :]).entries, np.outer(y, y))


def test_sample_covariance_scaled_identity_rows():
    n = 4
    np.testing.assert_allclose(sample_covariance(np.sqrt(n) * np.eye(n)).entries, np.eye(n), atol=1e-15)


def test_centering_removes_mean_outer_product(rng):
    Y = rng.standard_normal((30, 3)) + [1.0, -2.0, 0.5]
    mu = Y.mean(axis=0)
    diff = sample_covariance(Y).entries - sample_covariance(Y, center=True).entries
    np.testing.assert_allclose(diff, np.outer(mu, mu), atol=1e-12)


def test_few_samples_flag_psd_only(rng):
    S = sample_covariance(rng.standard_normal((2, 5)))
    assert S.psd and not S.pd


# -- exact factor model checks

def test_exact_check_examples():
    ok, off = exact_fa_check(np.array([[2.0, 1.0], [1.0, 1.0]]), BlockSplit(1, 1))
    assert ok and off == 0
    D = np.diag([3.0, 1.0, 2.0, 5.0])
    for n2 in (1, 2, 3):
        assert exact_fa_check(D, BlockSplit(4 - n2, n2))[0]
    ok, off = exact_fa_check(A3, BlockSplit(2, 1))
    assert not ok
    assert off == pytest.approx(A3_OFFDIAG, rel=1e-13)


def test_realization_scalar_example():
    p = exact_fa_realization(np.array([[2.0, 1.0], [1.0, 1.0]]), BlockSplit(1, 1), 1)
    np.testing.assert_allclose(p.H, [[1.0], [1.0]])
    np.testing.assert_allclose(p.D, [1.0, 0.0])


def test_realization_rejects_empty_block_and_infeasible():
    with pytest.raises(StructureError):
        exact_fa_realization(np.diag([1.0, 2.0]), BlockSplit(2, 0), 1)
    with pytest.raises(InfeasibleModelError) as info:
        exact_fa_realization(A3, BlockSplit(2, 1), 2)
    assert info.value.offdiag_norm == pytest.approx(A3_OFFDIAG, rel=1e-13)


def planted(rng, n1, n2):
    # n2 factors and zero trailing noise: the conditional covariance is D1
    H = rng.standard_normal((n1 + n2, n2))
    D = np.r_[0.2 + rng.random(n1), np.zeros(n2)]
    return H @ H.T + np.diag(D)


@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_plant_and_recover(n1, n2, extra, seed):
    rng = np.random.default_rng(seed)
    k = n2 + extra
    S = planted(rng, n1, n2)
    split = BlockSplit(n1, n2)
    assert exact_fa_check(S, split)[0]
    p = exact_fa_realization(S, split, k)
    H1, H2 = p.H[:n1], p.H[n1:]
    np.testing.assert_allclose(H2 @ H2.T, S[n1:, n1:], atol=1e-10 * np.abs(S).max())
    np.testing.assert_allclose(H1 @ H2.T, S[:n1, n1:], atol=1e-10 * np.abs(S).max())
    assert abs(float(objective(S, p))) < 1e-12 * max(1.0, np.linalg.cond(S))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_projection_is_idempotent_and_symmetric(n2, extra, seed):
    rng = np.random.default_rng(seed)
    H2 = rng.standard_normal((n2, n2 + extra))
    P = np.eye(n2 + extra) - H2.T @ np.linalg.solve(H2 @ H2.T, H2)
    assert np.abs(P @ P - P).max() < 1e-10
    assert np.abs(P - P.T).max() < 1e-10


# -- stationary structure

def test_structure_of_exact_realization(rng):
    S = planted(rng, 4, 2)
    p = exact_fa_realization(S, BlockSplit(4, 2), 3)
    rep = stationary_structure_check(S, p, SingularPattern(4, 2))
    assert rep.d2_norm == 0
    assert rep.s22_residual < 1e-12 and rep.s12_residual < 1e-12


def test_structure_of_converged_singular_run():
    S = fig_sigma(3)
    pattern = SingularPattern(9, 1)
    tr = run("singular", S, default_init(S, 3, 0), SolverConfig(max_iters=20000), pattern=pattern)
    assert tr.converged
    rep = stationary_structure_check(S, tr.params, pattern)
    assert rep.ok(1e-6), rep


def test_structure_of_random_params_is_violated(rng):
    S = random_spd(rng, 5)
    p = FactorParams(rng.standard_normal((5, 3)), np.r_[np.ones(3), 0.0, 0.0])
    rep = stationary_structure_check(S, p, SingularPattern(3, 2))
    assert rep.s22_residual > 1e-3 and rep.s12_residual > 1e-3
    assert rep.reduced_h_residual > 1e-6


def test_structure_rank_deficient_lower_block(rng):
    S = random_spd(rng, 4)
    H = rng.standard_normal((4, 2))
    H[2:] = np.outer([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(StructureError):
        stationary_structure_check(S, FactorParams(H, np.r_[1.0, 1.0, 0.0, 0.0]), SingularPattern(2, 2))
