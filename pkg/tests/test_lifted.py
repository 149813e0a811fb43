import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from approxfa import (
    FactorParams,
    LiftedCov,
    constrained_second_partial_min,
    first_partial_min,
    i_div,
    pythagoras_residual_first,
    pythagoras_residual_second,
    second_partial_min,
)
from approxfa.errors import DimensionError, SingularMatrixError
from approxfa.linalg import delta, schur_complement, BlockSplit

from conftest import random_factor, random_spd

LIFTED_5 = np.array([
    [5, 1, 0.5, 1, 0.2],
    [1, 4, 0.3, 0.4, 0.6],
    [0.5, 0.3, 3, 0.1, 0.5],
    [1, 0.4, 0.1, 2, 0.3],
    [0.2, 0.6, 0.5, 0.3, 1.5],
])
P0_2 = np.array([[1, 0.2], [0.2, 0.8]])
# 50-digit mpmath evaluations
EXCESS_5 = 0.28923135234689294590
SECOND_VALUE_5 = 0.026041675749777114954


def random_lifted(rng, n, k):
    return LiftedCov(random_spd(rng, n + k), n, k)


def test_lifted_cov_rejects_zero_latent():
    with pytest.raises(DimensionError):
        LiftedCov(np.eye(3), 3, 0)


def test_membership_flags(rng):
    p = random_factor(rng, 4, 2)
    s = LiftedCov.from_factor(p, Q=np.array([[2.0, 0.3], [0.0, 1.0]]))
    assert s.in_sigma1()
    assert s.in_sigma0(p.model())
    assert not random_lifted(rng, 4, 2).in_sigma1()


# -- first partial minimization

def test_first_scalar_example():
    s = LiftedCov(np.array([[2.0, 1.0], [1.0, 1.0]]), 1, 1)
    star = first_partial_min(np.array([[1.0]]), s)
    np.testing.assert_allclose(star.matrix, [[1.0, 0.5], [0.5, 0.75]], rtol=1e-15)


def test_first_scalar_example_by_direct_minimization():
    target = LiftedCov(np.array([[2.0, 1.0], [1.0, 1.0]]), 1, 1)

    def cost(x):
        b, logc = x
        S0 = np.array([[1.0, b], [b, np.exp(logc)]])
        if np.linalg.eigvalsh(S0)[0] <= 0:
            return 1e6
        return float(i_div(S0, target))

    res = minimize(cost, [0.0, 0.0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    np.testing.assert_allclose([res.x[0], np.exp(res.x[1])], [0.5, 0.75], atol=1e-6)


def test_first_fixed_point_and_decoupled(rng):
    s = random_lifted(rng, 3, 2)
    star = first_partial_min(s.s11, s)
    np.testing.assert_allclose(star.matrix, s.matrix, atol=1e-12)
    S = np.zeros((5, 5))
    S[:3, :3] = random_spd(rng, 3)
    S[3:, 3:] = random_spd(rng, 2)
    target = random_spd(rng, 3)
    star = first_partial_min(target, LiftedCov(S, 3, 2))
    np.testing.assert_allclose(star.s11, target, atol=1e-12)
    np.testing.assert_allclose(star.s12, 0, atol=1e-12)
    np.testing.assert_allclose(star.s22, S[3:, 3:], atol=1e-12)


def test_first_achieved_value(rng):
    s = random_lifted(rng, 4, 2)
    target = random_spd(rng, 4)
    star = first_partial_min(target, s)
    assert star.is_pd()
    assert float(i_div(star, s)) == pytest.approx(float(i_div(target, s.s11)), rel=1e-10)


def test_first_inverse_identity(rng):
    s = random_lifted(rng, 4, 2)
    target = random_spd(rng, 4)
    star = first_partial_min(target, s)
    diff = np.linalg.inv(s.matrix) - np.linalg.inv(star.matrix)
    assert np.abs(diff[4:, :]).max() < 1e-10 and np.abs(diff[:, 4:]).max() < 1e-10
    lhs = np.linalg.norm(diff)
    rhs = np.linalg.norm(np.linalg.inv(s.s11) - np.linalg.inv(target))
    assert lhs == pytest.approx(rhs, rel=1e-9)


# -- second partial minimization

def test_second_hand_example():
    M = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 1]], float)
    params, Q, star = second_partial_min(LiftedCov(M, 2, 1))
    np.testing.assert_allclose(params.H, [[1], [1]])
    np.testing.assert_allclose(Q, [[1]])
    np.testing.assert_allclose(params.D, [1, 1])
    assert abs(float(i_div(LiftedCov(M, 2, 1), star))) < 1e-14


def test_second_zero_cross_block(rng):
    S11 = random_spd(rng, 3)
    s = LiftedCov.from_blocks(S11, np.zeros((3, 2)), random_spd(rng, 2))
    params, _, star = second_partial_min(s)
    np.testing.assert_allclose(params.H, 0, atol=1e-15)
    np.testing.assert_allclose(params.D, np.diag(S11))
    assert float(i_div(s, star)) == pytest.approx(float(i_div(S11, delta(S11))), rel=1e-12)


def test_second_idempotent_on_member(rng):
    s = LiftedCov.from_factor(random_factor(rng, 4, 2), Q=random_spd(rng, 2))
    _, _, star = second_partial_min(s)
    np.testing.assert_allclose(star.matrix, s.matrix, atol=1e-12)


def test_second_properties(rng):
    s = random_lifted(rng, 4, 2)
    params, Q, star = second_partial_min(s)
    np.testing.assert_allclose(params.H @ Q, s.s12, atol=1e-12)
    assert params.D.min() > 0
    np.testing.assert_allclose(star.s12, s.s12)
    np.testing.assert_allclose(star.s22, s.s22)
    St = schur_complement(s.matrix, BlockSplit(4, 2))
    assert float(i_div(s, star)) == pytest.approx(float(i_div(St, delta(St))), rel=1e-10)
    # L2 identity
    assert np.linalg.norm(s.matrix - star.matrix) == pytest.approx(
        np.linalg.norm(St - delta(St)), rel=1e-10
    )


def test_second_value_against_high_precision():
    _, _, star = second_partial_min(LiftedCov(LIFTED_5, 3, 2))
    assert float(i_div(LiftedCov(LIFTED_5, 3, 2), star)) == pytest.approx(SECOND_VALUE_5, rel=1e-12)


def test_products_do_not_depend_on_root(rng):
    s = random_lifted(rng, 4, 2)
    params, Q, _ = second_partial_min(s)
    # a different valid root of S22: Q' = C^T with C the Cholesky factor
    Qc = np.linalg.cholesky(s.s22).T
    Hc = s.s12 @ np.linalg.inv(Qc)
    np.testing.assert_allclose(Hc @ Hc.T, params.H @ params.H.T, atol=1e-10)
    np.testing.assert_allclose(Hc @ Qc, params.H @ Q, atol=1e-10)
    np.testing.assert_allclose(Qc.T @ Qc, Q.T @ Q, atol=1e-10)


# -- constrained variant

def test_constrained_matches_free_when_p0_is_s22(rng):
    s = random_lifted(rng, 4, 2)
    p_free, _, star = second_partial_min(s)
    p_con, star_con = constrained_second_partial_min(s, s.s22)
    np.testing.assert_allclose(star_con.matrix, star.matrix, atol=1e-12)
    np.testing.assert_allclose(p_con.H, p_free.H, atol=1e-12)


def test_constrained_excess_cost():
    s = LiftedCov(LIFTED_5, 3, 2)
    _, _, star = second_partial_min(s)
    _, star0 = constrained_second_partial_min(s, P0_2)
    excess = float(i_div(s, star0)) - float(i_div(s, star))
    assert excess == pytest.approx(EXCESS_5, rel=1e-9)
    assert float(i_div(s.s22, P0_2)) == pytest.approx(EXCESS_5, rel=1e-12)


def test_constrained_zero_cross(rng):
    S11 = random_spd(rng, 3)
    s = LiftedCov.from_blocks(S11, np.zeros((3, 2)), random_spd(rng, 2))
    _, star = constrained_second_partial_min(s, np.eye(2))
    np.testing.assert_allclose(star.s11, delta(S11), atol=1e-15)
    np.testing.assert_allclose(star.s12, 0, atol=1e-15)


def test_constrained_rejects_singular_p0(rng):
    with pytest.raises(SingularMatrixError):
        constrained_second_partial_min(random_lifted(rng, 3, 2), np.zeros((2, 2)))



def test_first_rejects_singular_lifted(rng):
    # invertible upper-left block, singular as a whole
    H = rng.standard_normal((3, 2))
    s = LiftedCov.from_blocks(H @ H.T + np.eye(3), H, H.T @ np.linalg.solve(H @ H.T + np.eye(3), H))
    with pytest.raises(SingularMatrixError):
        first_partial_min(random_spd(rng, 3), s)


# -- Pythagorean rules

def test_pythagoras_first_trivial_cases(rng):
    s = random_lifted(rng, 3, 1)
    target = random_spd(rng, 3)
    star = first_partial_min(target, s)
    assert abs(pythagoras_residual_first(star, s)) < 1e-12
    assert abs(float(i_div(first_partial_min(s.s11, s), s))) < 1e-12


def test_pythagoras_second_trivial_cases(rng):
    s = random_lifted(rng, 3, 1)
    _, _, star = second_partial_min(s)
    assert abs(pythagoras_residual_second(s, star)) < 1e-12
    member = LiftedCov.from_factor(random_factor(rng, 3, 1))
    assert abs(pythagoras_residual_second(member, member)) < 1e-12


@given(st.integers(2, 8), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_pythagoras_random(n, k, seed):
    rng = np.random.default_rng(seed)
    s = random_lifted(rng, n, k)
    # a member of Sigma_0: any PD lifted matrix with the target corner
    target = random_spd(rng, n)
    s0 = first_partial_min(target, random_lifted(rng, n, k))
    r1 = pythagoras_residual_first(s0, s)
    assert abs(r1) <= 1e-9 * (1 + float(i_div(s0, s)))
    s1 = LiftedCov.from_factor(random_factor(rng, n, k), Q=random_spd(rng, k))
    r2 = pythagoras_residual_second(s, s1)
    assert abs(r2) <= 1e-9 * (1 + float(i_div(s, s1)))


@given(st.integers(0, 2**32 - 1))
def test_projections_beat_random_probes(seed):
    rng = np.random.default_rng(seed)
    s = random_lifted(rng, 1, 1)
    target = random_spd(rng, 1)
    star0 = first_partial_min(target, s)
    _, _, star1 = second_partial_min(s)
    best0, best1 = float(i_div(star0, s)), float(i_div(s, star1))
    for _ in range(20):
        probe0 = first_partial_min(target, random_lifted(rng, 1, 1))
        assert float(i_div(probe0, s)) >= best0 - 1e-12
        probe1 = LiftedCov.from_factor(random_factor(rng, 1, 1), Q=random_spd(rng, 1))
        assert float(i_div(s, probe1)) >= best1 - 1e-12
