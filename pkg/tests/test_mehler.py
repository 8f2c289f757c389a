import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from blowup_lab import mehler as M
from blowup_lab.core_model import InvalidParameter
from blowup_lab.report import INAPPLICABLE, PASS


def zero_field(N, r_max=10.0):
    r = np.linspace(0.0, r_max, 41)
    return M.WeightedField(r, np.zeros_like(r), N, M.Zero())


def l2_gap(a, b_values, N):
    return M.l2_rho(M._field_with_far_field(a.r_grid, a.values - b_values, N))


@pytest.fixture(scope="module")
def smooth_potential():
    # 2/(1+r^2) is smooth, bounded by 2 and decays like 2/r^2
    r = np.linspace(0.0, 40.0, 801)
    base = M.WeightedField(r, 2.0 / (1.0 + r * r), 3, M.PowerLaw(2.0, 2 * 1600 / 1601), "spline")
    return M.PotentialField(base)


@pytest.fixture
def bump():
    return M.random_bump_field(np.random.default_rng(3), 3)


# ---------------------------------------------------------------------------
# fields and quadrature


# the closed form overflows in (2/z)^mu for subnormal z, so tiny z are skipped
@given(z=st.one_of(st.just(0.0), st.floats(1e-6, 300.0)), N=st.integers(2, 7))
def test_angular_weight_matches_bessel_closed_form(z, N):
    a = M.angular_weight(np.array([z]), N)[0]
    b = M.angular_weight_bessel(np.array([z]), N)[0]
    assert abs(a - b) <= 1e-12 * b


def test_angular_weight_one_dimensional():
    # [TRIVIAL] the two-point sphere
    z = np.array([0.0, 1.0])
    assert np.allclose(M.angular_weight(z, 1), 1.0 + np.exp(-2.0 * z))


def test_far_field_mismatch_rejected():
    r = np.linspace(0.0, 5.0, 11)
    with pytest.raises(InvalidParameter):
        M.WeightedField(r, np.ones_like(r), 3, M.Zero())


def test_potential_validation():
    r = np.linspace(0.0, 5.0, 11)
    with pytest.raises(InvalidParameter):
        M.PotentialField(M.WeightedField(r, -np.ones_like(r), 3, M.PowerLaw(0.0, -1.0)))
    with pytest.raises(InvalidParameter):
        M.PotentialField(M.WeightedField(r, np.ones_like(r), 3, M.PowerLaw(1.0, 5.0)))


def test_norm_spec_needs_exactly_one_of_shift_or_radius():
    with pytest.raises(InvalidParameter):
        M.NormSpec(2.0)
    with pytest.raises(InvalidParameter):
        M.NormSpec(2.0, xi=1.0, radius=1.0)
    with pytest.raises(InvalidParameter):
        M.NormSpec(1.0, xi=0.0)


# ---------------------------------------------------------------------------
# norms


@pytest.mark.parametrize("N,q", [(1, 2.0), (3, 2.0), (3, 3.5), (5, 1.5)])
def test_norm_of_constant_one(N, q):
    # [DERIVED] ∫ e^{-|y|^2/4} dy = (4π)^{N/2}, and every shift gives the same value
    expected = (4.0 * math.pi) ** (N / (2.0 * q))
    one = M.WeightedField.constant(1.0, N)
    assert M.norm(one, M.NormSpec(q, xi=0.0)) == pytest.approx(expected, rel=1e-12)
    assert M.norm(one, M.NormSpec(q, xi=1.7)) == pytest.approx(expected, rel=1e-12)
    assert M.norm(one, M.NormSpec(q, radius=2.0)) == pytest.approx(expected, rel=1e-12)


def test_norm_of_constant_one_value_n3_q2():
    # [DERIVED] (4π)^{3/4}
    one = M.WeightedField.constant(1.0, 3)
    assert M.norm(one, M.NormSpec(2.0, xi=0.0)) == pytest.approx(6.674325731836, rel=1e-11)


def test_norm_of_zero_field():
    # [TRIVIAL]
    assert M.norm(zero_field(3), M.NormSpec(2.0, radius=1.0)) == 0.0


def test_sup_norm_dominates_unshifted(bump):
    n0 = M.norm(bump, M.NormSpec(2.0, xi=0.0))
    n1 = M.norm(bump, M.NormSpec(2.0, xi=1.0))
    sup = M.norm(bump, M.NormSpec(2.0, radius=1.0))
    assert sup >= max(n0, n1) - 1e-12


def test_shifted_norm_against_direct_quadrature():
    # [DERIVED] for N=1 the shifted norm is a plain 1-D integral over the even extension
    fld = M.WeightedField.from_function(lambda r: np.exp(-r * r), 1, r_max=12.0, n=961)
    xi, q = 1.3, 2.0
    ref = quad(lambda y: math.exp(-q * y * y) * math.exp(-(y - xi) ** 2 / 4.0),
               -np.inf, np.inf, epsabs=1e-14)[0] ** (1.0 / q)
    assert M.norm(fld, M.NormSpec(q, xi=xi)) == pytest.approx(ref, rel=1e-7)


# ---------------------------------------------------------------------------
# Mehler semigroup


@pytest.mark.parametrize("N", [1, 3, 5])
@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_mehler_preserves_constants(N, t):
    one = M.WeightedField.constant(1.0, N)
    ev = M.mehler_apply(one, t, np.linspace(0.0, 8.0, 33))
    assert np.max(np.abs(ev.values - 1.0)) < 1e-6


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_coordinate_function_decays_like_eigenfunction(t):
    # y_1 is an eigenfunction with eigenvalue -1/2
    r = np.linspace(0.0, 12.0, 481)
    coord = M.WeightedField(r, r.copy(), 1, M.PowerLaw(-1.0, 1.0), "pchip")
    x = np.linspace(0.0, 4.0, 21)
    assert np.max(np.abs(M.mehler_coordinate_1d(coord, t, x) - math.exp(-t / 2) * x)) < 1e-6


def test_long_time_limit_is_gaussian_average(bump):
    # [DERIVED] as t -> inf the kernel tends to (4π)^{-N/2} e^{-|λ|^2/4}
    ref = 4.0 * math.pi * quad(lambda r: bump(np.array([r]))[0] * r * r * math.exp(-r * r / 4),
                               0.0, bump.r_max, limit=200, epsabs=1e-13)[0]
    ref /= (4.0 * math.pi) ** 1.5
    ev = M.mehler_apply(bump, 20.0, np.array([0.0, 1.0, 2.0, 3.0]))
    assert np.max(np.abs(ev.values - ref)) < 1e-6


def test_mehler_rejects_nonpositive_time(bump):
    with pytest.raises(InvalidParameter):
        M.mehler_apply(bump, 0.0)


@pytest.mark.parametrize("N", [1, 3])
def test_semigroup_law_and_contraction(N):
    psi = M.random_bump_field(np.random.default_rng(11), N)
    r = np.linspace(0.0, 12.0, 481)
    a = M.mehler_apply(psi, 1.0, r)
    b = M.mehler_apply(M.mehler_apply(psi, 0.4, r), 0.6, r)
    assert l2_gap(a, b.values, N) < 1e-5
    assert M.l2_rho(a) <= M.l2_rho(psi) * (1.0 + 1e-8)


# ---------------------------------------------------------------------------
# Hermite smoothing estimate


def test_hermite_zero_field_has_zero_margin():
    rep = M.check_hermite_regularization(zero_field(3), 3.0, 2.0, 1.0, 1.0, 2.0)
    assert rep.verdict == PASS
    assert rep.measured["margin"] == 0.0


def test_hermite_exponential_factor_is_one_on_transport_radius():
    # [DERIVED] the Gaussian tilt vanishes when r <= r̃ e^{t/2}
    N, q, beta, rt, t = 3, 3.0, 2.0, 1.0, 2.0
    k_in = M.hermite_bound_factor(N, q, beta, rt * math.exp(t / 2), rt, t)
    k_0 = M.hermite_bound_factor(N, q, beta, 0.0, rt, t)
    assert k_in == pytest.approx(k_0, rel=1e-15)
    assert M.hermite_bound_factor(N, q, beta, 5.0, rt, t) > k_0


def test_hermite_sweep_in_time(bump):
    # validity needs 1 - 2 e^{-t} > 0, that is t > ln 2
    for t in np.linspace(0.5, 5.0, 10):
        rep = M.check_hermite_regularization(bump, 3.0, 2.0, 1.0, 1.0, float(t))
        if t <= math.log(2.0):
            assert rep.verdict == INAPPLICABLE
        else:
            assert rep.verdict == PASS, rep.to_json()


def test_hermite_inapplicable_outside_region(bump):
    assert M.hermite_bound_factor(3, 4.0, 1.5, 1.0, 1.0, 0.2) is None
    rep = M.check_hermite_regularization(bump, 4.0, 1.5, 1.0, 1.0, 0.2)
    assert rep.verdict == INAPPLICABLE


@given(seed=st.integers(0, 2 ** 16), p=st.floats(1.1, 3.0), dq=st.floats(0.1, 3.0),
       xi=st.floats(0.0, 3.0))
def test_pq_norm_comparison_holds(seed, p, dq, xi):
    psi = M.random_bump_field(np.random.default_rng(seed), 3)
    rep = M.check_pq_norm(psi, p, p + dq, xi)
    assert rep.verdict == PASS, rep.to_json()


def test_pq_constant_at_zero_shift():
    # [DERIVED] C^p = (4π)^{N/(2γ)} with γ = q/(q-p)
    assert M.pq_norm_constant(3, 2.0, 4.0, 0.0) == pytest.approx((4 * math.pi) ** 0.375)
    with pytest.raises(InvalidParameter):
        M.pq_norm_constant(3, 3.0, 2.0, 0.0)


# ---------------------------------------------------------------------------
# perturbed semigroup


def test_lambda_zero_potential_is_mehler(bump):
    zero = M.PotentialField.constant(0.0, 3)
    L = M.lambda_apply(bump, zero, 0.5)
    assert l2_gap(L, M.mehler_apply(bump, 0.5, L.r_grid).values, 3) < 1e-5


def test_lambda_constant_potential_scales(bump):
    gamma, t = 0.7, 1.0
    L = M.lambda_apply(bump, M.PotentialField.constant(gamma, 3), t)
    ref = math.exp(gamma * t) * M.mehler_apply(bump, t, L.r_grid).values
    assert l2_gap(L, ref, 3) < 1e-5


def test_lambda_step_halving(bump, smooth_potential):
    a = M.lambda_apply(bump, smooth_potential, 1.0)
    b = M.lambda_apply(bump, smooth_potential, 1.0, h=0.0025, dt=2.5e-4)
    assert l2_gap(a, b(a.r_grid), 3) < 1e-6


def test_lambda_growth_bound(bump):
    sing = M.PotentialField.singular_profile(3)
    rep = M.check_lambda_growth(bump, sing, 0.5)
    assert rep.verdict == PASS


def test_lambda_rejects_dimension_mismatch(bump):
    with pytest.raises(InvalidParameter):
        M.lambda_apply(bump, M.PotentialField.constant(1.0, 4), 0.5)


def test_singular_potential_constants():
    sing = M.PotentialField.singular_profile(3, Gamma=8.0)
    # [DERIVED] the cap meets 2(N-2)/r^2 at r = sqrt(2/8)
    assert sing.Gamma == 8.0
    assert sing.decay_C == pytest.approx(2.0)
    assert sing(np.array([0.0, 0.5, 2.0])) == pytest.approx([8.0, 8.0, 0.5])
    with pytest.raises(InvalidParameter):
        M.PotentialField.singular_profile(2)


def test_potential_decay_rate():
    sing = M.PotentialField.singular_profile(3)
    rep = M.check_potential_decay(sing, 2.0, 1.0, range(2, 9))
    assert rep.verdict == PASS
    assert rep.measured["rate"] >= 0.9


def test_potential_norm_decreases_with_shift():
    sing = M.PotentialField.singular_profile(3)
    norms = [float(M.shifted_norm(sing.base, 2.0, xi)) for xi in (1.0, 2.0, 4.0, 8.0)]
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_zero_potential_decay_is_vacuous():
    rep = M.check_potential_decay(M.PotentialField.constant(0.0, 3), 2.0, 1.0, [1.0, 2.0])
    assert rep.verdict == PASS
    assert "vacuous" in rep.notes


def test_offset_scenario_with_zero_lag_is_diagonal(bump, smooth_potential):
    kw = dict(h=0.01, dt=2e-3)
    d = M.lambda_regularization_ratio(bump, smooth_potential, M.Scenario(M.DIAGONAL, 1.5, 0.8),
                                      **kw)
    o = M.lambda_regularization_ratio(bump, smooth_potential,
                                      M.Scenario(M.OFFSET, 1.5, 0.8, t=0.0, s0=0.0), **kw)
    assert o == pytest.approx(d, rel=1e-12)


def test_zero_potential_scenario_matches_mehler(bump):
    s, xi = 1.0, 0.5
    zero = M.PotentialField.constant(0.0, 3)
    lhs, rhs = M.lambda_regularization_ratio(bump, zero, M.Scenario(M.DIAGONAL, s, xi))
    ev = M.mehler_apply(bump, s, np.linspace(0.0, 40.0, 801))
    assert lhs == pytest.approx(float(M.shifted_norm(ev, 2.0, xi * math.exp(s / 2))), rel=1e-5)
    assert rhs == pytest.approx(M.l2_rho(bump), rel=1e-12)


def test_scenario_beyond_desk_cap(bump):
    sc = [M.Scenario(M.DIAGONAL, M.DESK_CAP + 1.0, 1.0)]
    rep = M.check_lambda_regularization(bump, M.PotentialField.constant(0.0, 3), sc, sc)
    assert rep.verdict == INAPPLICABLE
    assert "out of desk range" in rep.notes


def test_variation_of_constants_identity(bump, smooth_potential):
    assert M.variation_identity_defect(bump, smooth_potential, 0.2) < 1e-6
