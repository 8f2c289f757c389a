import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_lab import evolve as E
from blowup_lab import profile as P
from blowup_lab.acceptance import manufactured_run
from blowup_lab.core_model import DomainError, DomainSpec, InvalidParameter, Nonlinearity


@pytest.fixture(scope="module")
def generic_runs(exp_nl):
    """The N=3 large-data run at two resolutions."""
    out = {}
    for m in (512, 1024):
        trace, final = E.run_until_blowup(lambda r: 8.0 * (1.0 - r ** 2), exp_nl,
                                          DomainSpec(3, 1.0), M=m)
        out[m] = (trace, final, E.fit_blowup(trace, exp_nl))
    return out


@pytest.fixture(scope="module")
def n7_profile(exp_nl):
    return P.scan_alphas(exp_nl, 7).candidates[0]


# ---------------------------------------------------------------------------
# operator and stepping


@pytest.mark.parametrize("N", [1, 3, 5])
def test_radial_operator_on_quadratic(N):
    # [TRIVIAL] Δ r^2 = 2N everywhere, including the origin row
    r = E.uniform_grid(1.0, 64)
    lap = E.apply_operator(E.radial_operator(r, N), r ** 2)
    assert np.allclose(lap[:-1], 2.0 * N, rtol=1e-10)


def test_radial_operator_on_graded_grid():
    r = E.graded_grid(5.0, 201)
    lap = E.apply_operator(E.radial_operator(r, 3), r ** 2)
    assert np.allclose(lap[:-1], 6.0, rtol=1e-9)


def test_heat_step_dissipates(exp_nl):
    # [TRIVIAL] without reaction the Dirichlet heat flow strictly lowers the maximum
    st0 = E.initial_state(lambda r: np.exp(-20 * r ** 2) - math.exp(-20.0), 3, M=256)
    norms = [st0.sup_norm]
    state = st0
    for _ in range(100):
        state = E.step(state, exp_nl, dt=1e-4, reaction=False)
        norms.append(state.sup_norm)
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_zero_data_grows_radially(exp_nl):
    # [TRIVIAL] f(0) = 1 drives zero data up while the boundary stays pinned
    state = E.initial_state(lambda r: np.zeros_like(r), 3, M=128)
    for _ in range(20):
        state = E.step(state, exp_nl)
    assert state.u[-1] == 0.0
    assert np.all(state.u[:-1] > 0)
    assert np.all(np.diff(state.u) <= 0)


@given(amp=st.floats(0.0, 5.0), k=st.integers(1, 4), n=st.integers(1, 30))
def test_boundary_value_exact_every_step(amp, k, n):
    nl = Nonlinearity.exponential()
    state = E.initial_state(lambda r: amp * (1.0 - r ** 2) ** k, 3, M=64)
    for _ in range(n):
        state = E.step(state, nl, dt_max=1e-3)
        assert state.u[-1] == 0.0
        assert np.all(np.isfinite(state.u))


def test_step_rejects_nonfinite(exp_nl):
    state = E.initial_state(lambda r: np.zeros_like(r), 3, M=16)
    state.u[3] = np.nan
    with pytest.raises(DomainError):
        E.step(state, exp_nl)


def test_state_validation():
    with pytest.raises(InvalidParameter):
        E.EvolutionState(np.array([0.1, 0.5, 1.0]), np.zeros(3))
    with pytest.raises(InvalidParameter):
        E.EvolutionState(np.array([0.0, 1.0]), np.zeros(3))


def test_reaction_dt_rule(exp_nl):
    # [TRIVIAL] min(dt_max, c/f'(max u)) with f' = e^u
    assert E.reaction_dt(np.array([0.0, 5.0]), exp_nl, 1e-3, 0.1) == pytest.approx(
        0.1 * math.exp(-5.0))
    assert E.reaction_dt(np.array([0.0]), exp_nl, 1e-3, 0.1) == 1e-3


# ---------------------------------------------------------------------------
# blow-up runs


def test_initial_data_validation(exp_nl):
    dom = DomainSpec(3, 1.0)
    with pytest.raises(InvalidParameter):
        E.run_until_blowup(lambda r: 1.0 - 2.0 * r, exp_nl, dom, M=32)
    with pytest.raises(InvalidParameter):
        E.run_until_blowup(lambda r: np.ones_like(r), exp_nl, dom, M=32)


def test_large_data_blows_up(generic_runs):
    trace, final, fit = generic_runs[1024]
    assert trace.stop_reason == E.SUP_NORM_CAP
    assert final.sup_norm >= 25.0
    assert np.all(np.diff(trace.times) > 0)
    assert np.all(np.isfinite(trace.sup_norms))
    assert trace.diagnostic == ""
    assert fit.reliable and fit.r_squared >= 0.999


def test_grid_doubling_moves_blowup_time_little(generic_runs):
    T1, T2 = generic_runs[512][2].T, generic_runs[1024][2].T
    assert abs(T1 - T2) / T2 < 1e-2


def test_generic_run_respects_gradient_bound(generic_runs):
    trace = generic_runs[1024][0]
    for g, s in zip(trace.grad_bound_margins, trace.sup_norms):
        assert g >= -1e-2 * math.sqrt(2.0) * math.exp(s / 2.0)


def test_short_time_cap_reports_no_blowup(exp_nl):
    trace, _ = E.run_until_blowup(lambda r: np.zeros_like(r), exp_nl, DomainSpec(3, 1.0),
                                  M=64, t_max=1e-2)
    assert trace.stop_reason == E.TIME_CAP
    assert trace.diagnostic == "no blow-up detected"
    assert not trace.blew_up


def test_snapshots_taken_at_levels(exp_nl):
    trace, _ = E.run_until_blowup(lambda r: 8.0 * (1.0 - r ** 2), exp_nl, DomainSpec(3, 1.0),
                                  M=256, snapshot_levels=(12.0, 10.0))
    assert [lvl for lvl, _ in trace.snapshots] == [10.0, 12.0]
    assert all(s.sup_norm >= lvl for lvl, s in trace.snapshots)


def test_power_run_blows_up():
    nl = Nonlinearity.power(3.0)
    trace, _ = E.run_until_blowup(lambda r: 20.0 * (1.0 - r ** 2), nl, DomainSpec(3, 1.0), M=256)
    assert trace.stop_reason == E.SUP_NORM_CAP
    fit = E.fit_blowup(trace, nl)
    assert fit.reliable


# ---------------------------------------------------------------------------
# rate fit


def test_fit_exact_log_trace(exp_nl):
    # [TRIVIAL] ‖u‖ = -log(T-t) with T = 1
    taus = np.geomspace(1e-1, 1e-8, 200)
    fit = E.fit_blowup(E.selfsimilar_trace(0.0, 1.0, taus, exp_nl), exp_nl)
    assert fit.T == pytest.approx(1.0, abs=1e-10)
    # t = T - τ loses digits of τ near T, which limits the slope to ~1e-9
    assert fit.slope == pytest.approx(-1.0, rel=1e-8)
    assert fit.band == pytest.approx((0.0, 0.0), abs=1e-8)
    assert fit.reliable


def test_fit_selfsimilar_trace(exp_nl):
    # [DERIVED] e^{-‖u‖} = e^{-α} (T - t)
    alpha = 5.515122784578970
    taus = np.geomspace(1e-1, 1e-8, 200)
    fit = E.fit_blowup(E.selfsimilar_trace(alpha, 1.0, taus, exp_nl), exp_nl)
    assert fit.T == pytest.approx(1.0, abs=1e-10)
    assert fit.slope == pytest.approx(-math.exp(-alpha), rel=1e-8)


def test_fit_power_trace():
    nl = Nonlinearity.power(3.0)
    taus = np.geomspace(1e-1, 1e-8, 200)
    fit = E.fit_blowup(E.selfsimilar_trace(nl.kappa(), 2.0, taus, nl), nl)
    assert fit.T == pytest.approx(2.0, rel=1e-10)
    # log((T-t)^{1/(p-1)} ‖u‖) = log κ on the whole window
    assert fit.band == pytest.approx((-math.log(nl.kappa()), math.log(nl.kappa())), abs=1e-6)


def test_fit_bounded_trace_unreliable(exp_nl):
    tr = E.RunTrace()
    tr.times = list(np.linspace(0.0, 1.0, 100))
    tr.sup_norms = [1.0] * 100
    fit = E.fit_blowup(tr, exp_nl)
    assert not fit.reliable
    assert "rate fit unreliable" in fit.diagnostic


def test_fit_short_trace_unreliable(exp_nl):
    taus = np.geomspace(1e-1, 1e-2, 10)
    fit = E.fit_blowup(E.selfsimilar_trace(0.0, 1.0, taus, exp_nl), exp_nl)
    assert not fit.reliable


# ---------------------------------------------------------------------------
# exact self-similar states


def test_selfsimilar_value_at_origin(n3_profile):
    # [TRIVIAL] y = 0 gives φ(0) = α
    st0 = E.exact_selfsimilar(n3_profile, 1.0, 1.0 - 1e-3, E.uniform_grid(1.0, 32))
    assert st0.u[0] == pytest.approx(-math.log(1e-3) + n3_profile.alpha, rel=1e-12)


def test_selfsimilar_rejects_post_blowup(n3_profile):
    with pytest.raises(DomainError):
        E.selfsimilar_value(n3_profile, 1.0, 1.5, np.array([0.0]))


def test_selfsimilar_rejects_divergent_profile(exp_nl):
    bad = P.shoot_profile(5.0, exp_nl, 3)
    assert bad.classification != P.TAIL_CONVERGENT
    with pytest.raises(InvalidParameter):
        E.exact_selfsimilar(bad, 1.0, 0.5, E.uniform_grid(1.0, 8))


def test_selfsimilar_pde_residual(n3_profile):
    tau, h = 1e-2, 1e-4
    # keep the whole stencil inside |y| <= 10
    r = np.linspace(0.01, 10.0 * math.sqrt(tau) - h, 300)
    res, scale = E.selfsimilar_pde_residual(n3_profile, tau, r, h)
    assert np.max(np.abs(res) / scale) < 1e-4


def test_selfsimilar_approaches_tail_constant(n3_profile):
    # u + 2 log r -> C as t -> T at fixed small r
    r = np.array([1e-3, 3e-3, 1e-2])
    u = E.selfsimilar_value(n3_profile, 0.0, 0.0, r, tau=1e-10)
    assert np.max(np.abs(u + 2.0 * np.log(r) - n3_profile.tail_constant)) < 1e-3


def test_gradient_margin_constant_state():
    st0 = E.EvolutionState(E.uniform_grid(1.0, 16), np.full(17, 2.0))
    assert E.gradient_bound_check(st0) == pytest.approx(math.sqrt(2.0) * math.e)


@pytest.mark.parametrize("tau", [1e-2, 1e-4])
def test_gradient_margin_exact_state(n3_profile, tau):
    grid = np.linspace(0.0, 10.0 * math.sqrt(tau), 2001)
    st0 = E.exact_selfsimilar(n3_profile, 1.0, None, grid, tau=tau)
    assert E.gradient_bound_check(st0, n3_profile.nl) >= 0.0


def test_gradient_check_rejects_power():
    st0 = E.EvolutionState(E.uniform_grid(1.0, 16), np.zeros(17))
    with pytest.raises(InvalidParameter):
        E.gradient_bound_check(st0, Nonlinearity.power(3.0))


def test_manufactured_error(n3_profile):
    u, exact = manufactured_run(n3_profile, 2048, 400)
    assert np.max(np.abs(u - exact)) < 1e-3


def test_manufactured_spatial_order(n3_profile):
    errs = [float(np.max(np.abs(np.subtract(*manufactured_run(n3_profile, m, 400)))))
            for m in (1024, 2048, 4096)]
    assert min(math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])) >= 1.9


# ---------------------------------------------------------------------------
# similarity frame


def test_wframe_zero_stays_zero(exp_nl):
    res = E.w_frame_evolve(lambda y: np.zeros_like(y), exp_nl, 10.0, 0.5, 0.0, N=3, n=801)
    assert res.status == "ok"
    assert all(np.all(w == 0.0) for w in res.snapshots)


def test_wframe_profile_is_stationary(exp_nl, n7_profile):
    Y = 10.0
    bv = float(n7_profile.evaluate(np.array([Y]))[0])
    res = E.w_frame_evolve(n7_profile, exp_nl, Y, 1.0, bv)
    assert res.status == "ok"
    assert np.max(E.w_deviation(res, n7_profile, Y / 2)) < 1e-3


def test_wframe_perturbed_profile_stays_bounded(exp_nl, n7_profile):
    # the perturbation may grow (the profile has unstable directions); the
    # check is that the trajectory stays bounded and is resolved in time
    Y = 10.0
    bv = float(n7_profile.evaluate(np.array([Y]))[0])
    w0 = lambda y: n7_profile.evaluate(y) + 0.01 * np.exp(-y ** 2)  # noqa: E731
    devs = []
    for ds in (1e-3, 5e-4):
        res = E.w_frame_evolve(w0, exp_nl, Y, 0.5, bv, N=7, ds=ds)
        assert res.status == "ok"
        assert all(np.all(np.isfinite(w)) for w in res.snapshots)
        devs.append(E.w_deviation(res, n7_profile, Y / 2))
    assert devs[0][0] == pytest.approx(0.01, rel=1e-6)
    assert np.max(np.abs(devs[0] - devs[1]) / devs[1]) < 0.02


def test_wframe_power_zero(n3_profile):
    nl = Nonlinearity.power(3.0)
    res = E.w_frame_evolve(lambda y: np.zeros_like(y), nl, 5.0, 0.2, 0.0, N=3, n=401)
    assert np.max(np.abs(res.final)) == 0.0


def test_wframe_validation(exp_nl, n3_profile):
    with pytest.raises(InvalidParameter):
        E.w_frame_evolve(lambda y: y, exp_nl, 5.0, 0.1, 0.0)
    with pytest.raises(InvalidParameter):
        E.w_frame_evolve(n3_profile, exp_nl, 2.0 * n3_profile.r_end, 0.1, 0.0)
