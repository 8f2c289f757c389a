"""Desk-scale acceptance battery.

Each ``criterion_k(ctx)`` runs one group of checks at its stated tolerances
and returns a :class:`~blowup_lab.report.VerificationReport` whose verdict
is ``pass`` only when every listed quantity is within bounds.  Expensive
shared inputs (the N=3 profile, the generic blow-up run) are memoised on the
:class:`Context` so a suite computes them once.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import evolve as E
from . import mehler as M
from . import profile as P
from . import verify as V
from .core_model import DomainSpec, Nonlinearity
from .report import VerificationReport

SEED = 1234
HERMITE_DRAWS = 1000
HERMITE_BUDGET = 120.0        # seconds

GENERIC_AMPLITUDE = 8.0
GENERIC_M = 2048
GENERIC_LEVELS = (10.0, 11.0, 12.0, 13.0, 14.0)

# the w-frame check uses the first N=7 exponential profile; the N=3 profiles
# are unstable in the w frame (see README)
WFRAME_N = 7
WFRAME_Y = 10.0


class Context:
    """Seed, sweep sizes and a memo of shared intermediate results."""

    def __init__(self, seed=SEED, draws=HERMITE_DRAWS):
        self.seed = int(seed)
        self.draws = int(draws)
        self._memo = {}

    def memo(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def n3_scan(self):
        return self.memo("scan3", lambda: P.scan_alphas(Nonlinearity.exponential(), 3))

    def n3_profile(self):
        """First converged nontrivial N=3 exponential profile from the scan."""
        scan = self.n3_scan()
        if not scan.candidates:
            raise RuntimeError("N=3 scan returned no candidates")
        return scan.candidates[0]

    def generic_run(self):
        def run():
            nl = Nonlinearity.exponential()
            trace, final = E.run_until_blowup(
                lambda r: GENERIC_AMPLITUDE * (1.0 - r ** 2), nl, DomainSpec(3, 1.0),
                M=GENERIC_M, snapshot_levels=GENERIC_LEVELS)
            return trace, final, E.fit_blowup(trace, nl)
        return self.memo("generic", run)


def _report(name, inputs=None):
    return VerificationReport(name, dict(inputs or {}))


def _power_L(N, p):
    # independent evaluation of L^{p-1} = (2/(p-1)) (N - 2 - 2/(p-1))
    k = 2.0 / (p - 1.0)
    return (k * (N - 2.0 - k)) ** (1.0 / (p - 1.0))


# ---------------------------------------------------------------------------


def criterion_1(ctx):
    """Closed-form singular profiles solve the profile equation."""
    rep = _report("singular_profiles")
    r = np.geomspace(0.1, 10.0, 400)
    cases = [(Nonlinearity.exponential(), N, math.log(2.0 * (N - 2))) for N in range(3, 10)]
    cases += [(Nonlinearity.power(p), N, _power_L(N, p)) for N, p in ((5, 3), (4, 5), (6, 3))]
    worst_res, worst_C = 0.0, 0.0
    per_case = {}
    for nl, N, C in cases:
        prof = P.singular_profile(nl, N, r_min=0.1, r_max=10.0)
        res = float(np.max(np.abs(prof.residual(r))))
        err = abs(prof.tail_constant - C)
        per_case[f"{nl}_N{N}"] = [res, err]
        worst_res, worst_C = max(worst_res, res), max(worst_C, err)
    rep.measured["per_case"] = per_case
    return rep.decide({"max_residual": (worst_res, "<", 1e-10),
                       "max_tail_error": (worst_C, "<=", 1e-12)})


def criterion_2(ctx):
    """Identities of the constant ODE profile ``κ``."""
    rep = _report("kappa_identities")
    k2 = Nonlinearity.power(2.0).kappa()
    k3 = Nonlinearity.power(3.0).kappa()
    ident = max(abs(Nonlinearity.power(p).kappa() ** (p - 1.0) * (p - 1.0) - 1.0)
                for p in (1.5, 2.0, 3.0, 5.0))
    return rep.decide({"kappa2_error": (abs(k2 - 1.0), "<=", 0.0),
                       "kappa3_error": (abs(k3 - 0.707106781), "<=", 1e-9),
                       "identity_error": (ident, "<=", 1e-12)})


def criterion_3(ctx):
    """Mehler engine: mass, eigen-decay, semigroup law and contraction."""
    rep = _report("mehler_engine", {"seed": ctx.seed})
    mass = 0.0
    for N in (1, 3, 5):
        one = M.WeightedField.constant(1.0, N)
        for t in (0.1, 1.0, 10.0):
            ev = M.mehler_apply(one, t, np.linspace(0.0, 8.0, 33))
            mass = max(mass, float(np.max(np.abs(ev.values - 1.0))))

    r = np.linspace(0.0, 12.0, 481)
    coord = M.WeightedField(r, r.copy(), 1, M.PowerLaw(-1.0, 1.0), "pchip")
    x = np.linspace(0.0, 4.0, 21)
    eig = max(float(np.max(np.abs(M.mehler_coordinate_1d(coord, t, x) - math.exp(-t / 2) * x)))
              for t in (0.1, 1.0, 5.0))

    rng = np.random.default_rng(ctx.seed)
    law, contraction = 0.0, 0.0
    for N in (1, 3, 5):
        psi = M.random_bump_field(rng, N)
        n_psi = M.l2_rho(psi)
        for t, s in ((0.3, 0.3), (0.3, 0.7), (0.7, 0.7)):
            a = M.mehler_apply(psi, t + s, r)
            b = M.mehler_apply(M.mehler_apply(psi, s, r), t, r)
            law = max(law, M.l2_rho(M._field_with_far_field(r, a.values - b.values, N)))
            contraction = max(contraction, M.l2_rho(a) / n_psi)
    return rep.decide({"mass_error": (mass, "<", 1e-6),
                       "eigen_decay_error": (eig, "<", 1e-6),
                       "semigroup_defect": (law, "<", 1e-5),
                       "contraction_ratio": (contraction, "<=", 1.0 + 1e-8)})


def hermite_draw(seed, index):
    """One seeded draw of ``(ψ, q, β, r, r̃, t)`` in the valid region, checked.

    The generator is keyed by ``(seed, index)`` so draws are independent of
    evaluation order and of the worker that runs them.
    """
    rng = np.random.default_rng([int(seed), int(index)])
    while True:
        N = int(rng.integers(1, 6))
        q = float(rng.uniform(1.2, 4.0))
        beta = float(rng.uniform(1.2, 4.0))
        t = float(rng.uniform(0.2, 5.0))
        if beta - 1.0 - (q - 1.0) * math.exp(-t) > 0:
            break
    r = float(rng.uniform(0.0, 3.0))
    r_tilde = float(rng.uniform(0.0, 3.0))
    psi = M.random_bump_field(rng, N)
    rep = M.check_hermite_regularization(psi, q, beta, r, r_tilde, t)
    m = rep.measured
    return [index, N, q, beta, r, r_tilde, t, m["lhs"], m["rhs"], m["margin"]]


HERMITE_COLUMNS = ["draw", "N", "q", "beta", "r", "r_tilde", "t", "lhs", "rhs", "margin"]


def hermite_sweep(seed, count, pool=None):
    """Rows of :func:`hermite_draw` for ``count`` draws, sorted by draw index."""
    idx = range(int(count))
    if pool is None:
        rows = [hermite_draw(seed, i) for i in idx]
    else:
        rows = list(pool.map(hermite_draw, [seed] * len(idx), idx, chunksize=16))
    return sorted(rows, key=lambda row: row[0])


def criterion_4(ctx):
    """Hermite smoothing estimate over seeded draws, within the time budget."""
    rep = _report("hermite_sweep", {"seed": ctx.seed, "draws": ctx.draws})
    t0 = time.perf_counter()
    rows = hermite_sweep(ctx.seed, ctx.draws)
    elapsed = time.perf_counter() - t0
    margins = np.array([row[-1] for row in rows])
    rep.measured["elapsed_seconds"] = elapsed
    rep.decide({"draws": (len(rows), ">=", 1000),
                "min_margin": (float(np.min(margins)), ">=", -1e-8)})
    if elapsed >= HERMITE_BUDGET:
        rep.verdict = "fail"
        rep.notes = f"runtime {elapsed:.1f} s over the {HERMITE_BUDGET:g} s budget"
    return rep


def criterion_5(ctx):
    """Perturbed semigroup: reductions, growth, potential decay and the diagonal trend."""
    rep = _report("lambda_semigroup", {"seed": ctx.seed})
    N = 3
    psi = M.random_bump_field(np.random.default_rng(ctx.seed), N)
    zero = M.PotentialField.constant(0.0, N)
    gamma = 0.7
    const = M.PotentialField.constant(gamma, N)
    sing = M.PotentialField.singular_profile(N)

    def gap(L, ref_values):
        return M.l2_rho(M._field_with_far_field(L.r_grid, L.values - ref_values, N))

    agree, scaling = 0.0, 0.0
    for t in (0.5, 1.0):
        L0 = M.lambda_apply(psi, zero, t)
        agree = max(agree, gap(L0, M.mehler_apply(psi, t, L0.r_grid).values))
        Lc = M.lambda_apply(psi, const, t)
        scaling = max(scaling, gap(Lc, math.exp(gamma * t) * M.mehler_apply(psi, t, Lc.r_grid).values))
    growth = max(M.check_lambda_growth(psi, sing, t).measured["ratio"] for t in (0.5, 1.0))
    decay = M.check_potential_decay(sing, 2.0, 1.0, range(2, 9))
    trend = M.check_diagonal_trend(psi, sing, [0.5, 1.0, 2.0])
    rep.measured["trend_ratios"] = trend.measured["ratios"]
    return rep.decide({"zero_potential_gap": (agree, "<", 1e-5),
                       "constant_potential_gap": (scaling, "<", 1e-5),
                       "growth_ratio": (growth, "<=", 1.0 + 1e-6),
                       "decay_rate": (decay.measured["rate"], ">=", 0.9),
                       "diagonal_trend": (trend.measured["ratio"], "<=", 2.0)})


def _match(alphas, target):
    alphas = np.asarray(alphas)
    return int(np.argmin(np.abs(alphas - target))) if alphas.size else None


def criterion_6(ctx):
    """N=3 exponential scan: candidates exist and are stable."""
    rep = _report("profile_scan")
    nl = Nonlinearity.exponential()
    base = ctx.n3_scan()
    half = P.scan_alphas(nl, 3, tol=0.5 * P.DEFAULT_TOL)
    fine = P.scan_alphas(nl, 3, grid=400)
    dC, missing = 0.0, 0
    for cand in base.candidates:
        j = _match([c.alpha for c in half.candidates], cand.alpha)
        if j is None or abs(half.candidates[j].alpha - cand.alpha) > 1e-6:
            dC = math.inf
        else:
            dC = max(dC, abs(half.candidates[j].tail_constant - cand.tail_constant))
        k = _match([c.alpha for c in fine.candidates], cand.alpha)
        if k is None or abs(fine.candidates[k].alpha - cand.alpha) > 1e-6:
            missing += 1
    rep.measured["candidates"] = base.pairs()
    return rep.decide({"n_candidates": (len(base.candidates), ">=", 1),
                       "tol_halving_dC": (dC, "<", 1e-4),
                       "missing_after_refinement": (missing, "<=", 0)})


def manufactured_run(profile, M_cells, n_steps, tau0=1e-2, span=1e-4):
    """Evolve the exact self-similar state from ``T - t = tau0`` over ``span``.

    The boundary value follows the exact solution.  Returns
    ``(numerical u, exact u)`` on the uniform grid.
    """
    nl = profile.nl
    r = E.uniform_grid(1.0, M_cells)
    st = E.exact_selfsimilar(profile, 1.0, None, r, tau=tau0)
    st.t = 0.0
    one = np.array([1.0])

    def bnd(t_new):
        return float(E.selfsimilar_value(profile, 0.0, 0.0, one, tau0 - t_new)[0])

    dt = span / n_steps
    for _ in range(n_steps):
        st = E.step(st, nl, dt=dt, boundary=bnd)
    return st.u, E.selfsimilar_value(profile, 0.0, 0.0, r, tau0 - span)


def criterion_7(ctx):
    """Evolution: manufactured orders, exact-trace fit and the generic run."""
    rep = _report("evolution")
    prof = ctx.n3_profile()
    errs = []
    for m in (2048, 4096, 8192):
        u, ex = manufactured_run(prof, m, 4000)
        errs.append(float(np.max(np.abs(u - ex))))
    spatial = min(math.log2(errs[i] / errs[i + 1]) for i in range(2))
    us = [manufactured_run(prof, 2048, n)[0] for n in (25, 50, 100, 200)]
    d = [float(np.max(np.abs(us[i] - us[i + 1]))) for i in range(3)]
    temporal = min(math.log2(d[i] / d[i + 1]) for i in range(2))

    nl = prof.nl
    taus = np.geomspace(1e-1, 1e-8, 200)
    fit_exact = E.fit_blowup(E.selfsimilar_trace(prof.alpha, 1.0, taus, nl), nl)

    trace, _, fit = ctx.generic_run()
    ratios = [g / (math.sqrt(2.0) * math.exp(s / 2.0))
              for g, s in zip(trace.grad_bound_margins, trace.sup_norms) if g is not None]
    rep.measured.update({"spatial_errors": errs, "temporal_differences": d,
                         "generic_fit": fit.to_dict()})
    return rep.decide({"spatial_order": (spatial, ">=", 1.9),
                       "temporal_order": (temporal, ">=", 0.9),
                       "exact_T_error": (abs(fit_exact.T - 1.0), "<=", 1e-8),
                       "generic_r_squared": (fit.r_squared, ">=", 0.999),
                       "min_gradient_margin": (min(ratios), ">=", -1e-2)})


def dyadic_grid(j_max=40):
    """``x = 2^-j`` for ``j = j_max..0``; powers of the exponent are exact there."""
    return np.ldexp(1.0, -np.arange(j_max, -1, -1))


def criterion_8(ctx):
    """Final-profile constants on the exact exponential state and the power field."""
    rep = _report("final_profiles")
    prof = ctx.n3_profile()
    nl = prof.nl
    tau_f = 1e-8
    grid = np.concatenate([[0.0], np.geomspace(1e-6, 1.0, 4001)])
    st = E.exact_selfsimilar(prof, 1.0, None, grid, tau=tau_f)
    C2, osc2, r2 = V.final_profile(st, nl, (10.0 * math.sqrt(tau_f), 0.1), tau_f=tau_f,
                                   reference_C=prof.tail_constant)

    p, N = 3.0, 5
    pnl = Nonlinearity.power(p)
    L = pnl.singular_constant(N)
    x = dyadic_grid()
    syn = V.synthetic_state(x, L * x ** (-2.0 / (p - 1.0)), N=N)
    C4, osc4, r4 = V.final_profile(syn, pnl, (2.0 ** -9, 2.0 ** -4), tau_f=1e-8)
    rep.measured.update({"C_est_exp": C2, "tail_constant": prof.tail_constant,
                         "C_est_power": C4, "L": L})
    ok_windows = r2.verdict != "inapplicable" and r4.verdict != "inapplicable"
    return rep.decide({"exp_C_error": (abs(C2 - prof.tail_constant), "<=", 0.05),
                       "exp_oscillation": (osc2, "<=", 0.05),
                       "power_oscillation": (osc4, "<=", 0.0),
                       "power_C_error": (abs(C4 - L), "<=", 0.0),
                       "windows_applicable": (int(ok_windows), ">=", 1)})


def criterion_9(ctx):
    """Log-log family: exact inversion and the generic oscillation trend."""
    rep = _report("loglog")
    C = 4.75
    x = np.geomspace(1e-3, 0.1, 301)
    worst = 0.0
    for sign in (1.0, -1.0):
        u = C - 2.0 * np.log(x) - sign * np.log(np.abs(np.log(x)))
        C_est, _, r = V.loglog_profile_check(V.synthetic_state(x, u), (1e-3, 0.1), R=1.0)
        if r.measured.get("convention") != ("plus" if sign > 0 else "minus"):
            C_est = math.nan
        worst = max(worst, abs(C_est - C)) if np.isfinite(C_est) else math.inf
    _, final, fit = ctx.generic_run()
    trend = V.loglog_trend(final, 0.04, tau_f=fit.T - final.t)
    rep.measured.update({"osc_minus": trend.measured.get("osc_minus"),
                         "osc_plus": trend.measured.get("osc_plus"),
                         "convention": trend.measured.get("convention")})
    return rep.decide({"inverse_C_error": (worst, "<=", 1e-12),
                       "trend_step_change": (trend.measured.get("max_step_change"), "<", 0.0)})


def criterion_10(ctx):
    """A converged profile is stationary under the w-frame evolution."""
    nl = Nonlinearity.exponential()
    scan = P.scan_alphas(nl, WFRAME_N)
    rep = _report("wframe_stationarity", {"N": WFRAME_N, "Y": WFRAME_Y})
    if not scan.candidates:
        rep.verdict = "fail"
        rep.notes = f"N={WFRAME_N} scan returned no candidates"
        return rep
    prof = scan.candidates[0]
    rep.inputs["alpha"] = prof.alpha
    bv = float(prof.evaluate(np.array([WFRAME_Y]))[0])
    res = E.w_frame_evolve(prof, nl, WFRAME_Y, 1.0, bv)
    dev = E.w_deviation(res, prof, WFRAME_Y / 2.0)
    rep.measured["status"] = res.status
    return rep.decide({"deviation": (float(np.max(dev)) if res.status == "ok" else math.inf,
                                     "<", 1e-3)})


def criterion_11(ctx):
    """The three synthetic rows of the classification table."""
    rep = _report("mm_rows")
    p, N = 3.0, 5
    L = Nonlinearity.power(p).singular_constant(N)
    x = dyadic_grid()
    rows = {"nonconstant": (2.0 * L * x ** -1.0, V.LABEL_NONCONSTANT),
            "type_II": (L * x ** -1.0, V.LABEL_TYPE_II),
            "bounded": (np.cos(x), V.LABEL_NO_BLOWUP)}
    wrong = 0
    for name, (u, expected) in rows.items():
        label, r = V.mm_classify(V.synthetic_state(x, u, N=N), p, N, (2.0 ** -9, 2.0 ** -4),
                                 tau_f=1e-8)
        rep.measured[name] = [label, r.measured.get("ell")]
        wrong += label != expected
    return rep.decide({"mislabelled_rows": (wrong, "<=", 0)})


CRITERIA = {
    1: ("singular-profile residuals", criterion_1),
    2: ("kappa identities", criterion_2),
    3: ("Mehler engine", criterion_3),
    4: ("Hermite regularization sweep", criterion_4),
    5: ("Lambda semigroup", criterion_5),
    6: ("profile scan stability", criterion_6),
    7: ("evolution convergence", criterion_7),
    8: ("final-profile constants", criterion_8),
    9: ("log-log branch", criterion_9),
    10: ("w-frame stationarity", criterion_10),
    11: ("classification rows", criterion_11),
}

SUITES = {
    "profiles": (1, 2, 6),
    "semigroup": (3, 4, 5),
    "evolution": (7, 10),
    "theorems": (8, 9, 11),
    "all": tuple(CRITERIA),
}
