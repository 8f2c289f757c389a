"""Checks on blow-up runs and synthetic fields: convergence to a self-similar
profile, final-time profiles, the log-log family, the Matano-Merle
classification and the refined-scale fit.

Every check returns a :class:`~blowup_lab.report.VerificationReport`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from .core_model import InvalidParameter, Nonlinearity, refined_scale
from .evolve import EvolutionState
from .profile import RadialProfile
from .report import FAIL, INAPPLICABLE, INCONCLUSIVE, PASS, VerificationReport

FREEZE_FACTOR = 10.0      # window must start at >= 10 sqrt(T - t_f)
OUTER_FRACTION = 0.1      # and end at <= 0.1 R
BIG_THRESHOLD = 50.0
BAND_TOL = 0.1
NOISE_FLOOR = 1e-8        # d(s) changes below this count as non-increasing

LABEL_CONSTANT = "type I, constant profile ±κ"
LABEL_NONCONSTANT = "type I, nonconstant profile"
LABEL_TYPE_II = "type II"
LABEL_NO_BLOWUP = "no blow-up at x=0"


def synthetic_state(x, u, N=3):
    """State on ``[0] + x`` carrying the samples ``u`` (``x > 0``).

    The value at the origin repeats ``u[0]``; windows never include it.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return EvolutionState(np.concatenate([[0.0], x]), np.concatenate([[u[0]], u]), N=N)


def _window_samples(state, window):
    lo, hi = window
    sel = (state.grid >= lo) & (state.grid <= hi)
    return state.grid[sel], state.u[sel]


def _interp(state):
    return CubicSpline(state.grid, state.u)


def _shifted_mean(g):
    # mean about the minimum: exact when all values agree
    m = float(np.min(g))
    return m + float(np.mean(g - m))


def _window_ok(window, tau_f, R):
    lo, hi = window
    reasons = []
    if not 0 < lo < hi:
        reasons.append("window must satisfy 0 < lo < hi")
    if tau_f is not None and lo < FREEZE_FACTOR * math.sqrt(tau_f) * (1 - 1e-12):
        reasons.append(f"lo < {FREEZE_FACTOR:g} sqrt(T - t_f)")
    if R is not None and hi > OUTER_FRACTION * R * (1 + 1e-12):
        reasons.append(f"hi > {OUTER_FRACTION:g} R")
    return reasons


# ---------------------------------------------------------------------------
# similarity convergence


def similarity_convergence(snapshots, profile: RadialProfile, Y, T, tol_conv=1e-3,
                           n_y=201, min_cells=4, trend_only=False) -> VerificationReport:
    """``d(s) = sup_{|y|<=Y} |w(y,s) - φ(y)|`` along snapshots approaching ``T``.

    Parameters
    ----------
    snapshots : list of EvolutionState or (t, state) / (level, state) pairs
        States at increasing times.
    profile : RadialProfile
        Reference profile.
    T : float
        Blow-up time (fitted or exact).

    Pass when ``d`` does not increase (beyond a 1e-8 noise floor) over the
    last three snapshots and the last ``d`` is ``<= tol_conv``.  Snapshots
    whose ball ``|x| <= Y sqrt(T-t)`` holds fewer than ``min_cells`` grid
    intervals make the report inconclusive.  ``trend_only`` drops the final
    tolerance (for slowly converging generic runs).
    """
    states = [s[1] if isinstance(s, tuple) else s for s in snapshots]
    nl = profile.nl
    rep = VerificationReport("similarity_convergence",
                             {"Y": Y, "T": T, "tol_conv": tol_conv, "n_snapshots": len(states),
                              "profile_alpha": profile.alpha})
    y = np.linspace(0.0, Y, n_y)
    phi = profile.evaluate(y)
    ds, ss = [], []
    for st in states:
        tau = getattr(st, "tau", None) or (T - st.t)
        if not tau > 0:
            rep.verdict = INCONCLUSIVE
            rep.notes = f"snapshot at t={st.t} is not before T"
            return rep
        rad = Y * math.sqrt(tau)
        h = float(np.max(np.diff(st.grid[st.grid <= max(rad, st.grid[1])])))
        if rad > st.R or rad < min_cells * h:
            rep.verdict = INCONCLUSIVE
            rep.notes = f"snapshot at T-t={tau:.3g} does not resolve |y| <= {Y}"
            rep.measured.update({"d": ds, "s": ss})
            return rep
        u = _interp(st)(y * math.sqrt(tau))
        w = math.log(tau) + u if nl.is_exponential else tau ** (1.0 / (nl.p - 1.0)) * u
        ds.append(float(np.max(np.abs(w - phi))))
        ss.append(-math.log(tau))
    rep.measured.update({"d": ds, "s": ss})
    if len(ds) < 3:
        rep.verdict = INCONCLUSIVE
        rep.notes = "fewer than three snapshots"
        return rep
    last = ds[-3:]
    rise = max(last[1] - last[0], last[2] - last[1])
    rules = {"trend_increase": (rise, "<=", NOISE_FLOOR)}
    if not trend_only:
        rules["final_d"] = (ds[-1], "<=", tol_conv)
    return rep.decide(rules)


def similarity_distance(state, profile, Y, tau, n_y=201):
    """``sup_{|y|<=Y} |w - φ|`` for a single state at ``T - t = tau``."""
    y = np.linspace(0.0, Y, n_y)
    u = _interp(state)(y * math.sqrt(tau))
    nl = profile.nl
    w = math.log(tau) + u if nl.is_exponential else tau ** (1.0 / (nl.p - 1.0)) * u
    return float(np.max(np.abs(w - profile.evaluate(y))))


# ---------------------------------------------------------------------------
# final-time profiles


def _profile_g(nl, x, u):
    if nl.is_exponential:
        return u + 2.0 * np.log(x)
    return x ** (2.0 / (nl.p - 1.0)) * u


def final_profile(u_final: EvolutionState, nl: Nonlinearity, window, tau_f=None,
                  reference_C=None, tol_prof=0.05, R=None):
    """Window statistics of ``g = u + 2 log x`` (or ``x^{2/(p-1)} u``).

    Returns ``(C_est, oscillation, report)``.  ``C_est`` is the window mean,
    ``oscillation = max g - min g``.  The window must satisfy
    ``x >= 10 sqrt(tau_f)`` and ``x <= 0.1 R`` (``R`` defaults to the grid
    radius); otherwise the report is inapplicable.
    """
    R = u_final.R if R is None else R
    rep = VerificationReport("final_profile",
                             {"window": list(window), "tau_f": tau_f, "nonlinearity": str(nl),
                              "reference_C": reference_C, "R": R})
    bad = _window_ok(window, tau_f, R)
    if bad:
        rep.verdict = INAPPLICABLE
        rep.notes = "; ".join(bad)
        return math.nan, math.nan, rep
    x, u = _window_samples(u_final, window)
    if x.size < 2:
        rep.verdict = INCONCLUSIVE
        rep.notes = "fewer than two grid points in the window"
        return math.nan, math.nan, rep
    g = _profile_g(nl, x, u)
    C = _shifted_mean(g)
    osc = float(np.max(g) - np.min(g))
    rep.measured.update({"C_est": C, "n_points": int(x.size)})
    rules = {"oscillation": (osc, "<=", tol_prof)}
    if reference_C is not None:
        rules["C_error"] = (abs(C - reference_C), "<=", tol_prof)
    rep.decide(rules)
    return C, osc, rep


def loglog_g(x, u, sign):
    """``u + 2 log x + sign * log|log x|``."""
    return u + 2.0 * np.log(x) + sign * np.log(np.abs(np.log(x)))


def loglog_profile_check(u_final: EvolutionState, window, tau_f=None, tol_prof=0.05, R=None):
    """Fit the log-log family with both signs of the ``log|log x|`` term.

    ``plus`` tests ``u + 2 log x + log|log x| -> C`` and ``minus`` tests
    ``u + 2 log x - log|log x| -> C``.  The convention with the smaller
    oscillation is reported as the fit; both are recorded.  Returns
    ``(C_est, oscillation, report)`` for the better convention.
    """
    R = u_final.R if R is None else R
    rep = VerificationReport("loglog_profile", {"window": list(window), "tau_f": tau_f, "R": R})
    bad = _window_ok(window, tau_f, R)
    if window[1] >= math.exp(-1.0):
        bad.append("window reaches |log x| <= 1")
    if bad:
        rep.verdict = INAPPLICABLE
        rep.notes = "; ".join(bad)
        return math.nan, math.nan, rep
    x, u = _window_samples(u_final, window)
    if x.size < 2:
        rep.verdict = INCONCLUSIVE
        rep.notes = "fewer than two grid points in the window"
        return math.nan, math.nan, rep
    out = {}
    for name, sign in (("plus", 1.0), ("minus", -1.0)):
        g = loglog_g(x, u, sign)
        out[name] = (_shifted_mean(g), float(np.max(g) - np.min(g)))
    best = min(out, key=lambda k: out[k][1])
    C, osc = out[best]
    rep.measured.update({"C_plus": out["plus"][0], "osc_plus": out["plus"][1],
                         "C_minus": out["minus"][0], "osc_minus": out["minus"][1],
                         "convention": best, "C_est": C})
    rep.decide({"oscillation": (osc, "<=", tol_prof)})
    return C, osc, rep


def loglog_trend(u_final: EvolutionState, a, halvings=3, tau_f=None, R=None):
    """Oscillation of both log-log conventions on ``[a, 2a]`` as ``a`` halves.

    Pass when, for the better-fitting convention, the oscillation decreases
    strictly at each of the ``halvings`` steps.
    """
    R = u_final.R if R is None else R
    rep = VerificationReport("loglog_trend", {"a": a, "halvings": halvings, "tau_f": tau_f})
    osc = {"plus": [], "minus": []}
    for j in range(halvings + 1):
        lo = a / 2 ** j
        bad = _window_ok((lo, 2 * lo), tau_f, R)
        if bad or 2 * lo >= math.exp(-1.0):
            rep.verdict = INAPPLICABLE
            rep.notes = "; ".join(bad) or "window reaches |log x| <= 1"
            return rep
        x, u = _window_samples(u_final, (lo, 2 * lo))
        if x.size < 3:
            rep.verdict = INCONCLUSIVE
            rep.notes = f"window [{lo:g}, {2 * lo:g}] holds fewer than three grid points"
            return rep
        for name, sign in (("plus", 1.0), ("minus", -1.0)):
            g = loglog_g(x, u, sign)
            osc[name].append(float(np.max(g) - np.min(g)))
    best = min(osc, key=lambda k: osc[k][-1])
    seq = osc[best]
    worst_step = max(seq[j + 1] - seq[j] for j in range(halvings))
    rep.measured.update({"osc_plus": osc["plus"], "osc_minus": osc["minus"],
                         "convention": best})
    return rep.decide({"max_step_change": (worst_step, "<", 0.0)})


# ---------------------------------------------------------------------------
# classification


def sobolev_exponent(N):
    return math.inf if N <= 2 else (N + 2.0) / (N - 2.0)


def mm_classify(u_final: EvolutionState, p, N, window, tau_f=None, big=BIG_THRESHOLD,
                band=BAND_TOL, R=None):
    """Label the blow-up at the origin from ``ℓ = x^{2/(p-1)} u / L`` on the window.

    Returns ``(label, report)``.  Inapplicable for ``p <= (N+2)/(N-2)``.
    """
    rep = VerificationReport("mm_classify", {"p": p, "N": N, "window": list(window),
                                             "big_threshold": big, "band_tol": band})
    if p <= sobolev_exponent(N):
        rep.verdict = INAPPLICABLE
        rep.notes = "p <= (N+2)/(N-2)"
        return None, rep
    R = u_final.R if R is None else R
    bad = _window_ok(window, tau_f, R)
    if bad:
        rep.verdict = INAPPLICABLE
        rep.notes = "; ".join(bad)
        return None, rep
    nl = Nonlinearity.power(p)
    L = nl.singular_constant(N)
    x, u = _window_samples(u_final, window)
    if x.size < 1:
        rep.verdict = INCONCLUSIVE
        rep.notes = "no grid points in the window"
        return None, rep
    ell = _shifted_mean(x ** (2.0 / (p - 1.0)) * u) / L
    if abs(ell) >= big:
        label = LABEL_CONSTANT
    elif abs(abs(ell) - 1.0) <= band:
        label = LABEL_TYPE_II
    elif abs(ell) <= band:
        label = LABEL_NO_BLOWUP
    else:
        label = LABEL_NONCONSTANT
    rep.measured.update({"ell": ell, "L": L})
    rep.notes = label
    rep.verdict = PASS
    return label, rep


# ---------------------------------------------------------------------------
# refined scale


def _fit_c(xi, v, m):
    z = xi ** m
    y = np.expm1(-v)
    c0 = float(np.dot(z, y) / np.dot(z, z)) if np.dot(z, z) > 0 else 0.0
    model = lambda c: -np.log1p(c[0] * z) - v  # noqa: E731
    lower = -1.0 / float(np.max(z)) + 1e-12
    c0 = max(c0, lower + 1e-9)
    sol = least_squares(model, [c0], bounds=([lower], [np.inf]), xtol=1e-15, ftol=1e-15,
                        gtol=1e-15)
    c = float(sol.x[0])
    res = float(np.sqrt(np.mean(model([c]) ** 2)))
    return c, res


def refined_profile_fit(snapshots, T, window_xi, m_candidates=(2, 4, 6), tol_fit=0.05,
                        n_xi=41):
    """Fit ``v(ξ,t) = log(T-t) + u(λ(t) ξ, t)`` by ``-log(1 + c|ξ|^m)``.

    ``λ`` is :func:`~blowup_lab.core_model.refined_scale` for the candidate
    ``m``; all snapshots are fitted jointly.  Returns ``(m_est, c_est, report)``
    for the candidate with the smallest RMS residual; pass when that residual
    is ``<= tol_fit``.
    """
    states = [s[1] if isinstance(s, tuple) else s for s in snapshots]
    xi = np.linspace(window_xi[0], window_xi[1], n_xi)
    rep = VerificationReport("refined_profile_fit",
                             {"T": T, "window_xi": list(window_xi),
                              "m_candidates": list(m_candidates), "tol_fit": tol_fit})
    fits = {}
    for m in m_candidates:
        xs, vs = [], []
        ok = True
        for st in states:
            tau = getattr(st, "tau", None) or (T - st.t)
            lam = float(refined_scale(None, T, m, tau=tau)) if tau < T else None
            if lam is None or lam * window_xi[1] > st.R:
                ok = False
                break
            vs.append(math.log(tau) + _interp(st)(lam * xi))
            xs.append(xi)
        if not ok:
            continue
        c, res = _fit_c(np.concatenate(xs), np.concatenate(vs), m)
        fits[m] = (c, res)
    if not fits:
        rep.verdict = INCONCLUSIVE
        rep.notes = "no candidate scale fits inside the grid"
        return None, None, rep
    m_best = min(fits, key=lambda m: fits[m][1])
    c_best, r_best = fits[m_best]
    rep.measured.update({f"c_m{m}": fits[m][0] for m in fits})
    rep.measured.update({f"residual_m{m}": fits[m][1] for m in fits})
    rep.measured.update({"m_est": m_best, "c_est": c_best})
    rep.decide({"residual": (r_best, "<=", tol_fit)})
    if rep.verdict == FAIL:
        rep.verdict = INCONCLUSIVE
        rep.notes = "all candidate fits poor"
    return m_best, c_best, rep


def refined_synthetic_state(T, tau, m, c, grid, N=3):
    """State whose refined variable is exactly ``-log(1 + c|ξ|^m)``."""
    lam = float(refined_scale(None, T, m, tau=tau))
    grid = np.asarray(grid, dtype=float)
    u = -math.log(tau) - np.log1p(c * (grid / lam) ** m)
    return EvolutionState(grid, u, t=T - tau, N=N)
