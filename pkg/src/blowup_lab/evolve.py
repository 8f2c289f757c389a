"""Radial method-of-lines solver for ``u_t = Δu + f(u)`` on a ball, with
blow-up detection, type-I rate fitting, exact self-similar states and the
similarity-frame evolution of ``w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core_model import DomainError, DomainSpec, InvalidParameter, Nonlinearity
from .profile import TAIL_CONVERGENT, TRIVIAL, RadialProfile

SUP_NORM_CAP = "SupNormCap"
STEP_UNDERFLOW = "StepUnderflow"
TIME_CAP = "TimeCap"

DEFAULT_M = 2048
C_SAFETY = 0.1
DT_MIN = 1e-14


def default_cap(nl: Nonlinearity) -> float:
    return 25.0 if nl.is_exponential else 1e6


# ---------------------------------------------------------------------------
# grids and operators


def uniform_grid(R=1.0, M=DEFAULT_M):
    return np.linspace(0.0, float(R), int(M) + 1)


def graded_grid(Y, n, delta=0.2, ell=1.0):
    """Radii ``y(x) = x - ℓ(1-δ) tanh(x/ℓ)`` for ``n`` uniform ``x`` ending at ``Y``."""
    from scipy.optimize import brentq
    shape = lambda x: x - ell * (1.0 - delta) * math.tanh(x / ell)  # noqa: E731
    x_max = brentq(lambda x: shape(x) - Y, 0.0, Y + ell)
    x = np.linspace(0.0, x_max, n)
    y = x - ell * (1.0 - delta) * np.tanh(x / ell)
    y[-1] = Y
    return y


def radial_operator(r, N, drift=0.0):
    """Rows ``(lo, di, up)`` of ``u'' + ((N-1)/r - drift r) u'`` on the grid ``r``.

    Three-point stencils for nonuniform spacing; the origin row is the
    regular limit ``2N (u_1 - u_0)/r_1^2`` (the drift vanishes there).
    The last row is left for the boundary condition.
    """
    r = np.asarray(r, dtype=float)
    n = r.size
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    h0 = r[1] - r[0]
    di[0] = -2.0 * N / h0 ** 2
    up[0] = 2.0 * N / h0 ** 2
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    den = hm * hp * (hm + hp)
    g = (N - 1) / r[1:-1] - drift * r[1:-1]
    lo[1:-1] = (2.0 * hp - g * hp ** 2) / den
    di[1:-1] = (-2.0 * (hm + hp) + g * (hp ** 2 - hm ** 2)) / den
    up[1:-1] = (2.0 * hm + g * hm ** 2) / den
    return lo, di, up


def apply_operator(rows, u):
    lo, di, up = rows
    out = di * u
    out[1:] += lo[1:] * u[:-1]
    out[:-1] += up[:-1] * u[1:]
    return out


# ---------------------------------------------------------------------------
# state and stepping


@dataclass
class EvolutionState:
    """Solution ``u`` on the radii ``grid`` (``grid[0] = 0``, ``grid[-1] = R``)."""

    grid: np.ndarray
    u: np.ndarray
    t: float = 0.0
    dt: float = 0.0
    step_count: int = 0
    N: int = 3
    _rows: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.grid.shape != self.u.shape or self.grid.size < 3:
            raise InvalidParameter("grid and u must have the same length >= 3")
        if self.grid[0] != 0 or np.any(np.diff(self.grid) <= 0):
            raise InvalidParameter("grid must start at 0 and increase strictly")

    @property
    def R(self):
        return float(self.grid[-1])

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.u)))

    def rows(self):
        if self._rows is None:
            self._rows = radial_operator(self.grid, self.N)
        return self._rows

    def copy(self):
        return replace(self, u=self.u.copy())

    def to_csv(self, path):
        from .harness import write_csv
        write_csv(path, ["r", "u"], np.column_stack([self.grid, self.u]))


@dataclass
class RunTrace:
    times: list = field(default_factory=list)
    sup_norms: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    grad_bound_margins: list = field(default_factory=list)
    stop_reason: str = ""
    snapshots: list = field(default_factory=list)
    diagnostic: str = ""

    def record(self, state, margin):
        self.times.append(state.t)
        self.sup_norms.append(state.sup_norm)
        self.dts.append(state.dt)
        self.grad_bound_margins.append(margin)

    @property
    def blew_up(self):
        return self.stop_reason == SUP_NORM_CAP

    def to_csv(self, path):
        from .harness import write_csv
        m = [np.nan if g is None else g for g in self.grad_bound_margins]
        write_csv(path, ["t", "sup_norm", "dt", "grad_margin"],
                  np.column_stack([self.times, self.sup_norms, self.dts, m]))


def reaction_dt(u, nl: Nonlinearity, dt_max, c_safety=C_SAFETY):
    """``min(dt_max, c_safety / f'(max u))``."""
    fp = float(nl.fprime(np.max(u)))
    return dt_max if fp <= 0 else min(dt_max, c_safety / fp)


def step(state: EvolutionState, nl: Nonlinearity, dt=None, dt_max=1e-3, c_safety=C_SAFETY,
         boundary=0.0, reaction=True) -> EvolutionState:
    """One IMEX step: backward Euler for diffusion, forward Euler for the reaction.

    Parameters
    ----------
    dt : float, optional
        Fixed step; by default ``min(dt_max, c_safety/f'(max u))``.
    boundary : float or callable
        Dirichlet value at ``R`` (a callable is evaluated at the new time).
    reaction : bool
        ``False`` switches the reaction off (heat equation test hook).
    """
    if not np.all(np.isfinite(state.u)):
        raise DomainError("non-finite solution values")
    if dt is None:
        dt = reaction_dt(state.u, nl, dt_max, c_safety)
    t_new = state.t + dt
    bval = boundary(t_new) if callable(boundary) else float(boundary)
    lo, di, up = state.rows()
    kind = nl.kernel_code if reaction else 2
    p = 0.0 if nl.is_exponential else nl.p
    u = kernels.imex_step(state.u, lo, di, up, float(dt), kind, p, float(bval))
    new = replace(state, u=u, t=t_new, dt=dt, step_count=state.step_count + 1)
    new._rows = state._rows
    return new


def gradient_bound_check(state: EvolutionState, nl: Nonlinearity = None):
    """``√2 e^{max u/2} - max |u_r|`` with one-sided differences between nodes."""
    if nl is not None and not nl.is_exponential:
        raise InvalidParameter("the gradient bound is stated for the exponential nonlinearity")
    grad = np.max(np.abs(np.diff(state.u) / np.diff(state.grid)))
    return math.sqrt(2.0) * math.exp(np.max(state.u) / 2.0) - float(grad)


def initial_state(u0, N, R=1.0, M=DEFAULT_M):
    """State from a callable ``u0(r)`` or from samples on the uniform grid."""
    r = uniform_grid(R, M)
    u = np.asarray(u0(r) if callable(u0) else u0, dtype=float)
    return EvolutionState(r, u, N=int(N))


def run_until_blowup(u0, nl: Nonlinearity, domain: DomainSpec, M=DEFAULT_M, cap=None,
                     t_max=1.0, dt_max=1e-3, c_safety=C_SAFETY, dt_min=DT_MIN,
                     snapshot_levels=(), max_steps=5_000_000):
    """Step until the sup norm reaches ``cap``, the step underflows, or ``t_max``.

    Parameters
    ----------
    u0 : callable or array
        Initial data (nonnegative, ``u0(R) = 0``).
    snapshot_levels : sequence of float
        A copy of the state is stored the first time the sup norm exceeds each
        level (in ``trace.snapshots`` as ``(level, state)``).

    Returns
    -------
    (RunTrace, EvolutionState)
    """
    state = u0 if isinstance(u0, EvolutionState) else initial_state(u0, domain.N, domain.R, M)
    if np.any(state.u < 0):
        raise InvalidParameter("initial data must be nonnegative")
    if abs(state.u[-1]) > 0:
        raise InvalidParameter("initial data must vanish at r = R")
    cap = default_cap(nl) if cap is None else cap
    levels = sorted(snapshot_levels)
    trace = RunTrace()
    exp_nl = nl.is_exponential
    trace.record(state, gradient_bound_check(state) if exp_nl else None)
    u_floor = min(0.0, float(np.min(state.u))) - 1e-12
    while True:
        if state.sup_norm >= cap:
            trace.stop_reason = SUP_NORM_CAP
            break
        if state.t >= t_max:
            trace.stop_reason = TIME_CAP
            trace.diagnostic = "no blow-up detected"
            break
        if state.step_count >= max_steps:
            trace.stop_reason = TIME_CAP
            trace.diagnostic = "step budget exhausted"
            break
        dt = min(reaction_dt(state.u, nl, dt_max, c_safety), t_max - state.t)
        if dt < dt_min:
            trace.stop_reason = STEP_UNDERFLOW
            break
        state = step(state, nl, dt=dt)
        if np.min(state.u) < u_floor:
            trace.diagnostic = f"maximum principle violated at t={state.t:.6g}"
        trace.record(state, gradient_bound_check(state) if exp_nl else None)
        while levels and state.sup_norm >= levels[0]:
            trace.snapshots.append((levels.pop(0), state.copy()))
    return trace, state


# ---------------------------------------------------------------------------
# type-I rate fit


@dataclass
class BlowupFit:
    T: float
    band: tuple
    r_squared: float
    slope: float
    n_samples: int
    reliable: bool
    diagnostic: str = ""

    def to_dict(self):
        return {"T": self.T, "band": list(self.band), "r_squared": self.r_squared,
                "slope": self.slope, "n_samples": self.n_samples, "reliable": self.reliable,
                "diagnostic": self.diagnostic}


def fit_blowup(trace: RunTrace, nl: Nonlinearity, min_samples=20) -> BlowupFit:
    """Fit the blow-up time from the final decade of growth.

    For the exponential, ``e^{-‖u‖}`` is regressed linearly on ``t`` over the
    samples where it lies within a factor 10 of its final value; for the
    power, ``‖u‖^{-(p-1)}`` is used the same way.  ``T`` is the ``t``
    intercept.  The band is ``(C1, C2)`` with
    ``-C1 <= log(T-t) + ‖u‖ <= C2`` (exponential) or
    ``-C1 <= log((T-t)^{1/(p-1)} ‖u‖) <= C2`` (power) over the window.
    """
    t = np.asarray(trace.times, dtype=float)
    m = np.asarray(trace.sup_norms, dtype=float)
    if nl.is_exponential:
        z = np.exp(-m)
    else:
        z = m ** (-(nl.p - 1.0))
    bad = BlowupFit(math.nan, (math.nan, math.nan), 0.0, math.nan, 0, False,
                    "rate fit unreliable")
    if t.size < 2 or not np.all(np.isfinite(z)):
        return bad
    sel = z <= 10.0 * z[-1]
    # only the final contiguous stretch counts
    k = t.size - 1
    while k > 0 and sel[k - 1]:
        k -= 1
    tw, zw, mw = t[k:], z[k:], m[k:]
    if tw.size < min_samples:
        bad.diagnostic = f"rate fit unreliable: {tw.size} samples in the final decade"
        bad.n_samples = int(tw.size)
        return bad
    slope, icpt = np.polyfit(tw, zw, 1)
    pred = slope * tw + icpt
    ss_res = float(np.sum((zw - pred) ** 2))
    ss_tot = float(np.sum((zw - zw.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    T = -icpt / slope if slope < 0 else math.nan
    diag = ""
    reliable = True
    if np.any(np.diff(mw) < 0):
        diag, reliable = "rate fit unreliable: non-monotone tail", False
    if not r2 >= 0.9 or not np.isfinite(T):
        diag, reliable = "rate fit unreliable", False
    band = (math.nan, math.nan)
    if np.isfinite(T):
        tau = T - tw
        ok = tau > 0
        if np.any(ok):
            if nl.is_exponential:
                q = np.log(tau[ok]) + mw[ok]
            else:
                q = np.log(tau[ok] ** (1.0 / (nl.p - 1.0)) * mw[ok])
            band = (float(-np.min(q)), float(np.max(q)))
    return BlowupFit(float(T), band, float(r2), float(slope), int(tw.size), reliable, diag)


# ---------------------------------------------------------------------------
# exact self-similar solutions


def _check_profile(profile):
    if profile.classification not in (TAIL_CONVERGENT, TRIVIAL):
        raise InvalidParameter(
            f"profile must be TailConvergent or Trivial, got {profile.classification}")


def selfsimilar_value(profile: RadialProfile, T, t, r, tau=None):
    """``u(r,t)`` of the self-similar solution generated by ``profile``."""
    _check_profile(profile)
    tau = (T - t) if tau is None else tau
    if not tau > 0:
        raise DomainError("post-blow-up time")
    y = np.asarray(r, dtype=float) / math.sqrt(tau)
    phi = profile.evaluate(y)
    if profile.nl.is_exponential:
        return -math.log(tau) + phi
    return tau ** (-1.0 / (profile.nl.p - 1.0)) * phi


def similarity_grid(tau, R, y_max, n=4001, n_outer=400):
    """Radii ``√tau · y`` for ``n`` uniform ``y`` in ``[0, y_max]``, then geometric to ``R``.

    Snapshots sampled on these grids see the same ``y`` nodes at every
    ``tau``, so the interpolation error in the similarity variable does not
    grow as ``tau -> 0``.
    """
    s = math.sqrt(tau)
    y = np.linspace(0.0, y_max, n)
    inner = s * y[s * y < R]
    outer = np.geomspace(inner[-1], R, n_outer)[1:]
    return np.concatenate([inner, outer])


def exact_selfsimilar(profile: RadialProfile, T, t, grid, tau=None) -> EvolutionState:
    """Sample ``u = -log(T-t) + φ(r/√(T-t))`` (or ``(T-t)^{-1/(p-1)} φ``) on ``grid``.

    ``tau`` may be given instead of computing ``T - t`` (useful when
    ``T - t`` is far below the resolution of ``t``).
    """
    tau = (T - t) if tau is None else tau
    u = selfsimilar_value(profile, T, t, grid, tau)
    return EvolutionState(np.asarray(grid, dtype=float), u, t=T - tau, N=profile.N)


def selfsimilar_pde_residual(profile: RadialProfile, tau, r, h):
    """Residual ``u_t - Δu - f(u)`` of the self-similar solution at ``T - t = tau``.

    ``u_t`` is analytic; ``Δu`` uses centred differences of step ``h`` in ``r``
    (for ``r > h``).  Returned alongside the scale ``|u_t| + |Δu| + |f(u)|``.
    """
    nl = profile.nl
    r = np.asarray(r, dtype=float)
    f = lambda x: selfsimilar_value(profile, 0.0, 0.0, x, tau)  # noqa: E731
    u0, up, um = f(r), f(r + h), f(r - h)
    lap = (up - 2 * u0 + um) / h ** 2 + (profile.N - 1) / r * (up - um) / (2 * h)
    y = r / math.sqrt(tau)
    phi = profile.evaluate(y)
    dphi = profile.evaluate(y, 1)
    if nl.is_exponential:
        ut = 1.0 / tau + dphi * y / (2.0 * tau)
    else:
        k = 1.0 / (nl.p - 1.0)
        ut = tau ** (-k - 1.0) * (k * phi + 0.5 * y * dphi)
    fu = nl.f(u0)
    return ut - lap - fu, np.abs(ut) + np.abs(lap) + np.abs(fu)


def selfsimilar_trace(alpha, T, taus, nl: Nonlinearity):
    """Synthetic sup-norm trace of the self-similar solution with ``φ(0) = alpha``."""
    taus = np.asarray(taus, dtype=float)
    if nl.is_exponential:
        m = -np.log(taus) + alpha
    else:
        m = taus ** (-1.0 / (nl.p - 1.0)) * alpha
    tr = RunTrace()
    tr.times = list(T - taus)
    tr.sup_norms = list(m)
    tr.stop_reason = SUP_NORM_CAP
    return tr


# ---------------------------------------------------------------------------
# similarity frame


@dataclass
class WFrameResult:
    y: np.ndarray
    s: list
    snapshots: list
    status: str = "ok"
    diagnostic: str = ""

    @property
    def final(self):
        return self.snapshots[-1]


def w_frame_evolve(w0, nl: Nonlinearity, Y, s_span, boundary, N=None, n=8001, ds=1e-3,
                   n_snapshots=11, grading=0.2, blowup_level=50.0) -> WFrameResult:
    """Integrate ``w_s = Δw - (y/2)·∇w + G(w)`` on ``|y| <= Y``, ``w(Y) = boundary``.

    ``G(w) = e^w - 1`` (exponential) or ``-w/(p-1) + |w|^{p-1} w`` (power).
    Linearly implicit Euler steps on a graded grid (fine near the origin).

    Parameters
    ----------
    w0 : callable, RadialProfile or WeightedField
        Initial data, evaluated on the grid.
    N : int, optional
        Dimension (taken from ``w0`` when it carries one).
    """
    if N is None:
        N = getattr(w0, "N", None)
    if N is None:
        raise InvalidParameter("dimension N required")
    r_max = getattr(w0, "r_max", None)
    if isinstance(w0, RadialProfile):
        r_max = w0.r_end
    if r_max is not None and Y > r_max * (1 + 1e-12):
        raise InvalidParameter(f"Y={Y} beyond the sampled range {r_max}")
    y = graded_grid(Y, n, grading)
    if isinstance(w0, RadialProfile):
        w = w0.evaluate(y)
    else:
        w = np.asarray(w0(y), dtype=float)
    lo, di, up = radial_operator(y, N, drift=0.5)
    w = w.copy()
    w[-1] = boundary
    steps = max(1, int(math.ceil(s_span / ds)))
    ds = s_span / steps
    every = max(1, steps // max(1, n_snapshots - 1))
    snaps, ss = [w.copy()], [0.0]
    res = WFrameResult(y, ss, snaps)
    for j in range(1, steps + 1):
        if nl.is_exponential:
            w = kernels.linearly_implicit_step(w, lo, di, up, ds, float(boundary))
        else:
            w = _power_li_step(w, (lo, di, up), ds, nl.p, float(boundary))
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > blowup_level:
            res.status = "blowup"
            res.diagnostic = f"w left the bounded regime at s={j * ds:.4g}"
            snaps.append(w.copy())
            ss.append(j * ds)
            return res
        if j % every == 0 or j == steps:
            snaps.append(w.copy())
            ss.append(j * ds)
    return res


def _power_li_step(w, rows, ds, p, boundary):
    lo, di, up = rows
    g = -w / (p - 1.0) + np.abs(w) ** (p - 1.0) * w
    dg = -1.0 / (p - 1.0) + p * np.abs(w) ** (p - 1.0)
    rhs = ds * (apply_operator(rows, w) + g)
    a = -ds * lo
    b = 1.0 - ds * (di + dg)
    c = -ds * up
    a[-1], b[-1], c[-1] = 0.0, 1.0, 0.0
    rhs[-1] = boundary - w[-1]
    return w + kernels.thomas(a, b, c, rhs)


def w_deviation(result: WFrameResult, reference, radius):
    """``sup_{|y| <= radius} |w(s) - reference|`` for every snapshot."""
    sel = result.y <= radius
    ref = reference.evaluate(result.y[sel]) if isinstance(reference, RadialProfile) \
        else np.asarray(reference(result.y[sel]))
    return np.array([float(np.max(np.abs(w[sel] - ref))) for w in result.snapshots])
