"""Radial self-similar profiles.

A profile solves

    phi'' + ((N-1)/r - r/2) phi' + g(phi) = 0,   phi'(0) = 0,

with ``g = e^phi - 1`` (exponential) or ``g = -phi/(p-1) + phi^p`` (power),
``phi(0) = alpha`` resp. ``kappa + alpha``.  Nontrivial profiles have an
algebraic tail: ``v = phi + 2 log r`` (exponential) or ``v = r^(2/(p-1)) phi``
(power) tends to a constant ``C_alpha``.

Shooting from the origin is unstable in the outer region: the linearised
equation has a mode growing like ``exp(r^2/4) r^m``, so every inexact
``alpha`` is eventually thrown off the tail.  The scan therefore detects the
direction in which a shot leaves the algebraic tail and refines by bisection
while pushing the detection radius outward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BPoly

from . import kernels
from .core_model import InvalidParameter, Nonlinearity

TRIVIAL = "Trivial"
TAIL_CONVERGENT = "TailConvergent"
DIVERGENT = "Divergent"
UNDETERMINED = "Undetermined"

DEFAULT_TOL = 1e-10
DEFAULT_R_MAX = 40.0
DRIFT_THRESHOLD = 1e-3
# the integrator runs this much tighter than the user tolerance so that the
# dense interpolant meets the residual bound max(1e-8, 10 tol)
INTEGRATION_TOL_FACTOR = 0.1
# step cap: keeps the quintic dense output within the residual budget
H_MAX = 0.01
# number of inverse-square terms in the algebraic tail model
TAIL_TERMS = 3


class ExtrapolationError(ValueError):
    """Requested radius lies beyond both the samples and the tail model."""


@dataclass
class TailFit:
    """Least-squares tail model ``v = C + sum_k a_k r^(-2k) + K G(r)``."""

    C: float
    coeffs: tuple
    growing: float
    drift: float
    window: tuple

    def v_algebraic(self, r, deriv=0):
        r = np.asarray(r, dtype=float)
        if deriv == 0:
            out = np.full_like(r, self.C)
            for k, a in enumerate(self.coeffs, start=1):
                out = out + a * r ** (-2 * k)
            return out
        out = np.zeros_like(r)
        for k, a in enumerate(self.coeffs, start=1):
            out = out - 2 * k * a * r ** (-2 * k - 1)
        return out


@dataclass
class RadialProfile:
    """Sampled solution of the profile equation.

    ``r_samples`` start at 0 for shot profiles; the closed-form singular
    profiles are sampled on ``[r_min, r_max]`` with ``r_min > 0``.
    """

    alpha: float
    nl: Nonlinearity
    N: int
    r_samples: np.ndarray
    phi_samples: np.ndarray
    phi_prime_samples: np.ndarray
    tail_constant: float | None = None
    classification: str = UNDETERMINED
    tol: float = DEFAULT_TOL
    r_max: float = DEFAULT_R_MAX
    status: int = 0
    diagnostic: str = ""
    tail_fit: TailFit | None = None
    singular: bool = False
    _interp: object = field(default=None, repr=False, compare=False)

    @property
    def phi0(self):
        return self.alpha if self.nl.is_exponential else self.nl.kappa() + self.alpha

    @property
    def r_end(self):
        return float(self.r_samples[-1])

    def _phi_second(self, r, phi, dphi):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        at0 = r == 0
        g = self.nl.profile_g(phi)
        out[at0] = -g[at0] / self.N if np.ndim(g) else -g / self.N
        nz = ~at0
        out[nz] = -((self.N - 1) / r[nz] - 0.5 * r[nz]) * dphi[nz] - g[nz]
        return out

    def _interpolant(self):
        if self._interp is None:
            r = self.r_samples
            y = np.column_stack(
                [self.phi_samples, self.phi_prime_samples,
                 self._phi_second(r, self.phi_samples, self.phi_prime_samples)])
            self._interp = BPoly.from_derivatives(r, y)
        return self._interp

    def evaluate(self, r, deriv=0):
        """Profile (or derivative ``deriv`` <= 2) at radii ``r``.

        Inside the sampled range a quintic Hermite interpolant is used;
        beyond it the fitted algebraic tail, when available.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.singular:
            return _singular_eval(self.nl, self.N, r, deriv)
        if self.classification == TRIVIAL:
            return np.full_like(r, self.phi0 if deriv == 0 else 0.0)
        out = np.empty_like(r)
        inside = r <= self.r_end
        if np.any(inside):
            out[inside] = self._interpolant()(r[inside], deriv)
        if np.any(~inside):
            if self.tail_fit is None:
                raise ExtrapolationError(
                    f"radius {r[~inside].max():g} beyond samples (r_end={self.r_end:g}) "
                    "and no tail model")
            out[~inside] = _phi_from_tail(self.nl, self.tail_fit, r[~inside], deriv)
        return out

    def residual(self, r):
        """Residual of the profile equation at radii ``r`` (r > 0)."""
        r = np.asarray(r, dtype=float)
        phi = self.evaluate(r)
        d1 = self.evaluate(r, 1)
        d2 = self.evaluate(r, 2)
        return d2 + ((self.N - 1) / r - 0.5 * r) * d1 + self.nl.profile_g(phi)

    def scaled_residual(self, r):
        """Residual divided by ``1 + |phi''| + |drift term| + |g|``."""
        r = np.asarray(r, dtype=float)
        phi = self.evaluate(r)
        d1 = self.evaluate(r, 1)
        d2 = self.evaluate(r, 2)
        t1 = ((self.N - 1) / r - 0.5 * r) * d1
        g = self.nl.profile_g(phi)
        return (d2 + t1 + g) / (1.0 + np.abs(d2) + np.abs(t1) + np.abs(g))

    def residual_points(self):
        """Knots and knot midpoints on which :meth:`max_residual` is taken.

        Intervals so short that rounding in the interpolant's second
        derivative, roughly ``eps (|phi| + h|phi'|) / h^2``, would exceed
        1e-10 relative to ``1 + |phi''|`` are skipped, as is the last tenth
        of a guard-stopped shot.
        """
        r = self.r_samples
        if self.singular:
            return r
        h = np.diff(r)
        phi, dphi = self.phi_samples[:-1], self.phi_prime_samples[:-1]
        d2 = self._phi_second(r[:-1], phi, dphi)
        floor = 100 * np.finfo(float).eps * (np.abs(phi) + h * np.abs(dphi)) / h ** 2
        ok = floor < 1e-10 * (1.0 + np.abs(d2))
        ok[0] = False  # the interval [0, r0] is the series start, not a step
        # the interpolant evaluates a knot on the piece to its right
        knot_ok = ok & np.append(ok[1:], True)
        pts = np.concatenate([0.5 * (r[:-1] + r[1:])[ok], r[1:][knot_ok]])
        pts = np.sort(pts)
        if self.status == 1:
            pts = pts[pts < 0.9 * self.r_end]
        return pts

    def max_residual(self):
        """Largest scaled residual of the profile equation (see ``residual_points``)."""
        pts = self.residual_points()
        if pts.size == 0:
            return 0.0
        return float(np.max(np.abs(self.scaled_residual(pts))))

    def metadata(self) -> dict:
        return {
            "alpha": self.alpha,
            "N": self.N,
            "nonlinearity": self.nl.to_dict(),
            "tail_constant": self.tail_constant,
            "classification": self.classification,
            "tolerances": {"tol": self.tol, "drift_threshold": DRIFT_THRESHOLD},
            "r_max": self.r_max,
            "r_end": self.r_end,
            "status": self.status,
            "diagnostic": self.diagnostic,
            "singular": self.singular,
        }

    def to_csv(self, path):
        from .harness import write_csv
        write_csv(path, ["r", "phi", "phi_prime"],
                  np.column_stack([self.r_samples, self.phi_samples, self.phi_prime_samples]))

    def save(self, stem):
        """Write ``stem.csv`` and ``stem.json``."""
        self.to_csv(f"{stem}.csv")
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


def _tail_variable(nl, r, phi, dphi):
    if nl.is_exponential:
        return phi + 2.0 * np.log(r), dphi + 2.0 / r
    k = nl.scaling_exponent()
    rk = r ** k
    return rk * phi, rk * dphi + k * r ** (k - 1) * phi


def _phi_from_tail(nl, fit, r, deriv):
    v = fit.v_algebraic(r)
    if nl.is_exponential:
        if deriv == 0:
            return v - 2.0 * np.log(r)
        dv = fit.v_algebraic(r, 1)
        if deriv == 1:
            return dv - 2.0 / r
        # second derivative of the algebraic model
        d2 = np.zeros_like(r)
        for k, a in enumerate(fit.coeffs, start=1):
            d2 = d2 + 2 * k * (2 * k + 1) * a * r ** (-2 * k - 2)
        return d2 + 2.0 / r ** 2
    k = nl.scaling_exponent()
    if deriv == 0:
        return v * r ** (-k)
    dv = fit.v_algebraic(r, 1)
    if deriv == 1:
        return dv * r ** (-k) - k * v * r ** (-k - 1)
    d2v = np.zeros_like(r)
    for j, a in enumerate(fit.coeffs, start=1):
        d2v = d2v + 2 * j * (2 * j + 1) * a * r ** (-2 * j - 2)
    return (d2v * r ** (-k) - 2 * k * dv * r ** (-k - 1)
            + k * (k + 1) * v * r ** (-k - 2))


def _growing_power(nl, N):
    """Exponent m of the growing mode ``exp(r^2/4) r^m`` of the tail variable."""
    k = nl.scaling_exponent()
    return 2.0 * k - N


def _a1(nl, N, v):
    """Leading inverse-square coefficient of the tail given the level ``v``."""
    if nl.is_exponential:
        return -(np.exp(np.minimum(v, 700.0)) - 2.0 * (N - 2))
    k = nl.scaling_exponent()
    lp = k * (N - 2.0 - k)
    return -v * (np.sign(v) * np.abs(v) ** (nl.p - 1.0) - lp)


def _corrected_drift(nl, N, r, phi, dphi):
    """``r v' + 2 a1(v)/r^2``: vanishes on the tail up to O(r^-4)."""
    v, dv = _tail_variable(nl, r, phi, dphi)
    return r * dv + 2.0 * _a1(nl, N, v) / r ** 2


def _guard(nl):
    if nl.is_exponential:
        return 0.0, 0.0, 50.0
    return 10.0 * nl.kappa(), nl.scaling_exponent(), 100.0


def _taylor_start(nl, N, phi0):
    """Start radius and state from the series phi0 + a2 r^2 + a4 r^4."""
    g0 = float(nl.profile_g(phi0))
    if nl.is_exponential:
        gp = math.exp(phi0)
    else:
        gp = -1.0 / (nl.p - 1.0) + nl.p * abs(phi0) ** (nl.p - 1.0)
    r0 = min(1e-4, 1e-4 / math.sqrt(max(abs(gp), 1.0)))
    a2 = -g0 / (2.0 * N)
    a4 = a2 * (1.0 - gp) / (4.0 * N + 8.0)
    return r0, phi0 + a2 * r0 ** 2 + a4 * r0 ** 4, 2 * a2 * r0 + 4 * a4 * r0 ** 3


def _raw_shot(alpha, nl, N, r_end, tol):
    phi0 = alpha if nl.is_exponential else nl.kappa() + alpha
    r0, y0, dy0 = _taylor_start(nl, N, phi0)
    gs, gk, gc = _guard(nl)
    p = 0.0 if nl.is_exponential else nl.p
    itol = INTEGRATION_TOL_FACTOR * tol
    r, phi, dphi, status = kernels.shoot_dp54(
        r0, y0, dy0, float(r_end), float(N), nl.kernel_code, p,
        itol, itol, gs, gk, gc, H_MAX)
    r = np.concatenate([[0.0], r])
    phi = np.concatenate([[phi0], phi])
    dphi = np.concatenate([[0.0], dphi])
    return r, phi, dphi, int(status)


def _is_trivial(nl, phi0):
    g0 = float(nl.profile_g(phi0))
    return abs(g0) <= 1e-14 * max(1.0, abs(phi0))


def shoot_profile(alpha, nl: Nonlinearity, N: int, r_max=DEFAULT_R_MAX,
                  tol=DEFAULT_TOL) -> RadialProfile:
    """Integrate the profile equation from the origin.

    Parameters
    ----------
    alpha : float
        Shooting value; ``phi(0) = alpha`` (exponential) or ``kappa + alpha``.
    r_max : float
        Outer radius (> 1).
    tol : float
        Relative and absolute tolerance of the Dormand-Prince integrator.

    Returns
    -------
    RadialProfile
        Classified ``Trivial`` for constant solutions, ``Divergent`` when the
        overflow guard trips, ``TailConvergent`` when the tail fit converges
        and ``Undetermined`` otherwise (including step underflow).
    """
    if not r_max > 1:
        raise InvalidParameter("r_max must exceed 1")
    if not tol > 0:
        raise InvalidParameter("tol must be positive")
    N = int(N)
    phi0 = alpha if nl.is_exponential else nl.kappa() + alpha
    if _is_trivial(nl, phi0):
        r = np.linspace(0.0, r_max, 401)
        return RadialProfile(alpha, nl, N, r, np.full_like(r, phi0), np.zeros_like(r),
                             None, TRIVIAL, tol, r_max, 0, "constant solution")
    r, phi, dphi, status = _raw_shot(alpha, nl, N, r_max, tol)
    prof = RadialProfile(alpha, nl, N, r, phi, dphi, None, UNDETERMINED, tol, r_max, status)
    if status == 1:
        prof.classification = DIVERGENT
        prof.diagnostic = f"overflow guard at r={prof.r_end:.6g}"
    elif status in (2, 3):
        prof.diagnostic = "step-size underflow" if status == 2 else "step budget exhausted"
    else:
        fit = fit_tail(prof)
        if fit is not None and fit.drift < DRIFT_THRESHOLD:
            prof.tail_fit = fit
            prof.tail_constant = fit.C
            prof.classification = TAIL_CONVERGENT
        else:
            prof.diagnostic = "tail drift above threshold"
    return prof


def fit_tail(profile: RadialProfile, window=None, npts=200) -> TailFit | None:
    """Fit the tail model on ``[r_end/2, r_end]`` (or ``window``).

    The growing mode ``exp(r^2/4) r^m`` is part of the basis so that a small
    residual contamination does not bias ``C``.  The reported drift is
    ``max r |v' - v'_alg|``, the part of the slope not explained by the
    algebraic (convergent) tail; it includes the growing component.
    """
    nl, N = profile.nl, profile.N
    r_end = profile.r_end
    lo, hi = window if window is not None else (0.5 * r_end, r_end)
    if hi > r_end or lo <= 0:
        return None
    r = np.linspace(lo, hi, npts)
    phi = profile.evaluate(r)
    dphi = profile.evaluate(r, 1)
    v, dv = _tail_variable(nl, r, phi, dphi)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(dv))):
        return None
    m = _growing_power(nl, N)
    G = np.exp((r * r - hi * hi) / 4.0) * (r / hi) ** m
    dG = G * (0.5 * r + m / r)
    cols = [np.ones_like(r)] + [r ** (-2 * k) for k in range(1, TAIL_TERMS + 1)] + [G]
    dcols = [np.zeros_like(r)] + [-2 * k * r ** (-2 * k - 1)
                                  for k in range(1, TAIL_TERMS + 1)] + [dG]
    B = np.column_stack(cols)
    dB = np.column_stack(dcols)
    # fit values and slopes together; slopes are weighted by r so both are O(1)
    A = np.vstack([B, dB * r[:, None]])
    b = np.concatenate([v, dv * r])
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    c, *_ = np.linalg.lstsq(A / scale, b, rcond=None)
    c = c / scale
    fit = TailFit(float(c[0]), tuple(float(x) for x in c[1:1 + TAIL_TERMS]),
                  float(c[-1]), 0.0, (float(lo), float(hi)))
    fit.drift = float(np.max(r * np.abs(dv - fit.v_algebraic(r, 1))))
    return fit


def tail_constant(profile: RadialProfile):
    """Tail constant ``C_alpha`` of a profile, or ``None`` when it does not converge.

    The profile must extend to at least ``r = 10``.  A profile whose samples
    stop at the overflow guard yields ``None`` and is marked ``Divergent``.
    """
    if profile.singular:
        return profile.tail_constant
    if profile.classification == TRIVIAL:
        return None
    if profile.status == 1:
        profile.classification = DIVERGENT
        return None
    if profile.r_end < 10.0:
        raise InvalidParameter("tail_constant needs samples out to r >= 10")
    fit = fit_tail(profile)
    if fit is None or fit.drift >= DRIFT_THRESHOLD:
        return None
    return fit.C


def sample_profile(nl, N, r, phi, dphi, alpha=float("nan")):
    """Wrap externally computed samples (used for oracles and tests)."""
    return RadialProfile(alpha, nl, int(N), np.asarray(r, float), np.asarray(phi, float),
                         np.asarray(dphi, float), None, UNDETERMINED, DEFAULT_TOL,
                         float(r[-1]), 0)


def _singular_eval(nl, N, r, deriv):
    C = nl.singular_constant(N)
    if nl.is_exponential:
        return [lambda: -2.0 * np.log(r) + C, lambda: -2.0 / r, lambda: 2.0 / r ** 2][deriv]()
    k = nl.scaling_exponent()
    return [lambda: C * r ** (-k), lambda: -k * C * r ** (-k - 1),
            lambda: k * (k + 1) * C * r ** (-k - 2)][deriv]()


def singular_profile(nl: Nonlinearity, N: int, r_min=1e-2, r_max=DEFAULT_R_MAX,
                     n=801) -> RadialProfile:
    """Closed-form singular steady profile, sampled on a log-spaced grid.

    ``-2 log r + log(2(N-2))`` for the exponential and ``L r^(-2/(p-1))`` for
    the power nonlinearity.
    """
    if nl.is_exponential and N <= 2:
        raise InvalidParameter("singular exponential profile needs N >= 3 (2(N-2) <= 0)")
    C = nl.singular_constant(N)
    r = np.geomspace(r_min, r_max, n)
    prof = RadialProfile(float("nan"), nl, int(N), r, _singular_eval(nl, N, r, 0),
                         _singular_eval(nl, N, r, 1), C, TAIL_CONVERGENT,
                         0.0, r_max, 0, "closed form", None, True)
    prof.tail_fit = TailFit(C, (0.0,) * TAIL_TERMS, 0.0, 0.0, (r_min, r_max))
    return prof


# ---------------------------------------------------------------------------
# alpha scan


@dataclass
class ScanResult:
    candidates: list
    brackets: list
    rejected: list
    diagnostic: str = ""

    def pairs(self):
        return [(c.alpha, c.tail_constant) for c in self.candidates]


DEFECT_RADIUS = 4.0
REFINE_RADII = (6.0, 8.0, 10.0)
DEPARTURE = 0.5
DETECT_FROM = 2.0


def defect(alpha, nl, N, r_m=DEFECT_RADIUS, tol=DEFAULT_TOL):
    """Signed departure of a shot from the algebraic tail.

    The corrected drift ``d(r) = r v' + 2 a1(v)/r^2`` is inspected at the
    integrator knots in ``[2, r_m]``; the sign of the first value exceeding
    0.5 in magnitude is returned, else ``d(r_m)``.  A shot stopped by the
    guard before any departure is recorded counts as ``-inf``.
    """
    r, phi, dphi, status = _raw_shot(alpha, nl, N, r_m, tol)
    sel = r >= DETECT_FROM
    if not np.any(sel):
        return -math.inf
    with np.errstate(over="ignore", invalid="ignore"):
        d = _corrected_drift(nl, N, r[sel], phi[sel], dphi[sel])
    big = np.nonzero(~(np.abs(d) <= DEPARTURE))[0]
    if big.size:
        val = d[big[0]]
        return val if np.isfinite(val) else -math.inf
    if status != 0:
        return -math.inf
    return float(d[-1])


def _bisect(f, a, b, fa, fb, xtol):
    while b - a > xtol * max(1.0, abs(a)):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)


def refine_root(nl, N, a, b, tol=DEFAULT_TOL, radii=(DEFECT_RADIUS,) + REFINE_RADII,
                xtol=1e-15):
    """Bisect a defect sign change, then re-bracket at growing radii."""
    alpha = None
    for rm in radii:
        f = lambda x, rm=rm: defect(x, nl, N, rm, tol)  # noqa: E731
        if alpha is None:
            lo, hi = a, b
        else:
            w = 1e-9 * max(1.0, abs(alpha))
            while np.sign(f(alpha - w)) == np.sign(f(alpha + w)) and w < 0.2:
                w *= 4.0
            lo, hi = alpha - w, alpha + w
        flo, fhi = f(lo), f(hi)
        if np.sign(flo) == np.sign(fhi):
            return None
        alpha = _bisect(f, lo, hi, flo, fhi, xtol)
    return alpha


def scan_alphas(nl: Nonlinearity, N: int, alpha_range=(0.0, 20.0), grid=200,
                tol=DEFAULT_TOL, r_tail=None) -> ScanResult:
    """Search ``alpha_range`` for profiles with a convergent algebraic tail.

    The defect is sampled at ``lo + (hi - lo) j/grid`` for ``j = 1..grid``
    (the range is open at its left end).  Each sign change is refined with
    :func:`refine_root`; the refined shot is integrated to ``r_tail``
    (default: the last refinement radius) and kept only when its tail fit
    converges.  The list is a set of candidates, not a complete enumeration.
    """
    lo, hi = map(float, alpha_range)
    if not (0 <= lo < hi):
        raise InvalidParameter("alpha_range must satisfy 0 <= lo < hi")
    if int(grid) < 2:
        raise InvalidParameter("grid must be >= 2")
    grid = int(grid)
    r_tail = REFINE_RADII[-1] if r_tail is None else r_tail
    alphas = lo + (hi - lo) * np.arange(1, grid + 1) / grid
    d = np.array([defect(a, nl, N, DEFECT_RADIUS, tol) for a in alphas])
    brackets = [(float(alphas[i]), float(alphas[i + 1])) for i in range(grid - 1)
                if np.sign(d[i]) != np.sign(d[i + 1])]
    cands, rejected = [], []
    for a, b in brackets:
        al = refine_root(nl, N, a, b, tol)
        if al is None:
            rejected.append((a, b, "bracket lost during refinement"))
            continue
        prof = shoot_profile(al, nl, N, r_max=r_tail, tol=tol)
        if prof.classification == TAIL_CONVERGENT:
            cands.append(prof)
        else:
            rejected.append((a, b, prof.diagnostic or prof.classification))
    diag = ""
    if not cands:
        diag = "no tail-convergent candidates" if brackets else "no defect sign changes"
    return ScanResult(cands, brackets, rejected, diag)
