"""Pure-Python/numpy twins of the compiled kernels in ``_ckernels.pyx``.

The array kernels lean on numpy and ``scipy.linalg.solve_banded``.  The
profile shooter is a literal transcription of the compiled loop so that
both backends take the same accepted steps.
"""

import math

import numpy as np
from scipy.linalg import solve_banded


def thomas(a, b, c, d):
    """Solve a tridiagonal system; ``a[0]`` and ``c[-1]`` are ignored."""
    n = len(b)
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    return solve_banded((1, 1), ab, np.asarray(d, dtype=float))


def _reaction(u, kind, p):
    if kind == 0:
        return np.exp(u)
    if kind == 1:
        return np.sign(u) * np.abs(u) ** p
    return np.zeros_like(u)


def imex_step(u, lo, di, up, dt, kind, p, boundary):
    a = -dt * np.asarray(lo)
    b = 1.0 - dt * np.asarray(di)
    c = -dt * np.asarray(up)
    d = u + dt * _reaction(u, kind, p)
    a[-1] = 0.0
    b[-1] = 1.0
    c[-1] = 0.0
    d[-1] = boundary
    return thomas(a, b, c, d)


def linearly_implicit_step(w, lo, di, up, ds, boundary):
    ew = np.exp(w)
    lw = di * w
    lw[1:] += lo[1:] * w[:-1]
    lw[:-1] += up[:-1] * w[1:]
    a = -ds * np.asarray(lo)
    b = 1.0 - ds * (di + ew)
    c = -ds * np.asarray(up)
    d = ds * (lw + ew - 1.0)
    a[-1] = 0.0
    b[-1] = 1.0
    c[-1] = 0.0
    d[-1] = boundary - w[-1]
    return w + thomas(a, b, c, d)


def angular_weight(z, nu, jx, jw, lx, lw, zsplit):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z <= zsplit
    if np.any(small):
        zs = z[small]
        out[small] = np.exp(-np.outer(zs, 1.0 - jx)) @ jw
    if np.any(~small):
        zl = z[~small]
        q = 2.0 - np.outer(1.0 / zl, lx)
        fac = np.where(q > 0.0, np.abs(q) ** nu if nu != 0.0 else 1.0, 0.0)
        out[~small] = (fac @ lw) * zl ** (-nu - 1.0)
    return out


C2, C3, C4, C5 = 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9
A21 = 1.0 / 5
A31, A32 = 3.0 / 40, 9.0 / 40
A41, A42, A43 = 44.0 / 45, -56.0 / 15, 32.0 / 9
A51, A52, A53, A54 = 19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729
A61, A62, A63 = 9017.0 / 3168, -355.0 / 33, 46732.0 / 5247
A64, A65 = 49.0 / 176, -5103.0 / 18656
B1, B3, B4, B5, B6 = 35.0 / 384, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84
E1, E3, E4 = 71.0 / 57600, -71.0 / 16695, 71.0 / 1920
E5, E6, E7 = -17253.0 / 339200, 22.0 / 525, -1.0 / 40


def _g(phi, kind, p):
    if kind == 0:
        return math.expm1(phi)
    if phi >= 0.0:
        return -phi / (p - 1.0) + phi ** p
    return -phi / (p - 1.0) - (-phi) ** p


def _acc(r, phi, dphi, N, kind, p):
    return -((N - 1.0) / r - 0.5 * r) * dphi - _g(phi, kind, p)


def shoot_dp54(r0, phi0, dphi0, r_end, N, kind, p, rtol, atol,
               guard_scale, guard_power, guard_const, h_max=0.02, max_steps=2000000):
    rs, ps, dps = [r0], [phi0], [dphi0]
    r, y1, y2 = r0, phi0, dphi0
    status = 0
    steps = 0
    rejected = False
    h = min(1e-3, max(r0, 1e-12))
    k1a = y2
    k1b = _acc(r, y1, y2, N, kind, p)
    while r < r_end:
        if steps >= max_steps:
            status = 3
            break
        if h < 1e-14 * max(1.0, r):
            status = 2
            break
        if h > h_max:
            h = h_max
        if r + h > r_end:
            h = r_end - r
        steps += 1
        ya = y1 + h * A21 * k1a
        yb = y2 + h * A21 * k1b
        k2a = yb
        k2b = _acc(r + C2 * h, ya, yb, N, kind, p)
        ya = y1 + h * (A31 * k1a + A32 * k2a)
        yb = y2 + h * (A31 * k1b + A32 * k2b)
        k3a = yb
        k3b = _acc(r + C3 * h, ya, yb, N, kind, p)
        ya = y1 + h * (A41 * k1a + A42 * k2a + A43 * k3a)
        yb = y2 + h * (A41 * k1b + A42 * k2b + A43 * k3b)
        k4a = yb
        k4b = _acc(r + C4 * h, ya, yb, N, kind, p)
        ya = y1 + h * (A51 * k1a + A52 * k2a + A53 * k3a + A54 * k4a)
        yb = y2 + h * (A51 * k1b + A52 * k2b + A53 * k3b + A54 * k4b)
        k5a = yb
        k5b = _acc(r + C5 * h, ya, yb, N, kind, p)
        ya = y1 + h * (A61 * k1a + A62 * k2a + A63 * k3a + A64 * k4a + A65 * k5a)
        yb = y2 + h * (A61 * k1b + A62 * k2b + A63 * k3b + A64 * k4b + A65 * k5b)
        k6a = yb
        k6b = _acc(r + h, ya, yb, N, kind, p)
        n1 = y1 + h * (B1 * k1a + B3 * k3a + B4 * k4a + B5 * k5a + B6 * k6a)
        n2 = y2 + h * (B1 * k1b + B3 * k3b + B4 * k4b + B5 * k5b + B6 * k6b)
        k7a = n2
        k7b = _acc(r + h, n1, n2, N, kind, p)
        e1 = h * (E1 * k1a + E3 * k3a + E4 * k4a + E5 * k5a + E6 * k6a + E7 * k7a)
        e2 = h * (E1 * k1b + E3 * k3b + E4 * k4b + E5 * k5b + E6 * k6b + E7 * k7b)
        sc1 = atol + rtol * max(abs(y1), abs(n1))
        sc2 = atol + rtol * max(abs(y2), abs(n2))
        err = math.sqrt(0.5 * ((e1 / sc1) * (e1 / sc1) + (e2 / sc2) * (e2 / sc2)))
        if err != err:
            err = 1e10
        if err <= 1.0:
            bound = guard_scale * (r + h) ** (-guard_power) + guard_const
            if abs(n1) > bound or n1 != n1:
                status = 1
                break
            r = r_end if r + h >= r_end else r + h
            y1, y2 = n1, n2
            k1a, k1b = k7a, k7b
            rs.append(r)
            ps.append(y1)
            dps.append(y2)
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            if rejected:
                fac = min(fac, 1.0)
            rejected = False
            h = h * fac
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
            rejected = True
    return np.array(rs), np.array(ps), np.array(dps), status
