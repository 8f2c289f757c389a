# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every routine here has a line-for-line twin in ``_pykernels.py``; the two
are expected to agree to rounding.  Nothing in this file knows about
configuration or data classes, only flat float64 arrays.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, sqrt, pow, fmin, fmax

cnp.import_array()


cdef void _thomas(double[::1] a, double[::1] b, double[::1] c,
                  double[::1] d, double[::1] x, double[::1] cp,
                  double[::1] dp) noexcept nogil:
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i
    cdef double m
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]


def thomas(double[::1] a, double[::1] b, double[::1] c, double[::1] d):
    """Solve a tridiagonal system; ``a[0]`` and ``c[-1]`` are ignored."""
    cdef Py_ssize_t n = b.shape[0]
    x = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    _thomas(a, b, c, d, x, cp, dp)
    return x


cdef inline double _reaction(double u, int kind, double p) noexcept nogil:
    # kind 0: e^u, 1: u^p (sign-preserving), 2: disabled
    if kind == 0:
        return exp(u)
    elif kind == 1:
        if u >= 0.0:
            return pow(u, p)
        return -pow(-u, p)
    return 0.0


def imex_step(double[::1] u, double[::1] lo, double[::1] di, double[::1] up,
              double dt, int kind, double p, double boundary):
    """One backward-Euler diffusion / forward-Euler reaction step.

    ``lo, di, up`` hold the discrete radial Laplacian rows (the last row is
    overwritten by the Dirichlet condition).
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    a = np.empty(n)
    b = np.empty(n)
    c = np.empty(n)
    d = np.empty(n)
    cdef double[::1] av = a, bv = b, cv = c, dv = d
    for i in range(n):
        av[i] = -dt * lo[i]
        bv[i] = 1.0 - dt * di[i]
        cv[i] = -dt * up[i]
        dv[i] = u[i] + dt * _reaction(u[i], kind, p)
    av[n - 1] = 0.0
    bv[n - 1] = 1.0
    cv[n - 1] = 0.0
    dv[n - 1] = boundary
    x = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    _thomas(av, bv, cv, dv, x, cp, dp)
    return x


def linearly_implicit_step(double[::1] w, double[::1] lo, double[::1] di,
                           double[::1] up, double ds, double boundary):
    """Rosenbrock-Euler step for w_s = L w + e^w - 1 with Dirichlet end value."""
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t i
    cdef double lw, ew
    a = np.empty(n)
    b = np.empty(n)
    c = np.empty(n)
    d = np.empty(n)
    cdef double[::1] av = a, bv = b, cv = c, dv = d
    for i in range(n):
        ew = exp(w[i])
        lw = di[i] * w[i]
        if i > 0:
            lw += lo[i] * w[i - 1]
        if i < n - 1:
            lw += up[i] * w[i + 1]
        av[i] = -ds * lo[i]
        bv[i] = 1.0 - ds * (di[i] + ew)
        cv[i] = -ds * up[i]
        dv[i] = ds * (lw + ew - 1.0)
    av[n - 1] = 0.0
    bv[n - 1] = 1.0
    cv[n - 1] = 0.0
    dv[n - 1] = boundary - w[n - 1]
    x = np.empty(n)
    cp = np.empty(n)
    dp = np.empty(n)
    _thomas(av, bv, cv, dv, x, cp, dp)
    out = np.empty(n)
    cdef double[::1] ov = out, xv = x
    for i in range(n):
        ov[i] = w[i] + xv[i]
    return out


def angular_weight(double[::1] z, double nu, double[::1] jx, double[::1] jw,
                   double[::1] lx, double[::1] lw, double zsplit):
    """J(z) = int_0^pi exp(-z(1-cos t)) sin^(2nu+1) t dt for z >= 0.

    Gauss-Jacobi in cos t below ``zsplit``, generalized Gauss-Laguerre in
    u = z(1 - cos t) above it.
    """
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i, k
    cdef double s, zi, fac, q
    out = np.empty(n)
    cdef double[::1] ov = out
    for i in range(n):
        zi = z[i]
        s = 0.0
        if zi <= zsplit:
            for k in range(jx.shape[0]):
                s += jw[k] * exp(-zi * (1.0 - jx[k]))
        else:
            for k in range(lx.shape[0]):
                q = 2.0 - lx[k] / zi
                if q > 0.0:
                    if nu == 0.0:
                        fac = 1.0
                    else:
                        fac = pow(q, nu)
                    s += lw[k] * fac
            s *= pow(zi, -nu - 1.0)
        ov[i] = s
    return out


# Dormand-Prince 5(4) tableau
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187
cdef double A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247
cdef double A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192
cdef double B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920
cdef double E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline double _g(double phi, int kind, double p) noexcept nogil:
    if kind == 0:
        return expm1(phi)
    if phi >= 0.0:
        return -phi / (p - 1.0) + pow(phi, p)
    return -phi / (p - 1.0) - pow(-phi, p)


cdef inline double _acc(double r, double phi, double dphi, double N,
                        int kind, double p) noexcept nogil:
    return -((N - 1.0) / r - 0.5 * r) * dphi - _g(phi, kind, p)


def shoot_dp54(double r0, double phi0, double dphi0, double r_end, double N,
               int kind, double p, double rtol, double atol,
               double guard_scale, double guard_power, double guard_const,
               double h_max=0.02, long max_steps=2000000):
    """Adaptive Dormand-Prince integration of the radial profile equation.

    Returns ``(r, phi, dphi, status)`` with status 0 = reached ``r_end``,
    1 = overflow guard, 2 = step underflow, 3 = step budget exhausted.
    Only accepted steps are stored; the step that trips the guard is not.
    """
    cdef long cap = 1024
    rs = np.empty(cap)
    ps = np.empty(cap)
    ds = np.empty(cap)
    cdef double[::1] rv = rs, pv = ps, dv = ds
    cdef long n = 0
    cdef double r = r0, y1 = phi0, y2 = dphi0
    cdef double h, err, sc1, sc2, e1, e2, fac, bound
    cdef double k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b, k5a, k5b
    cdef double k6a, k6b, k7a, k7b, ya, yb, n1, n2
    cdef int status = 0
    cdef long steps = 0
    cdef bint rejected = False

    rv[0] = r
    pv[0] = y1
    dv[0] = y2
    n = 1
    h = fmin(1e-3, fmax(r0, 1e-12))
    k1a = y2
    k1b = _acc(r, y1, y2, N, kind, p)
    while r < r_end:
        if steps >= max_steps:
            status = 3
            break
        if h < 1e-14 * fmax(1.0, r):
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
        sc1 = atol + rtol * fmax(fabs(y1), fabs(n1))
        sc2 = atol + rtol * fmax(fabs(y2), fabs(n2))
        err = sqrt(0.5 * ((e1 / sc1) * (e1 / sc1) + (e2 / sc2) * (e2 / sc2)))
        if err != err:
            err = 1e10
        if err <= 1.0:
            bound = guard_scale * pow(r + h, -guard_power) + guard_const
            if fabs(n1) > bound or n1 != n1:
                status = 1
                break
            if r + h >= r_end:
                r = r_end
            else:
                r = r + h
            y1 = n1
            y2 = n2
            k1a = k7a
            k1b = k7b
            if n == cap:
                cap *= 2
                rs = np.resize(rs, cap)
                ps = np.resize(ps, cap)
                ds = np.resize(ds, cap)
                rv = rs
                pv = ps
                dv = ds
            rv[n] = r
            pv[n] = y1
            dv[n] = y2
            n += 1
            if err == 0.0:
                fac = 5.0
            else:
                fac = fmin(5.0, fmax(0.2, 0.9 * pow(err, -0.2)))
            if rejected:
                fac = fmin(fac, 1.0)
            rejected = False
            h = h * fac
        else:
            fac = fmax(0.2, 0.9 * pow(err, -0.2))
            h = h * fac
            rejected = True
    return rs[:n].copy(), ps[:n].copy(), ds[:n].copy(), status
