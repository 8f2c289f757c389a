"""The compiled and pure-Python backends must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from blowup_lab import kernels
from blowup_lab.core_model import Nonlinearity
from blowup_lab.evolve import radial_operator, uniform_grid
from blowup_lab.mehler import Z_SPLIT, _angular_rules
from blowup_lab.profile import _taylor_start

BACKENDS = kernels.backends()
needs_both = pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled kernels not built")


def _pair(fn):
    return fn(BACKENDS["python"]), fn(BACKENDS["compiled"])


@needs_both
def test_thomas_agrees(rng):
    n = 257
    a, c = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    b = 2.5 + rng.uniform(0, 1, n)
    d = rng.normal(size=n)
    x_py, x_c = _pair(lambda k: k.thomas(a, b, c, d))
    assert np.max(np.abs(np.asarray(x_py) - np.asarray(x_c))) < 1e-13
    # and it really solves the system
    A = np.diag(b) + np.diag(a[1:], -1) + np.diag(c[:-1], 1)
    assert np.max(np.abs(A @ np.asarray(x_c) - d)) < 1e-12


@needs_both
@pytest.mark.parametrize("kind,p", [(0, 0.0), (1, 3.0)])
def test_imex_step_agrees(kind, p):
    r = uniform_grid(1.0, 512)
    lo, di, up = radial_operator(r, 3)
    u = 4.0 * (1 - r ** 2)
    a, b = _pair(lambda k: np.asarray(k.imex_step(u, lo, di, up, 1e-4, kind, p, 0.0)))
    assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(a))


@needs_both
def test_linearly_implicit_step_agrees():
    y = np.linspace(0, 10, 401)
    lo, di, up = radial_operator(y, 3, drift=0.5)
    w = 0.5 * np.exp(-y ** 2)
    a, b = _pair(lambda k: np.asarray(k.linearly_implicit_step(w, lo, di, up, 1e-3, 0.0)))
    assert np.max(np.abs(a - b)) < 1e-13


@needs_both
def test_angular_weight_agrees():
    nu, tiers, lx, lw = _angular_rules(5)
    _, jx, jw = tiers[-1]
    z = np.linspace(0, 60, 301)
    a, b = _pair(lambda k: np.asarray(k.angular_weight(z, nu, jx, jw, lx, lw, Z_SPLIT)))
    assert np.max(np.abs(a - b) / np.abs(a)) < 1e-13


@needs_both
def test_shooter_agrees():
    nl = Nonlinearity.exponential()
    r0, y0, dy0 = _taylor_start(nl, 3, 5.515122784578970)
    a, b = _pair(lambda k: k.shoot_dp54(r0, y0, dy0, 10.0, 3.0, 0, 0.0, 1e-11, 1e-11,
                                        0.0, 0.0, 50.0))
    assert a[3] == b[3]
    for x, y in zip(a[:3], b[:3]):
        assert np.asarray(x).shape == np.asarray(y).shape
        assert np.max(np.abs(np.asarray(x) - np.asarray(y))) < 1e-9


def test_pure_backend_is_selectable():
    env = dict(os.environ, BLOWUP_LAB_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import blowup_lab.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
