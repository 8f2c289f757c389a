"""Time the compiled kernels against their pure-Python twins.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best time of each backend and the
speed-up.  Both backends are fed identical inputs and their outputs are
compared, so the table also doubles as an agreement check.
"""

import argparse
import math
import timeit

import numpy as np

from blowup_lab import kernels
from blowup_lab.evolve import radial_operator, uniform_grid
from blowup_lab.mehler import _angular_rules, Z_SPLIT
from blowup_lab.profile import _taylor_start, INTEGRATION_TOL_FACTOR, DEFAULT_TOL
from blowup_lab.core_model import Nonlinearity


def cases():
    n = 8192
    r = uniform_grid(1.0, n)
    lo, di, up = radial_operator(r, 3)
    u = 8.0 * (1.0 - r ** 2)
    rng = np.random.default_rng(0)
    a, c = rng.uniform(-1, 0, n + 1), rng.uniform(-1, 0, n + 1)
    b = 2.5 + rng.uniform(0, 1, n + 1)
    d = rng.normal(size=n + 1)
    nu, tiers, lx, lw = _angular_rules(3)
    _, jx, jw = tiers[-1]
    z = np.linspace(0.0, 40.0, 4000)

    nl = Nonlinearity.exponential()
    r0, y0, dy0 = _taylor_start(nl, 3, 5.515122784578970)
    itol = INTEGRATION_TOL_FACTOR * DEFAULT_TOL

    return {
        "thomas (n=8193)": lambda k: k.thomas(a, b, c, d),
        "imex_step (M=8192)": lambda k: k.imex_step(u, lo, di, up, 1e-4, 0, 0.0, 0.0),
        "linearly_implicit_step": lambda k: k.linearly_implicit_step(u * 0.1, lo, di, up,
                                                                     1e-3, 0.0),
        "angular_weight (4000 z)": lambda k: k.angular_weight(z, nu, jx, jw, lx, lw, Z_SPLIT),
        "shoot_dp54 (N=3 to r=10)": lambda k: k.shoot_dp54(r0, y0, dy0, 10.0, 3.0, 0, 0.0,
                                                            itol, itol, 0.0, 0.0, 50.0),
    }


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.atleast_1d(np.asarray(o, dtype=float)) for o in out])
    return np.asarray(out, dtype=float)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.backends()
    if "compiled" not in backends:
        print("compiled kernels not built; only the Python backend is available")
    print(f"{'kernel':28s} " + " ".join(f"{b:>12s}" for b in backends) + "   speed-up  max|diff|")
    for name, fn in cases().items():
        times, outs = {}, {}
        for bname, mod in backends.items():
            outs[bname] = _flat(fn(mod))
            number = 3
            times[bname] = min(timeit.repeat(lambda: fn(mod), number=number,
                                             repeat=args.repeat)) / number
        speed = times["python"] / times["compiled"] if "compiled" in times else math.nan
        diff = float(np.max(np.abs(outs["python"] - outs["compiled"]))) \
            if "compiled" in outs and outs["python"].shape == outs["compiled"].shape else math.nan
        cols = " ".join(f"{1e3 * times[b]:10.3f}ms" for b in backends)
        print(f"{name:28s} {cols}   {speed:8.1f}x  {diff:.2e}")


if __name__ == "__main__":
    main()
