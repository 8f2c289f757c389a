"""The twelve acceptance criteria, each at its stated tolerance.

The full battery (suite ``all``) runs twice in a module fixture; the
criteria below read the first run's reports and criterion 12 compares the
two verdict tables.  The bounds are restated here rather than taken from
``blowup_lab.acceptance`` so that a loosened bound there is caught.

Run directly (``python tests/test_acceptance.py``) to print the table
without pytest.
"""

import io
import math
import operator

import pytest

from blowup_lab import harness as H
from blowup_lab.report import PASS

OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}

BOUNDS = {
    1: {"max_residual": ("<", 1e-10), "max_tail_error": ("<=", 1e-12)},
    2: {"kappa2_error": ("<=", 0.0), "kappa3_error": ("<=", 1e-9),
        "identity_error": ("<=", 1e-12)},
    3: {"mass_error": ("<", 1e-6), "eigen_decay_error": ("<", 1e-6),
        "semigroup_defect": ("<", 1e-5), "contraction_ratio": ("<=", 1.0 + 1e-8)},
    4: {"draws": (">=", 1000), "min_margin": (">=", -1e-8), "elapsed_seconds": ("<", 120.0)},
    5: {"zero_potential_gap": ("<", 1e-5), "constant_potential_gap": ("<", 1e-5),
        "growth_ratio": ("<=", 1.0 + 1e-6), "decay_rate": (">=", 0.9),
        "diagonal_trend": ("<=", 2.0)},
    6: {"n_candidates": (">=", 1), "tol_halving_dC": ("<", 1e-4),
        "missing_after_refinement": ("<=", 0)},
    7: {"spatial_order": (">=", 1.9), "temporal_order": (">=", 0.9),
        "exact_T_error": ("<=", 1e-8), "generic_r_squared": (">=", 0.999),
        "min_gradient_margin": (">=", -1e-2)},
    8: {"exp_C_error": ("<=", 0.05), "exp_oscillation": ("<=", 0.05),
        "power_oscillation": ("<=", 0.0), "power_C_error": ("<=", 0.0),
        "windows_applicable": (">=", 1)},
    9: {"inverse_C_error": ("<=", 1e-12), "trend_step_change": ("<", 0.0)},
    10: {"deviation": ("<", 1e-3)},
    11: {"mislabelled_rows": ("<=", 0)},
}

SUITE_BUDGET = 600.0   # seconds for the full battery


def run_all():
    sink = io.StringIO()
    return H.run_suite("all", out=None, stream=sink)


@pytest.fixture(scope="module")
def suite_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    first = H.run_suite("all", out=str(out / "first"), stream=io.StringIO())
    second = H.run_suite("all", out=str(out / "second"), stream=io.StringIO())
    return first, second


def check(k, rep):
    """Return a list of failed bounds for criterion ``k``."""
    bad = []
    for name, (op, bound) in BOUNDS[k].items():
        value = rep.measured.get(name)
        if value is None or (isinstance(value, float) and math.isnan(value)) \
                or not OPS[op](value, bound):
            bad.append(f"{name}={value!r} not {op} {bound!r}")
    return bad


def title(k):
    from blowup_lab.acceptance import CRITERIA
    return CRITERIA[k][0]


def line(k, name, ok, detail=""):
    return f"criterion {k:2d} {name:32s} {'PASS' if ok else 'FAIL'}  {detail}".rstrip()


@pytest.mark.parametrize("k", sorted(BOUNDS))
def test_criterion(k, suite_runs, capsys):
    first, _ = suite_runs
    rep = first.reports[k]
    bad = check(k, rep)
    ok = rep.verdict == PASS and not bad
    with capsys.disabled():
        print("\n" + line(k, title(k), ok, "; ".join(bad) or rep.notes))
    assert rep.verdict == PASS, rep.to_json()
    assert not bad, bad


def test_criterion_12_determinism(suite_runs, capsys):
    first, second = suite_runs
    same = first.table() == second.table()
    fast = max(first.wall_time, second.wall_time) < SUITE_BUDGET
    with capsys.disabled():
        print("\n" + line(12, "determinism", same and fast,
                          f"wall {first.wall_time:.0f}s / {second.wall_time:.0f}s"))
    assert same, (first.format(), second.format())
    assert fast


if __name__ == "__main__":
    a, b = run_all(), run_all()
    for k in sorted(BOUNDS):
        rep = a.reports[k]
        bad = check(k, rep)
        print(line(k, title(k), rep.verdict == PASS and not bad, "; ".join(bad)))
    print(line(12, "determinism", a.table() == b.table(),
               f"wall {a.wall_time:.0f}s / {b.wall_time:.0f}s"))
