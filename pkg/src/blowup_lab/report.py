"""Structured outcome of a numerical check, shared by ``mehler`` and ``verify``."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
INAPPLICABLE = "inapplicable"


def _clean(x):
    """Make a value JSON friendly (numpy scalars, tuples, non-finite floats)."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "tolist"):
        return _clean(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


@dataclass
class VerificationReport:
    """Inputs, measured quantities, tolerances and verdict of one check.

    ``verdict`` is ``pass`` exactly when every measured quantity listed in
    ``tolerance`` is within it; checks compute the verdict through
    :meth:`decide` so that the rule is applied uniformly.
    """

    check_name: str
    inputs: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    verdict: str = INCONCLUSIVE
    notes: str = ""

    def decide(self, rules):
        """Set the verdict from ``rules = {name: (value, op, bound)}``.

        ``op`` is one of ``"<="``, ``">="``, ``"<"``, ``">"``.  All values and
        bounds are recorded.
        """
        ok = True
        for name, (value, op, bound) in rules.items():
            self.measured[name] = value
            self.tolerance[name] = [op, bound]
            if value is None or (isinstance(value, float) and math.isnan(value)):
                ok = False
            elif op == "<=":
                ok &= bool(value <= bound)
            elif op == ">=":
                ok &= bool(value >= bound)
            elif op == "<":
                ok &= bool(value < bound)
            elif op == ">":
                ok &= bool(value > bound)
            else:
                raise ValueError(f"unknown comparison {op!r}")
        self.verdict = PASS if ok else FAIL
        return self

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        d = {
            "check_name": self.check_name,
            "inputs": self.inputs,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "notes": self.notes,
        }
        # inequality checks also expose the flat lhs/rhs/margin view
        if "lhs" in self.measured:
            d["proposition"] = self.check_name
            d["parameters"] = self.inputs
            d["lhs"] = self.measured.get("lhs")
            d["rhs_or_calibration"] = self.measured.get("rhs", self.measured.get("calibration"))
            d["margin_or_ratio"] = self.measured.get("margin", self.measured.get("ratio"))
            d["tolerances"] = self.tolerance
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
