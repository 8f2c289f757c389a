"""Command line, configuration files, artifacts and suite orchestration.

Configuration format (one ``key = value`` per line)::

    # comments start with '#'
    command = profile.shoot
    N = 3
    [profile]
    alpha = 5.515
    tol = 1e-10

General keys may appear only before the first section header.  Section keys
may appear in their own section or, for brevity, before any header.  Unknown
keys, unknown sections, duplicates and type mismatches are rejected with the
offending line number.

Every experiment writes CSV artifacts (17 significant digits), a
``reports.json`` with the verification reports and a ``manifest.json``
holding the full configuration, versions, wall time and verdicts.  The
configuration is also written as ``config.ini``, which reproduces the run
through ``blowup-lab <group> <action> -c config.ini``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels
from .core_model import DomainSpec, Nonlinearity
from .report import PASS, VerificationReport, _clean

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
OUT_ENV = "BLOWUP_LAB_OUT"
DEFAULT_OUT_ROOT = "blowup_lab_out"


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header, array):
    """Write a numeric table with a one-line header, 17 significant digits."""
    arr = np.asarray(array, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    np.savetxt(path, arr, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def read_csv(path):
    """Return ``(header, array)`` of a file written by :func:`write_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, arr


# ---------------------------------------------------------------------------
# configuration


class ConfigError(ValueError):
    """Configuration text that cannot be turned into an ExperimentConfig."""


class UsageError(ValueError):
    """Bad command-line usage (unknown suite, unknown command)."""


COMMANDS = (
    "profile.shoot", "profile.scan", "profile.singular",
    "semigroup.norm", "semigroup.mehler", "semigroup.check",
    "evolve.run", "evolve.wframe",
    "verify.convergence", "verify.theorem2", "verify.theorem4", "verify.loglog",
    "verify.classify", "verify.refined",
)
VERIFYING = {"semigroup.check", "evolve.wframe"} | {c for c in COMMANDS if c.startswith("verify.")}

GENERAL = "general"
SECTIONS = (GENERAL, "profile", "semigroup", "evolve", "verify")


@dataclass(frozen=True)
class Key:
    section: str
    kind: str                   # int | float | str | floats | choice
    default: object = None
    positive: bool = False
    minimum: float | None = None
    choices: tuple = ()


SCHEMA = {
    # general
    "command": Key(GENERAL, "choice", None, choices=COMMANDS),
    "nonlinearity": Key(GENERAL, "choice", "exp", choices=("exp", "power")),
    "p": Key(GENERAL, "float", None),
    "N": Key(GENERAL, "int", 3, minimum=1),
    "R": Key(GENERAL, "float", 1.0, positive=True),
    "output": Key(GENERAL, "str", ""),
    "workers": Key(GENERAL, "int", 1, minimum=1),
    "seed": Key(GENERAL, "int", 1234, minimum=0),
    # profile
    "alpha": Key("profile", "float", 0.0, minimum=0.0),
    "r_max": Key("profile", "float", 40.0, positive=True),
    "tol": Key("profile", "float", 1e-10, positive=True),
    "alpha_lo": Key("profile", "float", 0.0, minimum=0.0),
    "alpha_hi": Key("profile", "float", 20.0, positive=True),
    "scan_grid": Key("profile", "int", 200, minimum=2),
    "r_min": Key("profile", "float", 1e-2, positive=True),
    "samples": Key("profile", "int", 801, minimum=2),
    # semigroup
    "t": Key("semigroup", "float", 1.0, positive=True),
    "q": Key("semigroup", "float", 2.0, positive=True),
    "beta": Key("semigroup", "float", 2.0, positive=True),
    "xi": Key("semigroup", "float", 0.0, minimum=0.0),
    "radius": Key("semigroup", "float", 0.0, minimum=0.0),
    "r": Key("semigroup", "float", 1.0, minimum=0.0),
    "r_tilde": Key("semigroup", "float", 1.0, minimum=0.0),
    "psi": Key("semigroup", "choice", "bump", choices=("bump", "one")),
    "potential": Key("semigroup", "choice", "zero", choices=("zero", "constant", "singular")),
    "Gamma": Key("semigroup", "float", 1.0),
    "draws": Key("semigroup", "int", 1000, minimum=1),
    "lambda_h": Key("semigroup", "float", 5e-3, positive=True),
    "lambda_dt": Key("semigroup", "float", 5e-4, positive=True),
    "margin_tol": Key("semigroup", "float", 1e-8, positive=True),
    "growth_tol": Key("semigroup", "float", 1e-6, positive=True),
    # evolve
    "M": Key("evolve", "int", 2048, minimum=8),
    "amplitude": Key("evolve", "float", 8.0, positive=True),
    "t_max": Key("evolve", "float", 1.0, positive=True),
    "dt_max": Key("evolve", "float", 1e-3, positive=True),
    "c_safety": Key("evolve", "float", 0.1, positive=True),
    "cap": Key("evolve", "float", None, positive=True),
    "snapshot_levels": Key("evolve", "floats", (10.0, 11.0, 12.0, 13.0, 14.0)),
    "Y": Key("evolve", "float", 10.0, positive=True),
    "s_span": Key("evolve", "float", 1.0, positive=True),
    "wframe_n": Key("evolve", "int", 8001, minimum=3),
    "ds": Key("evolve", "float", 1e-3, positive=True),
    "tol_stationary": Key("evolve", "float", 1e-3, positive=True),
    # verify
    "input": Key("verify", "str", ""),
    "source": Key("verify", "choice", "exact", choices=("exact", "generic")),
    "Y_conv": Key("verify", "float", 3.0, positive=True),
    "tol_conv": Key("verify", "float", 1e-3, positive=True),
    "tau_f": Key("verify", "float", 1e-8, positive=True),
    "window_lo": Key("verify", "float", 1e-3, positive=True),
    "window_hi": Key("verify", "float", 0.1, positive=True),
    "tol_prof": Key("verify", "float", 0.05, positive=True),
    "a": Key("verify", "float", 0.04, positive=True),
    "halvings": Key("verify", "int", 3, minimum=1),
    "xi_lo": Key("verify", "float", 0.1, positive=True),
    "xi_hi": Key("verify", "float", 1.0, positive=True),
    "tol_fit": Key("verify", "float", 0.05, positive=True),
    "ell": Key("verify", "float", 2.0),
}


@dataclass
class ExperimentConfig:
    """Validated configuration; every section dictionary holds all its keys."""

    command: str
    nonlinearity: str = "exp"
    p: float | None = None
    N: int = 3
    R: float = 1.0
    output: str = ""
    workers: int = 1
    seed: int = 1234
    profile: dict = field(default_factory=dict)
    semigroup: dict = field(default_factory=dict)
    evolve: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)

    def __getitem__(self, key):
        sec = SCHEMA[key].section
        return getattr(self, key) if sec == GENERAL else getattr(self, sec)[key]

    @property
    def nl(self) -> Nonlinearity:
        return Nonlinearity.exponential() if self.nonlinearity == "exp" \
            else Nonlinearity.power(self.p)

    @property
    def domain(self) -> DomainSpec:
        return DomainSpec(self.N, self.R)

    def values(self) -> dict:
        """Flat ``{key: value}`` of every key."""
        return {k: self[k] for k in SCHEMA}


def _convert(key, raw, where):
    spec = SCHEMA[key]
    if spec.kind == "str":
        return raw
    if spec.kind == "choice":
        if raw not in spec.choices:
            raise ConfigError(f"{where}: {key} must be one of {', '.join(spec.choices)}")
        return raw
    if spec.kind == "int":
        try:
            val = int(raw)
        except ValueError:
            raise ConfigError(f"{where}: {key} must be integer") from None
    elif spec.kind == "float":
        try:
            val = float(raw)
        except ValueError:
            raise ConfigError(f"{where}: {key} must be a number") from None
        if not math.isfinite(val):
            raise ConfigError(f"{where}: {key} must be finite")
    else:  # floats
        try:
            val = tuple(float(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"{where}: {key} must be a comma-separated list of numbers") \
                from None
        return val
    if spec.positive and not val > 0:
        raise ConfigError(f"{where}: {key} must be positive")
    if spec.minimum is not None and val < spec.minimum:
        raise ConfigError(f"{where}: {key} must be >= {spec.minimum:g}")
    return val


def _collect(text, origin="line", into=None, allow_override=False):
    """Parse lines into ``{key: (value, where)}``."""
    out = {} if into is None else into
    seen = set()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        where = f"{origin} {lineno}"
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"{where}: malformed section header")
            section = body[1:-1].strip()
            if section not in SECTIONS or section == GENERAL:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in body:
            raise ConfigError(f"{where}: expected key = value")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        home = SCHEMA[key].section
        if section is not None and home != section:
            raise ConfigError(f"{where}: key {key!r} belongs to "
                              f"{'the top' if home == GENERAL else '[' + home + ']'}, "
                              f"not [{section}]")
        if key in seen or (key in out and not allow_override):
            raise ConfigError(f"{where}: duplicate key {key!r}")
        seen.add(key)
        out[key] = (_convert(key, raw, where), where)
    return out


def _build(entries) -> ExperimentConfig:
    if "command" not in entries:
        raise ConfigError("missing required key 'command'")
    vals = {k: (entries[k][0] if k in entries else spec.default) for k, spec in SCHEMA.items()}
    if vals["nonlinearity"] == "power":
        if vals["p"] is None:
            raise ConfigError("missing required key 'p' (nonlinearity = power)")
        if not vals["p"] > 1:
            raise ConfigError(f"{entries['p'][1]}: p must exceed 1")
    elif "p" in entries:
        raise ConfigError(f"{entries['p'][1]}: p only applies to nonlinearity = power")
    if vals["alpha_hi"] <= vals["alpha_lo"]:
        raise ConfigError("alpha_hi must exceed alpha_lo")
    if vals["window_hi"] <= vals["window_lo"]:
        raise ConfigError("window_hi must exceed window_lo")
    if vals["xi_hi"] <= vals["xi_lo"]:
        raise ConfigError("xi_hi must exceed xi_lo")
    general = {k: vals[k] for k, s in SCHEMA.items() if s.section == GENERAL}
    sections = {sec: {k: vals[k] for k, s in SCHEMA.items() if s.section == sec}
                for sec in SECTIONS if sec != GENERAL}
    return ExperimentConfig(**general, **sections)


def parse_config(text, overrides=()) -> ExperimentConfig:
    """Parse the ``key = value`` format; ``overrides`` are extra ``key=value`` strings
    applied afterwards (their errors name ``--set N``)."""
    entries = _collect(text)
    if overrides:
        _collect("\n".join(overrides), "--set", entries, allow_override=True)
    return _build(entries)


def _fmt(spec, value):
    if spec.kind == "float":
        return repr(float(value))
    if spec.kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def serialize(cfg: ExperimentConfig) -> str:
    """Text that :func:`parse_config` turns back into an equal config."""
    lines = []
    for sec in SECTIONS:
        if sec != GENERAL:
            lines.append(f"\n[{sec}]")
        for key, spec in SCHEMA.items():
            if spec.section != sec:
                continue
            val = cfg[key]
            if val is None:
                continue
            lines.append(f"{key} = {_fmt(spec, val)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# experiments


@dataclass
class Outcome:
    reports: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _out_root():
    return os.environ.get(OUT_ENV) or DEFAULT_OUT_ROOT


def output_dir(cfg: ExperimentConfig) -> str:
    """``output`` when set, else ``$BLOWUP_LAB_OUT/<command>``."""
    return cfg.output or os.path.join(_out_root(), cfg.command)


def _ensure_writable(path):
    try:
        os.makedirs(path, exist_ok=True)
        with tempfile.TemporaryFile(dir=path):
            pass
    except OSError:
        return False
    return True


def versions():
    import scipy
    return {"blowup_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": kernels.BACKEND}


class _Artifacts:
    def __init__(self, root, outcome):
        self.root, self.outcome = root, outcome

    def path(self, name):
        self.outcome.artifacts.append(name)
        return os.path.join(self.root, name)

    def csv(self, name, header, array):
        write_csv(self.path(name), header, array)


def _profile_for(cfg, r_max=10.0):
    from .profile import shoot_profile
    return shoot_profile(cfg["alpha"], cfg.nl, cfg.N, r_max=r_max, tol=cfg["tol"])


def _psi(cfg):
    from .mehler import WeightedField, random_bump_field
    if cfg["psi"] == "one":
        return WeightedField.constant(1.0, cfg.N)
    return random_bump_field(np.random.default_rng(cfg.seed), cfg.N)


def _potential(cfg):
    from .mehler import PotentialField
    kind = cfg["potential"]
    if kind == "zero":
        return PotentialField.constant(0.0, cfg.N)
    if kind == "constant":
        return PotentialField.constant(cfg["Gamma"], cfg.N)
    return PotentialField.singular_profile(cfg.N)


def _generic_run(cfg):
    from .evolve import fit_blowup, run_until_blowup
    amp = cfg["amplitude"]
    R = cfg.R
    trace, final = run_until_blowup(lambda r: amp * (1.0 - (r / R) ** 2), cfg.nl, cfg.domain,
                                    M=cfg["M"], cap=cfg["cap"], t_max=cfg["t_max"],
                                    dt_max=cfg["dt_max"], c_safety=cfg["c_safety"],
                                    snapshot_levels=cfg["snapshot_levels"])
    return trace, final, fit_blowup(trace, cfg.nl)


def _load_state(path, N):
    from .evolve import EvolutionState
    _, arr = read_csv(path)
    return EvolutionState(arr[:, 0], arr[:, 1], N=N)


def _run_profile_shoot(cfg, art, out):
    from .profile import shoot_profile
    prof = shoot_profile(cfg["alpha"], cfg.nl, cfg.N, r_max=cfg["r_max"], tol=cfg["tol"])
    prof.save(os.path.join(art.root, "profile"))
    out.artifacts += ["profile.csv", "profile.json"]
    out.summary.update(classification=prof.classification, tail_constant=prof.tail_constant,
                       max_residual=prof.max_residual())


def _run_profile_scan(cfg, art, out):
    from .profile import scan_alphas
    res = scan_alphas(cfg.nl, cfg.N, (cfg["alpha_lo"], cfg["alpha_hi"]), cfg["scan_grid"],
                      cfg["tol"])
    rows = [[c.alpha, c.tail_constant, c.max_residual()] for c in res.candidates]
    art.csv("candidates.csv", ["alpha", "tail_constant", "max_residual"],
            np.array(rows).reshape(-1, 3))
    art.csv("brackets.csv", ["alpha_lo", "alpha_hi"], np.array(res.brackets).reshape(-1, 2))
    for k, cand in enumerate(res.candidates):
        cand.to_csv(art.path(f"candidate_{k}.csv"))
    out.summary.update(candidates=res.pairs(), rejected=res.rejected, diagnostic=res.diagnostic)


def _run_profile_singular(cfg, art, out):
    from .profile import singular_profile
    prof = singular_profile(cfg.nl, cfg.N, cfg["r_min"], cfg["r_max"], cfg["samples"])
    prof.to_csv(art.path("singular.csv"))
    out.summary.update(tail_constant=prof.tail_constant)


def _run_semigroup_norm(cfg, art, out):
    from .mehler import NormSpec, norm, shifted_norm
    psi = _psi(cfg)
    spec = NormSpec(cfg["q"], radius=cfg["radius"]) if cfg["radius"] > 0 \
        else NormSpec(cfg["q"], xi=cfg["xi"])
    value = norm(psi, spec)
    xs = np.linspace(0.0, max(2.0, 2.0 * max(cfg["xi"], cfg["radius"])), 33)
    art.csv("shifted_norm.csv", ["xi", "norm"], np.column_stack([xs, shifted_norm(psi, cfg["q"], xs)]))
    out.summary.update(norm=value)


def _run_semigroup_mehler(cfg, art, out):
    from .mehler import lambda_apply, mehler_apply
    psi = _psi(cfg)
    t = cfg["t"]
    radii = np.linspace(0.0, 12.0, 241)
    cols = [radii, psi(radii), mehler_apply(psi, t, radii).values]
    header = ["r", "psi", "mehler"]
    if cfg["potential"] != "zero":
        lam = lambda_apply(psi, _potential(cfg), t, h=cfg["lambda_h"], dt=cfg["lambda_dt"])
        cols.append(lam(radii))
        header.append("lambda")
    art.csv("semigroup.csv", header, np.column_stack(cols))


def _run_semigroup_check(cfg, art, out):
    from .acceptance import HERMITE_COLUMNS, hermite_sweep
    from .mehler import check_lambda_growth, check_potential_decay
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = hermite_sweep(cfg.seed, cfg["draws"], pool)
    else:
        rows = hermite_sweep(cfg.seed, cfg["draws"])
    art.csv("hermite_draws.csv", HERMITE_COLUMNS, rows)
    herm = VerificationReport("hermite_sweep", {"seed": cfg.seed, "draws": cfg["draws"]})
    herm.decide({"min_margin": (float(min(r[-1] for r in rows)), ">=", -cfg["margin_tol"])})
    out.reports.append(herm)
    pot = _potential(cfg)
    out.reports.append(check_lambda_growth(_psi(cfg), pot, cfg["t"], tol=cfg["growth_tol"],
                                           h=cfg["lambda_h"], dt=cfg["lambda_dt"]))
    if cfg["potential"] == "singular":
        out.reports.append(check_potential_decay(pot, 2.0, 1.0, range(2, 9)))


def _run_evolve_run(cfg, art, out):
    trace, final, fit = _generic_run(cfg)
    trace.to_csv(art.path("trace.csv"))
    final.to_csv(art.path("final.csv"))
    for level, st in trace.snapshots:
        st.to_csv(art.path(f"snapshot_{level:g}.csv"))
    out.summary.update(stop_reason=trace.stop_reason, steps=len(trace.times) - 1,
                       fit=fit.to_dict(), diagnostic=trace.diagnostic)


def _run_evolve_wframe(cfg, art, out):
    from .evolve import w_deviation, w_frame_evolve
    Y = cfg["Y"]
    prof = _profile_for(cfg, r_max=max(10.0, Y))
    bv = float(prof.evaluate(np.array([Y]))[0])
    res = w_frame_evolve(prof, cfg.nl, Y, cfg["s_span"], bv, n=cfg["wframe_n"], ds=cfg["ds"])
    dev = w_deviation(res, prof, Y / 2.0)
    art.csv("deviation.csv", ["s", "deviation"], np.column_stack([res.s, dev]))
    art.csv("w_final.csv", ["y", "w", "phi"], np.column_stack([res.y, res.final, prof.evaluate(res.y)]))
    rep = VerificationReport("wframe_stationarity", {"alpha": cfg["alpha"], "N": cfg.N, "Y": Y,
                                                     "classification": prof.classification})
    rep.decide({"deviation": (float(np.max(dev)) if res.status == "ok" else math.inf,
                              "<", cfg["tol_stationary"])})
    if res.status != "ok":
        rep.notes = res.diagnostic
    out.reports.append(rep)


def _exact_snapshots(cfg, prof, taus=(1e-2, 5e-3, 2e-3, 1e-3)):
    from .evolve import exact_selfsimilar, similarity_grid
    return [exact_selfsimilar(prof, 1.0, None, similarity_grid(tau, cfg.R, prof.r_end), tau=tau)
            for tau in taus]


def _run_verify_convergence(cfg, art, out):
    from .profile import shoot_profile
    from .verify import similarity_convergence
    if cfg["source"] == "exact":
        prof = _profile_for(cfg)
        rep = similarity_convergence(_exact_snapshots(cfg, prof), prof, cfg["Y_conv"], 1.0,
                                     tol_conv=cfg["tol_conv"])
    else:
        trace, _, fit = _generic_run(cfg)
        prof = shoot_profile(0.0, cfg.nl, cfg.N, r_max=10.0)
        rep = similarity_convergence(trace.snapshots, prof, cfg["Y_conv"], fit.T,
                                     tol_conv=cfg["tol_conv"], trend_only=True)
    d, s = rep.measured.get("d", []), rep.measured.get("s", [])
    art.csv("distance.csv", ["s", "d"], np.column_stack([s, d]).reshape(-1, 2))
    out.reports.append(rep)


def _window(cfg):
    return (cfg["window_lo"], cfg["window_hi"])


def _g_csv(art, name, state, window, g_fn):
    sel = (state.grid >= window[0]) & (state.grid <= window[1])
    x = state.grid[sel]
    art.csv(name, ["x", "g"], np.column_stack([x, g_fn(x, state.u[sel])]))


def _run_verify_theorem2(cfg, art, out):
    from .evolve import exact_selfsimilar
    from .verify import _profile_g, final_profile
    tau_f = cfg["tau_f"]
    if cfg["input"]:
        state = _load_state(cfg["input"], cfg.N)
        ref = None
    else:
        prof = _profile_for(cfg)
        grid = np.concatenate([[0.0], np.geomspace(1e-6 * cfg.R, cfg.R, 4001)])
        state = exact_selfsimilar(prof, 1.0, None, grid, tau=tau_f)
        ref = prof.tail_constant
    C, osc, rep = final_profile(state, cfg.nl, _window(cfg), tau_f=tau_f, reference_C=ref,
                                tol_prof=cfg["tol_prof"], R=cfg.R)
    _g_csv(art, "g.csv", state, _window(cfg), lambda x, u: _profile_g(cfg.nl, x, u))
    out.reports.append(rep)


def _dyadic_state(cfg, u_of_x):
    from .acceptance import dyadic_grid
    from .verify import synthetic_state
    x = dyadic_grid() * cfg.R
    return synthetic_state(x, u_of_x(x), N=cfg.N)


def _run_verify_theorem4(cfg, art, out):
    from .verify import _profile_g, final_profile
    nl = cfg.nl
    if nl.is_exponential:
        raise ConfigError("verify.theorem4 needs nonlinearity = power")
    L = nl.singular_constant(cfg.N)
    if cfg["input"]:
        state = _load_state(cfg["input"], cfg.N)
    else:
        state = _dyadic_state(cfg, lambda x: L * x ** (-2.0 / (nl.p - 1.0)))
    C, osc, rep = final_profile(state, nl, _window(cfg), tau_f=cfg["tau_f"], reference_C=L,
                                tol_prof=cfg["tol_prof"], R=cfg.R)
    _g_csv(art, "g.csv", state, _window(cfg), lambda x, u: _profile_g(nl, x, u))
    out.reports.append(rep)


def _run_verify_loglog(cfg, art, out):
    from .verify import loglog_g, loglog_profile_check, loglog_trend
    if cfg["input"]:
        final = _load_state(cfg["input"], cfg.N)
        tau_f = None
    else:
        _, final, fit = _generic_run(cfg)
        tau_f = fit.T - final.t
    trend = loglog_trend(final, cfg["a"], cfg["halvings"], tau_f=tau_f, R=cfg.R)
    _, _, prof = loglog_profile_check(final, _window(cfg), tau_f=tau_f, tol_prof=cfg["tol_prof"],
                                      R=cfg.R)
    sel = (final.grid >= cfg["a"] / 2 ** cfg["halvings"]) & (final.grid <= 2 * cfg["a"])
    x = final.grid[sel]
    u = final.u[sel]
    art.csv("loglog_g.csv", ["x", "g_plus", "g_minus"],
            np.column_stack([x, loglog_g(x, u, 1.0), loglog_g(x, u, -1.0)]))
    # only the oscillation trend decides; the absolute fit is recorded for inspection
    out.reports.append(trend)
    out.summary["loglog_profile"] = prof.to_dict()


def _run_verify_classify(cfg, art, out):
    from .verify import mm_classify
    if cfg.nl.is_exponential:
        raise ConfigError("verify.classify needs nonlinearity = power")
    p = cfg.nl.p
    if cfg["input"]:
        state = _load_state(cfg["input"], cfg.N)
    else:
        L = cfg.nl.singular_constant(cfg.N)
        state = _dyadic_state(cfg, lambda x: cfg["ell"] * L * x ** (-2.0 / (p - 1.0)))
    label, rep = mm_classify(state, p, cfg.N, _window(cfg), tau_f=cfg["tau_f"], R=cfg.R)
    out.summary["label"] = label
    out.reports.append(rep)


def _run_verify_refined(cfg, art, out):
    from .verify import refined_profile_fit
    trace, _, fit = _generic_run(cfg)
    snaps = [st for _, st in trace.snapshots[-3:]]
    m, c, rep = refined_profile_fit(snaps, fit.T, (cfg["xi_lo"], cfg["xi_hi"]),
                                    tol_fit=cfg["tol_fit"])
    out.summary.update(m=m, c=c, T=fit.T)
    out.reports.append(rep)


HANDLERS = {
    "profile.shoot": _run_profile_shoot,
    "profile.scan": _run_profile_scan,
    "profile.singular": _run_profile_singular,
    "semigroup.norm": _run_semigroup_norm,
    "semigroup.mehler": _run_semigroup_mehler,
    "semigroup.check": _run_semigroup_check,
    "evolve.run": _run_evolve_run,
    "evolve.wframe": _run_evolve_wframe,
    "verify.convergence": _run_verify_convergence,
    "verify.theorem2": _run_verify_theorem2,
    "verify.theorem4": _run_verify_theorem4,
    "verify.loglog": _run_verify_loglog,
    "verify.classify": _run_verify_classify,
    "verify.refined": _run_verify_refined,
}


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _error(code, message, kind, out_dir=None, stream=None):
    err = {"error": message, "kind": kind, "exit_code": code}
    if out_dir is not None:
        try:
            _dump(os.path.join(out_dir, "error.json"), err)
        except OSError:
            pass
    print(json.dumps(err, sort_keys=True), file=stream or sys.stdout)
    return err


def run_experiment(cfg: ExperimentConfig):
    """Run one configured command; return ``(exit_code, manifest)``.

    Artifacts go to :func:`output_dir`.  Failures to write the output and
    exceptions raised by the modules produce an ``error.json`` (also printed)
    and exit code 3; configuration problems found while running exit with 2.
    """
    out_dir = output_dir(cfg)
    if not _ensure_writable(out_dir):
        err = _error(EXIT_RUNTIME, "output not writable", "OSError")
        err["output"] = out_dir
        return EXIT_RUNTIME, err
    outcome = Outcome()
    art = _Artifacts(out_dir, outcome)
    t0 = time.perf_counter()
    try:
        HANDLERS[cfg.command](cfg, art, outcome)
    except ConfigError as exc:
        return EXIT_USAGE, _error(EXIT_USAGE, str(exc), "ConfigError", out_dir)
    except Exception as exc:  # noqa: BLE001 - every module error maps to exit 3
        return EXIT_RUNTIME, _error(EXIT_RUNTIME, str(exc), type(exc).__name__, out_dir)
    wall = time.perf_counter() - t0
    verifying = cfg.command in VERIFYING
    verdicts = {r.check_name: r.verdict for r in outcome.reports}
    passed = all(v == PASS for v in verdicts.values())
    code = EXIT_PASS if (passed or not verifying) else EXIT_FAIL
    with open(art.path("config.ini"), "w") as fh:
        fh.write(serialize(cfg))
    _dump(art.path("reports.json"), [r.to_dict() for r in outcome.reports])
    manifest = {"command": cfg.command, "config": cfg.values(), "config_text": serialize(cfg),
                "versions": versions(), "seed": cfg.seed, "wall_time_seconds": wall,
                "verifying": verifying, "verdicts": verdicts, "summary": outcome.summary,
                "artifacts": sorted(outcome.artifacts + ["manifest.json"]), "exit_code": code}
    _dump(os.path.join(out_dir, "manifest.json"), manifest)
    return code, manifest


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteSummary:
    name: str
    rows: list                   # (criterion, title, verdict)
    reports: dict
    wall_time: float
    exit_code: int

    def table(self):
        """The verdict table: criterion number, title and verdict only."""
        return [tuple(r) for r in self.rows]

    def format(self):
        width = max(len(t) for _, t, _ in self.rows)
        lines = [f"C{k:<3d} {t:<{width}s}  {v}" for k, t, v in self.rows]
        return "\n".join(lines)


def _criterion_task(k, seed, draws):
    from .acceptance import Context
    return _run_criterion(k, Context(seed, draws))


def _run_criterion(k, ctx):
    from .acceptance import CRITERIA
    try:
        rep = CRITERIA[k][1](ctx)
    except Exception as exc:  # noqa: BLE001 - a crash is recorded and the suite goes on
        rep = VerificationReport(f"C{k}", verdict="error", notes=f"{type(exc).__name__}: {exc}")
    return k, rep


def run_suite(name, out=None, workers=1, seed=None, draws=None, stream=None):
    """Run the acceptance criteria of suite ``name`` and print the verdict table.

    Criteria run in a process pool when ``workers > 1``; results are sorted by
    criterion before writing, so the table does not depend on completion order.
    """
    from .acceptance import HERMITE_DRAWS, SEED, SUITES, Context, CRITERIA
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    seed = SEED if seed is None else seed
    draws = HERMITE_DRAWS if draws is None else draws
    ids = SUITES[name]
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = list(pool.map(_criterion_task, ids, [seed] * len(ids), [draws] * len(ids)))
    else:
        ctx = Context(seed, draws)
        done = [_run_criterion(k, ctx) for k in ids]
    done.sort(key=lambda kr: kr[0])
    wall = time.perf_counter() - t0
    rows = [(k, CRITERIA[k][0], rep.verdict) for k, rep in done]
    crashed = any(v == "error" for _, _, v in rows)
    failed = any(v != PASS for _, _, v in rows)
    code = EXIT_RUNTIME if crashed else (EXIT_FAIL if failed else EXIT_PASS)
    summary = SuiteSummary(name, rows, {k: rep for k, rep in done}, wall, code)
    print(summary.format(), file=stream or sys.stdout)
    out = out if out is not None else os.path.join(_out_root(), f"suite_{name}")
    if _ensure_writable(out):
        _dump(os.path.join(out, "reports.json"), {f"C{k}": rep.to_dict() for k, rep in done})
        _dump(os.path.join(out, "manifest.json"),
              {"suite": name, "seed": seed, "hermite_draws": draws, "workers": workers,
               "versions": versions(), "wall_time_seconds": wall,
               "verdicts": {f"C{k}": v for k, _, v in rows}, "exit_code": code,
               "artifacts": ["manifest.json", "reports.json"]})
    return summary


# ---------------------------------------------------------------------------
# command line


GROUPS = {}
for _c in COMMANDS:
    _g, _a = _c.split(".")
    GROUPS.setdefault(_g, []).append(_a)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blowup-lab",
        description="Desk-scale experiments on blow-up of semilinear heat equations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="group", required=True)
    for group, actions in GROUPS.items():
        p = sub.add_parser(group, help=f"{group} commands")
        p.add_argument("action", choices=actions)
        p.add_argument("-c", "--config", help="configuration file (key = value format)")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("-o", "--output", help="output directory")
        p.add_argument("-j", "--workers", type=int, help="worker processes")
    s = sub.add_parser("suite", help="run an acceptance suite")
    s.add_argument("name", help="semigroup, profiles, evolution, theorems or all")
    s.add_argument("-o", "--output", help="output directory")
    s.add_argument("-j", "--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--draws", type=int, default=None, help="Hermite sweep size")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.group == "suite":
        try:
            summary = run_suite(args.name, args.output, max(1, args.workers), args.seed,
                                args.draws)
        except UsageError as exc:
            _error(EXIT_USAGE, str(exc), "UsageError", stream=sys.stderr)
            return EXIT_USAGE
        return summary.exit_code
    text = ""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            _error(EXIT_USAGE, f"cannot read config: {exc}", "OSError", stream=sys.stderr)
            return EXIT_USAGE
    overrides = list(args.set) + [f"command={args.group}.{args.action}"]
    if args.output:
        overrides.append(f"output={args.output}")
    if args.workers:
        overrides.append(f"workers={args.workers}")
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        _error(EXIT_USAGE, str(exc), "ConfigError", stream=sys.stderr)
        return EXIT_USAGE
    code, manifest = run_experiment(cfg)
    if "verdicts" in manifest:
        for name, verdict in manifest["verdicts"].items():
            print(f"{name}: {verdict}")
        print(f"artifacts: {output_dir(cfg)}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
