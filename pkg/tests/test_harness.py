import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_lab import harness as H
from blowup_lab.report import PASS


def run(text, tmp_path, name="out", overrides=()):
    cfg = H.parse_config(text, [f"output={tmp_path / name}", *overrides])
    return H.run_experiment(cfg)


# ---------------------------------------------------------------------------
# configuration


def test_minimal_config_fills_defaults():
    cfg = H.parse_config("command=profile.shoot\nalpha=1.0\nN=3")
    assert cfg.command == "profile.shoot"
    assert cfg["alpha"] == 1.0 and cfg.N == 3
    assert cfg.nonlinearity == "exp" and cfg.R == 1.0 and cfg.seed == 1234
    assert cfg["M"] == 2048 and cfg["tol_prof"] == 0.05
    assert set(cfg.values()) == set(H.SCHEMA)


def test_sections_and_comments():
    text = """
    # a comment
    command = verify.classify   # trailing comment
    nonlinearity = power
    p = 3
    N = 5
    [verify]
    ell = 1.0
    window_lo = 0.001953125
    window_hi = 0.0625
    """
    cfg = H.parse_config(text)
    assert cfg.nl.p == 3.0 and cfg["ell"] == 1.0


def test_non_integer_dimension_rejected():
    with pytest.raises(H.ConfigError, match="N must be integer"):
        H.parse_config("command=profile.shoot\nN=2.5")


@pytest.mark.parametrize("text,message", [
    ("command=profile.shoot\nbogus=1", "line 2: unknown key 'bogus'"),
    ("command=profile.shoot\n[evolve]\nalpha=1", "line 3: key 'alpha' belongs to [profile]"),
    ("command=profile.shoot\nN=3\nN=4", "line 3: duplicate key 'N'"),
    ("command=profile.shoot\n[nowhere]", "line 2: unknown section"),
    ("command=profile.shoot\nN", "line 2: expected key = value"),
    ("command=nope", "line 1: command must be one of"),
    ("N=3", "missing required key 'command'"),
    ("command=profile.shoot\nnonlinearity=power", "missing required key 'p'"),
    ("command=profile.shoot\np=3", "line 2: p only applies"),
    ("command=profile.shoot\n[profile]\ntol=-1", "line 3: tol must be positive"),
    ("command=profile.shoot\n[verify]\nwindow_lo=0.2", "window_hi must exceed window_lo"),
])
def test_config_errors_name_the_line(text, message):
    with pytest.raises(H.ConfigError, match=message.replace("[", r"\[").replace("]", r"\]")):
        H.parse_config(text)


def test_override_errors_name_the_flag():
    with pytest.raises(H.ConfigError, match="--set 1: N must be integer"):
        H.parse_config("command=profile.shoot", ["N=x"])


def test_overrides_replace_file_values():
    cfg = H.parse_config("command=profile.shoot\nN=3", ["N=5"])
    assert cfg.N == 5


finite = st.floats(1e-6, 1e6, allow_nan=False)


@st.composite
def configs(draw):
    lines = [f"command = {draw(st.sampled_from(H.COMMANDS))}"]
    if draw(st.booleans()):
        lines += ["nonlinearity = power", f"p = {draw(st.floats(1.01, 9.0))!r}"]
    lines.append(f"N = {draw(st.integers(1, 12))}")
    lines.append(f"seed = {draw(st.integers(0, 2 ** 31))}")
    lines.append(f"[profile]\nalpha = {draw(st.floats(0.0, 30.0))!r}\ntol = {draw(finite)!r}")
    levels = draw(st.lists(finite, min_size=1, max_size=5))
    lines.append(f"[evolve]\nM = {draw(st.integers(8, 10 ** 5))}")
    lines.append("snapshot_levels = " + ", ".join(repr(v) for v in levels))
    if draw(st.booleans()):
        lines.append(f"cap = {draw(finite)!r}")
    lines.append(f"[verify]\nell = {draw(st.floats(-1e3, 1e3))!r}")
    return "\n".join(lines)


@given(configs())
def test_serialize_round_trip(text):
    cfg = H.parse_config(text)
    again = H.parse_config(H.serialize(cfg))
    assert again == cfg
    assert H.serialize(again) == H.serialize(cfg)


@given(st.lists(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64),
                         min_size=3, max_size=3), min_size=1, max_size=20))
def test_csv_is_lossless(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    arr = np.array(rows, dtype=float)
    H.write_csv(path, ["a", "b", "c"], arr)
    header, back = H.read_csv(path)
    assert header == ["a", "b", "c"]
    assert np.array_equal(back, arr)


# ---------------------------------------------------------------------------
# experiments


def test_profile_shoot_trivial(tmp_path):
    code, manifest = run("command=profile.shoot\nalpha=0", tmp_path)
    assert code == H.EXIT_PASS
    out = tmp_path / "out"
    for name in manifest["artifacts"]:
        assert (out / name).exists(), name
    assert {"profile.csv", "manifest.json", "config.ini"} <= set(manifest["artifacts"])
    assert manifest["summary"]["classification"] == "Trivial"
    assert manifest["versions"]["blowup_lab"]


def test_manifest_reruns_the_experiment(tmp_path):
    _, manifest = run("command=profile.shoot\nalpha=1.5", tmp_path)
    with open(tmp_path / "out" / "manifest.json") as fh:
        on_disk = json.load(fh)
    assert on_disk["config_text"] == manifest["config_text"]
    cfg = H.parse_config(on_disk["config_text"])
    assert cfg.values() == H.parse_config(manifest["config_text"]).values()
    assert cfg["alpha"] == 1.5


def test_theorem2_pipeline_passes(tmp_path):
    code, manifest = run("command=verify.theorem2\nalpha=5.515122784606828", tmp_path)
    assert code == H.EXIT_PASS
    assert manifest["verdicts"] == {"final_profile": PASS}


def test_failing_verdict_exits_one(tmp_path):
    x = np.geomspace(1e-4, 0.1, 301)
    u = -2.0 * np.log(x) + np.log(np.abs(np.log(x))) + 5.0
    path = tmp_path / "state.csv"
    H.write_csv(path, ["r", "u"], np.column_stack([np.r_[0.0, x], np.r_[u[0], u]]))
    code, manifest = run(f"command=verify.theorem2\n[verify]\ninput={path}\nwindow_lo=0.001",
                         tmp_path)
    assert code == H.EXIT_FAIL
    assert manifest["verdicts"]["final_profile"] == "fail"


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = H.parse_config("command=profile.shoot", [f"output={blocker / 'sub'}"])
    code, err = H.run_experiment(cfg)
    assert code == H.EXIT_RUNTIME
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed["error"] == "output not writable"
    assert err["error"] == "output not writable"


def test_runtime_error_writes_error_json(tmp_path, capsys):
    code, err = run(f"command=verify.theorem2\n[verify]\ninput={tmp_path / 'missing.csv'}",
                    tmp_path)
    assert code == H.EXIT_RUNTIME
    with open(tmp_path / "out" / "error.json") as fh:
        assert json.load(fh)["exit_code"] == H.EXIT_RUNTIME


def test_power_only_command_with_exponential(tmp_path, capsys):
    code, err = run("command=verify.theorem4", tmp_path)
    assert code == H.EXIT_USAGE
    assert err["kind"] == "ConfigError"


def test_rerun_gives_identical_csv(tmp_path):
    for name in ("a", "b"):
        run("command=semigroup.mehler\n[semigroup]\nt = 0.5", tmp_path, name)
        run("command=profile.shoot\nalpha=2.0", tmp_path, name + "_shoot")
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a_shoot" / "profile.csv").read_bytes() == \
        (tmp_path / "b_shoot" / "profile.csv").read_bytes()


def test_environment_sets_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(H.OUT_ENV, str(tmp_path))
    cfg = H.parse_config("command=profile.singular")
    assert H.output_dir(cfg) == os.path.join(str(tmp_path), "profile.singular")
    code, _ = H.run_experiment(cfg)
    assert code == H.EXIT_PASS
    assert (tmp_path / "profile.singular" / "manifest.json").exists()


# ---------------------------------------------------------------------------
# command line and suites


def test_cli_exit_codes(tmp_path, capsys):
    assert H.main(["profile", "shoot", "-s", "alpha=0", "-o", str(tmp_path / "a")]) == 0
    assert H.main(["profile", "shoot", "-s", "N=2.5", "-o", str(tmp_path / "b")]) == 2
    assert H.main(["verify", "theorem4", "-o", str(tmp_path / "c")]) == 2
    assert H.main(["profile", "shoot", "-c", str(tmp_path / "none.ini")]) == 2
    assert H.main(["suite", "nope"]) == 2
    with pytest.raises(SystemExit) as exc:
        H.main(["profile", "fly"])
    assert exc.value.code == 2


def test_cli_reads_config_file(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[profile]\nalpha = 0.0\n")
    assert H.main(["profile", "shoot", "-c", str(ini), "-o", str(tmp_path / "o")]) == 0
    assert "Trivial" in (tmp_path / "o" / "manifest.json").read_text()


def test_unknown_suite():
    with pytest.raises(H.UsageError):
        H.run_suite("nope")


def test_semigroup_suite_within_budget(tmp_path, capsys):
    summary = H.run_suite("semigroup", out=str(tmp_path / "suite"))
    assert summary.wall_time < 180.0
    assert summary.exit_code == H.EXIT_PASS, summary.format()
    assert [k for k, _, _ in summary.table()] == [3, 4, 5]
    manifest = json.loads((tmp_path / "suite" / "manifest.json").read_text())
    assert manifest["hermite_draws"] == 1000 and manifest["exit_code"] == 0


def test_suite_records_crash_and_continues(tmp_path, monkeypatch, capsys):
    from blowup_lab import acceptance as A

    def boom(ctx):
        raise RuntimeError("synthetic crash")

    monkeypatch.setitem(A.CRITERIA, 2, ("kappa identities", boom))
    summary = H.run_suite("profiles", out=str(tmp_path / "s"))
    verdicts = {k: v for k, _, v in summary.table()}
    assert verdicts[2] == "error"
    assert verdicts[1] == PASS and verdicts[6] == PASS
    assert summary.exit_code == H.EXIT_RUNTIME
