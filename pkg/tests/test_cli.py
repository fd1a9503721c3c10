from __future__ import annotations

import json
import subprocess
import sys

import pytest

from biotplate.cli import build_parser, main
from biotplate.io import read_csv, read_json
from biotplate.pipeline import MONITOR_KEYS, trend_verdict

TINY = {
    "geometry": {"family": "channel", "params": {"band": [-0.3, 0.3]}, "h_cell": 0.5},
    "material": {"lambda": 1.0, "mu": 1.0},
    "macro": {"sigma": [0.0, 0.5], "n_nodes": 11, "T": 0.2, "dt": 0.05},
    "forcing": {"f0": {"amplitude": 1.0, "time": "ramp-hold", "space": "sin", "t_ramp": 0.1},
                "g1bar": {"amplitude": 1.0, "time": "smoothstep", "space": "bump", "t_ramp": 0.1}},
    "micro": {"eps": [0.25]},
    "check": {"micro_steps": 10},
}


def _config(tmp_path, **changes):
    raw = json.loads(json.dumps(TINY))
    for k, v in changes.items():
        raw[k] = {**raw.get(k, {}), **v} if isinstance(v, dict) else v
    path = tmp_path / "run.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    return str(path)


def _run(*argv):
    return main([str(a) for a in argv])


def test_parser_requires_config():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["cell"])


def test_full_pipeline(tmp_path, capsys):
    cfg, out = _config(tmp_path), tmp_path / "out"
    for cmd in ("cell", "macro", "micro", "compare", "check"):
        assert _run(cmd, "--config", cfg, "--out", out) == 0, capsys.readouterr().err
    coeffs = read_json(out / "coefficients.json")
    assert coeffs["K"] == pytest.approx(0.036, rel=1e-10)
    rep = read_json(out / "cell_report.json")
    assert rep["passed"] and any("|Z_s|" in n or "prefactor" in n for n in rep["notes"])
    header, arr = read_csv(out / "macro_energy.csv")
    assert header == ["t", "E", "dissipation", "forcing_free"] and arr.shape == (5, 4)
    header, arr = read_csv(out / "micro_eps0.25_monitors.csv")
    assert header == ["epsilon", *MONITOR_KEYS] and arr.shape == (1, 6)
    header, arr = read_csv(out / "convergence.csv")
    assert arr.shape[0] == 1 and header[0] == "epsilon"
    man = read_json(out / "manifest.json")
    assert set(man["stages"]) == {"cell", "macro", "micro_eps0.25", "compare", "check"}
    assert all(s["passed"] for s in man["stages"].values())
    assert (out / "timings.txt").is_file()


def test_micro_eps_selection(tmp_path, capsys):
    cfg = _config(tmp_path, micro={"eps": [0.25, 0.125]})
    assert _run("micro", "--config", cfg, "--out", tmp_path, "--eps", 0.125) == 0
    assert (tmp_path / "micro_eps0.125_final.json").is_file()
    assert _run("micro", "--config", cfg, "--out", tmp_path, "--eps", 0.3) == 3
    assert "eps-not-in-spec" in capsys.readouterr().err


def test_deterministic_outputs(tmp_path):
    cfg = _config(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        for cmd in ("cell", "macro"):
            assert _run(cmd, "--config", cfg, "--out", out) == 0
    for name in ("coefficients.json", "cell_report.json", "macro_trajectory.csv",
                 "macro_energy.csv", "macro_summary.json", "manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_nondeterministic_manifest_has_seconds(tmp_path):
    cfg = _config(tmp_path, deterministic=False)
    assert _run("cell", "--config", cfg, "--out", tmp_path) == 0
    assert "seconds" in read_json(tmp_path / "manifest.json")["stages"]["cell"]


@pytest.mark.parametrize("changes,argv,code,tag", [
    ({}, ["--tol", "0"], 3, "invalid-input"),
    ({"geometry": {"family": "cavity", "params": {}}}, [], 3, "missing-parameter"),
    ({"material": {"voigt": [[1, 0.5, 0], [0.2, 1, 0], [0, 0, 1]]}, "unused": 1}, [], 3,
     "schema-violation"),
    ({"material": {"voigt": [[1, 0.5, 0], [0.2, 1, 0], [0, 0, 1]]}}, [], 2, "not-symmetric"),
])
def test_cell_failures(tmp_path, capsys, changes, argv, code, tag):
    raw_changes = dict(changes)
    if "material" in raw_changes and "voigt" in raw_changes["material"]:
        raw = json.loads(json.dumps(TINY))
        raw["material"] = raw_changes.pop("material")
        raw.update(raw_changes)
        cfg = tmp_path / "v.json"
        cfg.write_text(json.dumps(raw), encoding="utf-8")
    else:
        cfg = _config(tmp_path, **raw_changes)
    assert _run("cell", "--config", cfg, "--out", tmp_path, *argv) == code
    assert tag in capsys.readouterr().err


def test_macro_without_coefficients(tmp_path, capsys):
    assert _run("macro", "--config", _config(tmp_path), "--out", tmp_path / "empty") == 3
    assert "file-not-found" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert _run("cell", "--config", tmp_path / "none.json") == 3


def test_inconsistent_micro_forcing(tmp_path, capsys):
    cfg = _config(tmp_path, micro={"forcing": {"f0": {"amplitude": 2.0}}})
    assert _run("compare", "--config", cfg, "--out", tmp_path) == 3
    assert "inconsistent-data" in capsys.readouterr().err


def test_positivity_check_fails(tmp_path, capsys):
    cfg = _config(tmp_path, check={"coefficient_overrides": {"c_star": 0.0}})
    assert _run("check", "--config", cfg, "--out", tmp_path) == 2
    rep = read_json(tmp_path / "check_report.json")
    failed = {s["suite"] for s in rep["suites"] if not s["passed"]}
    assert "positivity" in failed


def test_single_eps_warning(tmp_path):
    cfg = _config(tmp_path)
    assert _run("compare", "--config", cfg, "--out", tmp_path) == 0
    verdict = read_json(tmp_path / "compare_verdict.json")
    assert verdict["passed"] and verdict["warnings"]


def test_trend_failure_exit_code(tmp_path, capsys):
    # two coarse scales over a short horizon are pre-asymptotic for e_p
    cfg = _config(tmp_path, micro={"eps": [0.25, 0.125]})
    assert _run("compare", "--config", cfg, "--out", tmp_path) == 2
    assert "trend-failed" in capsys.readouterr().err
    verdict = read_json(tmp_path / "compare_verdict.json")
    assert not verdict["passed"] and not verdict["checks"]["e_p"]
    assert verdict["checks"]["unfolding"]


def test_trend_verdict_single_row():
    assert trend_verdict([object()])["passed"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "biotplate", "cell", "--config",
                          _config(tmp_path), "--out", str(tmp_path), "-v"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    assert res.stdout.strip().endswith("biotplate cell: ok")
