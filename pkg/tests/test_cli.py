"""End-to-end CLI behavior: exit codes, artifacts, determinism."""

from __future__ import annotations

import json

import pytest

from viscofix.cli import config_hash, main

BALL_PROBLEM = {
    "target": {"kind": "projection_ball", "center": [0.0, 0.0], "radius": 1.0},
    "contraction": {"kind": "constant", "value": [2.0, 0.0]},
}


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def _ball_config(n_max=40):
    return {
        "problem": dict(BALL_PROBLEM),
        "schedule": {"kind": "harmonic", "params": {"p": 1.0}, "n_max": n_max},
        "seed": 42,
        "problem_id": "ball",
    }


def _read_summary(out_dir):
    return json.loads((out_dir / "summary.json").read_text())


# ---------------------------------------------------------------------------
# run


def test_run_ball_writes_artifacts(tmp_path, capsys):
    cfg = _ball_config()
    cfg_path = _write(tmp_path, "ball.json", cfg)
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out", str(out), "--quiet"]) == 0
    for name in ("trace.csv", "trace.json", "summary.json"):
        assert (out / name).exists()
    summary = _read_summary(out)
    assert summary["config_hash"] == config_hash(cfg)
    assert summary["seed"] == 42
    assert summary["problem_id"] == "ball"
    assert summary["outer_steps"] == 40
    assert summary["exit_code"] == 0
    assert summary["limit"][0] == pytest.approx(1.0 + 1.0 / 41.0, abs=1e-8)
    first_line = (out / "trace.csv").read_text().splitlines()[0]
    assert first_line == f"# config_hash={config_hash(cfg)} seed=42"


def test_run_is_byte_deterministic(tmp_path):
    cfg_path = _write(tmp_path, "ball.json", _ball_config())
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert main(["run", str(cfg_path), "--out", str(first), "--quiet"]) == 0
    assert main(["run", str(cfg_path), "--out", str(second), "--quiet"]) == 0
    assert (first / "summary.json").read_bytes() == (second / "summary.json").read_bytes()
    assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()


def test_run_seed_override_changes_the_hash(tmp_path):
    cfg = _ball_config()
    cfg_path = _write(tmp_path, "ball.json", cfg)
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out", str(out), "--seed", "7", "--quiet"]) == 0
    summary = _read_summary(out)
    assert summary["seed"] == 7
    reseeded = dict(cfg, seed=7)
    assert summary["config_hash"] == config_hash(reseeded)
    assert summary["config_hash"] != config_hash(cfg)


def test_run_bad_schedule_exits_one(tmp_path, capsys):
    cfg = _ball_config()
    cfg["schedule"] = {"kind": "explicit", "params": {"values": [0.5, 0.6]}}
    cfg_path = _write(tmp_path, "bad.json", cfg)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o"), "--quiet"]) == 1
    assert "schedule not strictly decreasing" in capsys.readouterr().err


def test_run_translation_exits_two_and_reports_stagnation(tmp_path, capsys):
    cfg = {
        "problem": {
            "target": {"kind": "affine", "matrix": [[1.0, 0.0], [0.0, 1.0]], "offset": [1.0, 0.0]},
            "contraction": {"kind": "constant", "value": [0.0, 0.0]},
        },
        "schedule": {"kind": "harmonic", "n_max": 30},
        "seed": 42,
        "problem_id": "translation",
    }
    cfg_path = _write(tmp_path, "translation.json", cfg)
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out", str(out), "--quiet"]) == 2
    assert "NoCommonFixedPoint" in capsys.readouterr().err
    summary = _read_summary(out)
    assert summary["stagnation"]["stalled"] is True
    assert summary["converged"] is False
    assert summary["exit_code"] == 2


def test_run_inner_budget_exhaustion_exits_two(tmp_path, capsys):
    # A constant contraction solves each inner problem in one application, so
    # the budget needs a genuinely iterative contraction to bite.
    cfg = _ball_config()
    cfg["problem"]["contraction"] = {
        "kind": "affine",
        "matrix": [[0.9, 0.0], [0.0, 0.9]],
        "offset": [2.0, 0.0],
    }
    cfg["options"] = {"max_iter": 3}
    cfg_path = _write(tmp_path, "tight.json", cfg)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o"), "--quiet"]) == 2
    assert "MaxIterExceeded" in capsys.readouterr().err


def test_run_anchored_with_anchors_reports_retraction(tmp_path):
    cfg = {
        "problem": {
            "target": {"kind": "negation", "dim": 1},
            "contraction": {"kind": "constant", "value": [1.0]},
        },
        "schedule": {"kind": "anchored", "n_max": 60},
        "anchors": [[1.0], [-1.0], [0.5]],
        "seed": 42,
        "problem_id": "anchored-negation",
    }
    cfg_path = _write(tmp_path, "anchored.json", cfg)
    out = tmp_path / "out"
    assert main(["run", str(cfg_path), "--out", str(out), "--quiet"]) == 0
    summary = _read_summary(out)
    retraction = summary["retraction"]
    assert retraction["passed"] is True
    assert len(retraction["limits"]) == 3
    assert retraction["failures"] == {}
    assert summary["limit"][0] == pytest.approx(1.0 / 119.0, abs=1e-8)


def test_run_anchored_needs_constant_contraction(tmp_path, capsys):
    cfg = {
        "problem": {
            "target": {"kind": "negation", "dim": 1},
            "contraction": {"kind": "affine", "matrix": [[0.5]], "offset": [1.0]},
        },
        "schedule": {"kind": "anchored", "n_max": 10},
        "seed": 42,
    }
    cfg_path = _write(tmp_path, "anchored-bad.json", cfg)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o"), "--quiet"]) == 1
    assert "constant" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda c: c.pop("seed"), "seed"),
        (lambda c: c.update(extra_knob=1), "extra_knob"),
        (lambda c: c["schedule"].update(kind="spiral"), "spiral"),
        (lambda c: c["problem"].update(family={"kind": "power"}), "problem"),
    ],
)
def test_run_schema_rejections(tmp_path, capsys, mutate, fragment):
    cfg = _ball_config()
    mutate(cfg)
    cfg_path = _write(tmp_path, "bad.json", cfg)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o"), "--quiet"]) == 1
    err = capsys.readouterr().err
    assert "config invalid" in err or fragment in err


def test_run_missing_and_unparseable_files(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json"), "--quiet"]) == 1
    assert "cannot read" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["run", str(broken), "--quiet"]) == 1
    assert "not valid JSON" in capsys.readouterr().err
    assert main(["run"]) == 1
    assert "missing config path" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# certify-na


def test_certify_na_diagonal(tmp_path, capsys):
    path = _write(tmp_path, "diag.json", {"matrix": [[2.0, 0.0], [0.0, 1.0]]})
    assert main(["certify-na", str(path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["attained"] is True
    assert payload["sigma"] == pytest.approx(2.0, abs=1e-6)
    assert abs(payload["vector"][0]) == pytest.approx(1.0, abs=1e-6)
    assert payload["seed"] == 42


def test_certify_na_accepts_a_bare_matrix_array(tmp_path, capsys):
    path = _write(tmp_path, "shear.json", [[0.0, 1.0], [0.0, 0.0]])
    assert main(["certify-na", str(path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["sigma"] == pytest.approx(1.0, abs=1e-6)


def test_certify_na_rejects_nonsquare(tmp_path, capsys):
    path = _write(tmp_path, "wide.json", {"matrix": [[1.0, 2.0, 3.0]]})
    assert main(["certify-na", str(path)]) == 1
    assert "square" in capsys.readouterr().err


def test_certify_na_clustered_spectrum(tmp_path, capsys):
    matrix = [[(i + 1.0) / (i + 2.0) if i == j else 0.0 for j in range(20)] for i in range(20)]
    path = _write(tmp_path, "clustered.json", {"matrix": matrix})
    assert main(["certify-na", str(path), "--tol", "1e-14"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["sigma"] == pytest.approx(20.0 / 21.0, abs=1e-8)
    assert abs(payload["vector"][19]) >= 1.0 - 1e-8


# ---------------------------------------------------------------------------
# check-family


def test_check_family_power_rotation(tmp_path, capsys):
    spec = {
        "family": {
            "kind": "power",
            "base": {"kind": "rotation", "dim": 2, "plane": [0, 1], "angle": 0.9},
        }
    }
    path = _write(tmp_path, "powerfam.json", spec)
    assert main(["check-family", str(path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] is True
    assert payload["max_defect"] == 0.0


def test_check_family_accepts_bare_spec(tmp_path, capsys):
    spec = {"kind": "rotation_flow", "rates": [1.0], "grid": [0.3, 0.7, 1.0]}
    path = _write(tmp_path, "flow.json", spec)
    assert main(["check-family", str(path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["max_defect"] <= 1e-12


def test_check_family_planted_violation_exits_two(tmp_path, capsys):
    import math

    def rot(angle):
        return {"kind": "rotation", "dim": 2, "plane": [0, 1], "angle": angle}

    table = {str(k): rot(k * math.pi / 5.0) for k in range(7)}
    c, s = math.cos(3.0 * math.pi / 5.0), math.sin(3.0 * math.pi / 5.0)
    table["3"] = {"kind": "affine", "matrix": [[c, -s], [s, c]], "offset": [0.1, 0.0]}
    path = _write(tmp_path, "planted.json", {"family": {"kind": "custom", "table": table}})
    assert main(["check-family", str(path), "--pairs", "100"]) == 2
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] is False
    assert payload["max_defect"] >= 0.09


# ---------------------------------------------------------------------------
# sweep


def _sweep_config():
    return {
        "problem": {
            "family": {"kind": "rotation_flow", "rates": [1.0], "grid": [1.0]},
            "contraction": {
                "kind": "affine",
                "matrix": [[0.5, 0.0], [0.0, 0.5]],
                "offset": [1.0, 0.0],
            },
        },
        "schedule": {"kind": "harmonic", "params": {"p": 1.0}, "n_max": 60},
        "options": {
            "outer_tol": 1e-6,
            "inner_tol": {"kind": "fixed", "value": 1e-8},
            "max_iter": 500000,
        },
        "seed": 42,
        "problem_id": "rotation-sweep",
    }


def test_sweep_over_schedule_exponent(tmp_path):
    cfg_path = _write(tmp_path, "sweep.json", _sweep_config())
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            str(cfg_path),
            "--param",
            "schedule.p",
            "--values",
            "0.5",
            "1",
            "2",
            "--out",
            str(out),
            "--quiet",
        ]
    )
    assert code == 0
    lines = (out / "sweep_summary.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "value,final_fix_residual,step5_distance,total_inner_iterations,status"
    rows = [line.split(",") for line in lines[2:]]
    assert [r[0] for r in rows] == ["0.5", "1.0", "2.0"]
    assert all(r[-1] == "ok" for r in rows)
    for sub in ("p_0.5", "p_1", "p_2"):
        assert (out / sub / "summary.json").exists()


def test_sweep_records_per_value_errors(tmp_path):
    cfg_path = _write(tmp_path, "sweep.json", _sweep_config())
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            str(cfg_path),
            "--param",
            "options.outer_tol",
            "--values",
            "-1",
            "--out",
            str(out),
            "--quiet",
        ]
    )
    assert code == 2
    content = (out / "sweep_summary.csv").read_text()
    assert "error:" in content


def test_sweep_requires_values(tmp_path, capsys):
    cfg_path = _write(tmp_path, "sweep.json", _sweep_config())
    assert main(["sweep", str(cfg_path), "--param", "schedule.p", "--values"]) == 1
    assert "error" in capsys.readouterr().err
