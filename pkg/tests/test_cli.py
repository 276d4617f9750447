import csv
import json
from pathlib import Path

import numpy as np
import pytest

from retroq import bell, bohmtraj, cli, qgrid, tsvf
from retroq.config import SCHEMA, parse_config
from retroq.errors import ParseError, ValidationError

ROOT = Path(__file__).resolve().parents[1]


def _cfg(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def _run(tmp_path, doc, out="out", extra=()):
    status = cli.main(["run", "--config", str(_cfg(tmp_path, doc)),
                       "--out", str(tmp_path / out), *extra])
    report = tmp_path / out / "report.json"
    return status, (json.loads(report.read_text()) if report.exists() else None)


# Parsing -------------------------------------------------------------------------

def test_minimal_bell_config():
    cfg = parse_config('{"scenario":"bell","a":0,"b":1.0472,"samples":100000,"seed":7}')
    assert cfg.scenario == "bell"
    assert cfg.seed == 7
    assert cfg.params["samples"] == 100000
    assert cfg.params["planted_violation"] is False


def test_seed_defaults_to_zero():
    assert parse_config('{"scenario":"factorize"}').seed == 0


def test_missing_scenario_named():
    with pytest.raises(ValidationError) as exc:
        parse_config('{"a": 0}')
    assert ("scenario", "missing required key 'scenario'") in exc.value.errors
    assert "scenario" in str(exc.value)


def test_all_errors_reported():
    with pytest.raises(ValidationError) as exc:
        parse_config('{"scenario":"bell","samples":-3,"seed":"x","extra":1}')
    paths = {p for p, _ in exc.value.errors}
    assert {"a", "b", "samples", "seed", "extra"} <= paths


def test_nested_key_paths():
    doc = {"scenario": "weakfield", "grid": {"x_min": 0, "n": 4}, "dt": 0.01,
           "initial": {"x0": 0, "p0": 0, "sigma": -1}}
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(doc))
    paths = {p for p, _ in exc.value.errors}
    assert {"grid/x_max", "grid/n", "initial/sigma"} <= paths


def test_unknown_scenario():
    with pytest.raises(ValidationError) as exc:
        parse_config('{"scenario":"teleport"}')
    assert exc.value.errors[0][0] == "scenario"


def test_malformed_json():
    with pytest.raises(ParseError):
        parse_config("{scenario: bell")
    with pytest.raises(ValidationError):
        parse_config("[1, 2]")


def test_published_schema_in_sync():
    doc = json.loads((ROOT / "docs" / "config.schema.json").read_text())
    assert doc == json.loads(json.dumps(SCHEMA))


@pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert cli.main(["validate", "--config", str(path)]) == 0


def test_validate_command_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(_cfg(tmp_path, {"a": 1}))]) == 2
    assert "scenario" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert cli.main(["validate", "--config", str(bad)]) == 2
    assert cli.main(["validate", "--config", str(tmp_path / "missing.json")]) == 2


# Running -------------------------------------------------------------------------

BELL = {"scenario": "bell", "a": 0, "b": 1.0472, "samples": 20000, "seed": 7}


def test_bell_run_and_report(tmp_path):
    status, rep = _run(tmp_path, BELL)
    assert status == 0
    assert set(rep) >= {"scenario", "seed", "elapsed_s", "metrics", "artifacts"}
    assert rep["scenario"] == "bell" and rep["seed"] == 7
    for name in rep["artifacts"]:
        assert (tmp_path / "out" / name).exists()
    recs = bell.RecordBatch.read_csv(tmp_path / "out" / "records.csv")
    assert len(recs) == 20000


def test_bell_determinism(tmp_path):
    _run(tmp_path, BELL, "one")
    _run(tmp_path, BELL, "two")
    for name in ("records.csv", "run.log"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_seed_flag_overrides(tmp_path):
    _, rep = _run(tmp_path, BELL, "s", extra=["--seed", "99"])
    assert rep["seed"] == 99
    _, base = _run(tmp_path, BELL, "b")
    assert (tmp_path / "s" / "records.csv").read_bytes() != (tmp_path / "b" / "records.csv").read_bytes()


def test_planted_violation_fails(tmp_path):
    doc = dict(BELL, planted_violation=True)
    status, rep = _run(tmp_path, doc)
    assert status == 1
    assert rep["pass"] is False


def test_planted_violation_multi_setting(tmp_path):
    doc = {"scenario": "bell", "a": [0, 1.5707963267948966], "b": [0.7853981633974483],
           "samples": 20000, "seed": 2, "planted_violation": True}
    status, rep = _run(tmp_path, doc)
    assert status == 1
    assert rep["checks"]["locality"] is False


def test_chsh_run_reproduces_tsirelson(tmp_path):
    doc = json.loads((ROOT / "configs" / "chsh.json").read_text())
    doc["samples"] = 50000
    status, rep = _run(tmp_path, doc)
    assert status == 0
    m = rep["metrics"]
    assert abs(abs(m["chsh_analytic"]) - 2 * np.sqrt(2)) <= 1e-12
    assert abs(m["chsh"] - m["chsh_analytic"]) <= 3 * m["chsh_stderr"]
    loc = json.loads((tmp_path / "out" / "locality.json").read_text())
    assert loc["chsh"] == m["chsh"] and loc["pass"] is True


def test_factorize_run(tmp_path):
    status, rep = _run(tmp_path, {"scenario": "factorize", "parties": 3, "seed": 5})
    assert status == 0
    assert rep["metrics"]["max_table_diff"] <= 1e-10
    with open(tmp_path / "out" / "correlation_table.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][-3:] == ["p_direct", "p_retro", "abs_diff"]
    assert len(rows) == 1 + rep["metrics"]["n_outcomes"]


def test_factorize_named_observables(tmp_path):
    doc = {"scenario": "factorize", "state": "ghz", "parties": 3, "observables": ["x", "x", "x"]}
    status, rep = _run(tmp_path, doc)
    assert status == 0 and rep["metrics"]["n_outcomes"] == 8


def test_average_run(tmp_path):
    doc = {"scenario": "average", "grid": {"x_min": -15, "x_max": 15, "n": 301}, "dt": 0.01,
           "kind": "density"}
    status, rep = _run(tmp_path, doc)
    assert status == 0
    assert rep["metrics"]["max_pointwise_diff"] <= 1e-8
    tsvf.read_weak_field(tmp_path / "out" / "average_field.csv")


def test_weakfield_run_logs_negativity(tmp_path):
    doc = {"scenario": "weakfield", "grid": {"x_min": -20, "x_max": 20, "n": 401}, "dt": 0.01,
           "expect_negative": True}
    status, rep = _run(tmp_path, doc)
    assert status == 0
    log = (tmp_path / "out" / "run.log").read_text()
    line = next(l for l in log.splitlines() if "min_value=" in l)
    assert f"min_value={rep['metrics']['min_value']!r}" in line
    field = tsvf.read_weak_field(tmp_path / "out" / "weak_field.csv")
    assert field.min_value < -1e-3


def test_continuity_run(tmp_path):
    doc = {"scenario": "continuity", "grid": {"x_min": -20, "x_max": 20, "n": 401}, "dt": 0.01}
    status, rep = _run(tmp_path, doc)
    assert status == 0
    assert rep["metrics"]["reduction"] >= 3


def test_trajectories_run(tmp_path):
    doc = {"scenario": "trajectories", "grid": {"x_min": -10, "x_max": 16, "n": 521}, "dt": 0.01,
           "t_f": 2.0, "t_probe": 1.0, "n_traj": 3000, "bins": 20, "n_write": 5, "seed": 4}
    status, rep = _run(tmp_path, doc)
    assert status == 0
    ens = json.loads((tmp_path / "out" / "ensemble.json").read_text())
    assert {"chi2", "dof", "p_value", "neg_mass_fraction"} <= set(ens)
    with open(tmp_path / "out" / "trajectories.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["traj_id", "t", "x", "singular"]
    assert len(rows) == 1 + 5 * 101


def test_trajectories_deterministic(tmp_path):
    doc = {"scenario": "trajectories", "grid": {"x_min": -10, "x_max": 16, "n": 261}, "dt": 0.02,
           "t_f": 1.0, "t_probe": 0.5, "n_traj": 500, "bins": 10, "basis": "box", "n_write": 3}
    _run(tmp_path, doc, "one")
    _run(tmp_path, doc, "two")
    for name in ("ensemble.json", "trajectories.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_library_error_exits_2(tmp_path, capsys):
    # packet wider than the box
    doc = {"scenario": "weakfield", "grid": {"x_min": -3, "x_max": 3, "n": 61}, "dt": 0.01}
    status, rep = _run(tmp_path, doc)
    assert status == 2
    assert "PacketTouchesBoundary" in capsys.readouterr().err


def test_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["run", "--config", str(_cfg(tmp_path, BELL))]) == 0
    assert (tmp_path / "out" / "bell" / "report.json").exists()


def test_out_key_in_config(tmp_path):
    doc = dict(BELL, out=str(tmp_path / "from_cfg"))
    assert cli.main(["run", "--config", str(_cfg(tmp_path, doc))]) == 0
    assert (tmp_path / "from_cfg" / "records.csv").exists()
