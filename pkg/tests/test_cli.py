import csv
import io
import json
import subprocess
import sys

import pytest

from rwpt import cli, report


def run_json(args):
    buf = io.StringIO()
    code = cli.run(args, stdout=buf)
    return code, (json.loads(buf.getvalue()) if buf.getvalue().startswith("{") else None)


def strip_timestamp(rep):
    rep = dict(rep)
    rep.pop("timestamp")
    return rep


def test_validate_builtin():
    code, rep = run_json(["validate", "--dist", "king"])
    assert code == 0
    assert rep["schema_version"] == report.SCHEMA_VERSION
    assert rep["command"] == "validate"
    assert rep["config"]["dist"]["kind"] == "king"


def test_ruin_example():
    code, rep = run_json(["ruin", "--dist", "lazy_srw", "--r", "10", "--R", "160",
                          "--x", "40,0"])
    assert code == 0 and rep["pass"]
    res = rep["result"]
    assert res["predicted"] == pytest.approx(0.5)
    assert abs(res["exact"] - 0.5) <= 0.05
    assert rep["provenance"]["predicted"] == "predicted"
    assert rep["provenance"]["exact"] == "exact"


def test_every_provenance_tag_is_known():
    for args in (["ruin", "--dist", "lazy_srw", "--r", "2", "--R", "16", "--x", "5,0"],
                 ["green", "--dist", "lazy_srw", "--R", "6", "--x", "0,0", "--y", "1,0"],
                 ["potkern", "--dist", "lazy_srw", "--x", "1,0"]):
        _, rep = run_json(args)
        assert set(rep["provenance"].values()) <= set(report.PROVENANCE_TAGS)
        assert set(rep["provenance"]) <= set(rep["result"])


def test_byte_identical_modulo_timestamp():
    args = ["mc", "--dist", "lazy_srw", "--event", "escape", "--R", "6", "--x", "0,0",
            "--n-paths", "500", "--seed", "3"]
    _, a = run_json(args)
    _, b = run_json(args)
    assert json.dumps(strip_timestamp(a), sort_keys=True) == \
        json.dumps(strip_timestamp(b), sort_keys=True)
    assert a["config_hash"] == b["config_hash"]


def test_seed_changes_hash():
    base = ["mc", "--dist", "lazy_srw", "--event", "escape", "--R", "6", "--x", "0,0",
            "--n-paths", "200"]
    _, a = run_json(base + ["--seed", "1"])
    _, b = run_json(base + ["--seed", "2"])
    assert a["config_hash"] != b["config_hash"]


def test_config_file_flags_win(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dist": "lazy_srw", "r": 2, "R": 16, "x": [5, 0]}))
    _, a = run_json(["ruin", "--config", str(cfg)])
    assert a["config"]["R"] == 16
    _, b = run_json(["ruin", "--config", str(cfg), "--R", "20"])
    assert b["config"]["R"] == 20
    assert b["result"]["exact"] != a["result"]["exact"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dist": "lazy_srw", "radius": 3}))
    assert cli.run(["ruin", "--config", str(cfg)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    [],
    ["nonsense"],
    ["ruin", "--dist", "no_such_walk", "--r", "2", "--R", "9", "--x", "4,0"],
    ["ruin", "--dist", "lazy_srw", "--r", "2", "--R", "9"],
    ["ruin", "--dist", "lazy_srw", "--r", "2", "--R", "9", "--x", "4"],
    ["validate", "--dist", "custom_table:table=1"],
    ["predict", "--dist", "lazy_srw", "--formula", "green_center", "--params", '{"n": 16}'],
])
def test_errors_exit_one(args, capsys):
    assert cli.run(args) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("rwpt: error:")


def test_tolerance_file(tmp_path):
    tol = tmp_path / "t.json"
    tol.write_text(json.dumps({"ruin": 1e-6}))
    code, rep = run_json(["ruin", "--dist", "lazy_srw", "--r", "10", "--R", "160",
                          "--x", "40,0", "--tol-file", str(tol)])
    assert code == 2 and not rep["pass"]
    assert rep["config"]["tolerances"]["ruin"] == 1e-6


def test_help_lists_csv_columns(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["harnack-interior", "--help"])
    assert exc.value.code == 0
    assert "m,sup_ratio_dev,fitted_value" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        cli.run(["mc", "--help"])
    assert "path_id,stop_index,x1,x2,steps" in capsys.readouterr().out


def test_harnack_interior_writes_json_and_csv(tmp_path):
    out = tmp_path / "run"
    code = cli.run(["harnack-interior", "--dist", "lazy_srw", "--r", "2", "--m", "2,4",
                    "--s", "auto", "--seed", "7", "--out", str(out)], stdout=io.StringIO())
    assert code in (0, 2)
    rep = json.loads((out / "harnack-interior.json").read_text())
    assert rep["result"]["experiment"] == "interior_harnack"
    with open(out / "harnack-interior.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "sup_ratio_dev", "fitted_value"] and len(rows) == 3


def test_mc_hit_event():
    code, rep = run_json(["mc", "--dist", "king", "--event", "hit", "--r", "2", "--K", "16",
                          "--x", "5,3", "--n-paths", "2000", "--seed", "1"])
    assert code == 0 and rep["result"]["within"]


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("RWPT_THREADS", "2")
    args = ["mc", "--dist", "lazy_srw", "--event", "ruin", "--r", "2", "--R", "8",
            "--x", "4,0", "--n-paths", "300", "--seed", "5"]
    _, a = run_json(args)
    monkeypatch.delenv("RWPT_THREADS")
    _, b = run_json(args)
    assert a["result"] == b["result"]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rwpt.cli", "validate", "--dist", "lazy_srw"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "validate"


def test_parse_dist_forms():
    assert cli.parse_dist("truncated_power_law:exponent=6,cutoff=64").params == {
        "exponent": 6, "cutoff": 64}
    assert cli.parse_dist('{"kind": "king"}').kind == "king"
    assert cli.parse_dist({"kind": "lazy_srw", "params": {"hold": 0.5}}).params["hold"] == 0.5
