import json
import os
import subprocess
import sys

import pytest

from trajconflict.cli import main
from trajconflict.scenario import builtin_names


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    names = ["v2v_right_angle_collision", "parallel_passing", "v2p_crossing", "v2b_conflict"]
    for n in names:
        assert main(["simulate", n, "--output", str(out)]) == 0
    return out


def paths(sim, name):
    return str(sim / f"{name}.jsonl"), str(sim / f"{name}.calib.json"), str(sim / f"{name}.truth.json")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(l) for l in fh if l.strip()]


def test_simulate_writes_all(tmp_path):
    assert main(["simulate", "--output", str(tmp_path)]) == 0
    names = builtin_names()
    assert len(names) >= 10
    for n in names:
        for ext in (".jsonl", ".truth.json", ".calib.json"):
            assert (tmp_path / (n + ext)).exists()


def test_simulate_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "v2b_conflict", "--seed", "3", "--output", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/v2b_conflict.jsonl").read_bytes() == (tmp_path / "b/v2b_conflict.jsonl").read_bytes()
    main(["simulate", "v2b_conflict", "--output", str(tmp_path / "c")])
    assert (tmp_path / "a/v2b_conflict.jsonl").read_bytes() != (tmp_path / "c/v2b_conflict.jsonl").read_bytes()


def test_simulate_unknown_name(capsys):
    assert main(["simulate", "nope"]) == 1
    err = capsys.readouterr().err
    assert "available" in err and "v2v_right_angle_collision" in err


def test_simulate_invalid_scenario_file(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"name": "x", "duration": 10, "actors": [{"class": "vehicle", "waypoints": []}]}))
    assert main(["simulate", str(p), "--output", str(tmp_path)]) == 1
    assert "actors[0]" in capsys.readouterr().err


def test_track_dump(sim, tmp_path, capsys):
    stream, _, _ = paths(sim, "v2v_right_angle_collision")
    out = tmp_path / "tracks.jsonl"
    assert main(["track", "--input", stream, "--output", str(out)]) == 0
    rows = read_jsonl(out)
    assert {r["id"] for r in rows if r["status"] == "confirmed"} == {1, 2}
    assert set(rows[0]) == {"frame", "id", "class", "x", "y", "w", "h", "status"}
    assert "frames/s" in capsys.readouterr().err


def test_track_empty_stream(tmp_path):
    src = tmp_path / "empty.jsonl"
    src.write_text("")
    out = tmp_path / "o.jsonl"
    assert main(["track", "--input", str(src), "--output", str(out)]) == 0
    assert out.read_text() == ""


def test_track_corrupt_line(tmp_path, capsys):
    src = tmp_path / "bad.jsonl"
    src.write_text('{"frame":0,"class":"vehicle","x":1,"y":1,"w":2,"h":2,"conf":0.9}\n{oops\n')
    assert main(["track", "--input", str(src), "--output", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_input(tmp_path):
    assert main(["track", "--input", str(tmp_path / "none.jsonl")]) == 1


@pytest.mark.parametrize("name,expect", [("v2v_right_angle_collision", ["V2V"]), ("parallel_passing", []),
                                         ("v2p_crossing", ["V2P"])])
def test_detect(sim, tmp_path, name, expect):
    stream, calib, _ = paths(sim, name)
    out = tmp_path / "events.jsonl"
    assert main(["detect", "--input", stream, "--calibration", calib, "--output", str(out)]) == 0
    events = read_jsonl(out)
    assert [e["type"] for e in events] == expect
    if expect == ["V2P"]:
        assert "pedestrian" in events[0]["classes"]


def test_detect_byte_identical(sim, tmp_path):
    stream, calib, _ = paths(sim, "v2b_conflict")
    outs = []
    for i in range(2):
        out = tmp_path / f"e{i}.jsonl"
        assert main(["detect", "--input", stream, "--calibration", calib, "--output", str(out), "--seed", "0"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_detect_needs_calibration(sim):
    stream, _, _ = paths(sim, "v2b_conflict")
    assert main(["detect", "--input", stream, "--output", os.devnull]) == 2


def test_detect_bad_calibration(sim, tmp_path):
    stream, _, _ = paths(sim, "v2b_conflict")
    bad = tmp_path / "cal.json"
    bad.write_text(json.dumps({"H": [0] * 9}))
    assert main(["detect", "--input", stream, "--calibration", str(bad), "--output", os.devnull]) == 2


def test_config_errors(tmp_path, sim):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"conflict": {"theta_min": -1}}))
    stream, calib, _ = paths(sim, "v2b_conflict")
    assert main(["detect", "--config", str(cfg), "--input", stream, "--calibration", calib]) == 2
    assert main(["detect", "--set", "conflict.bogus=1", "--input", stream, "--calibration", calib]) == 2
    assert main(["track", "--config", str(tmp_path / "missing.json"), "--input", stream]) == 2


def test_min_confidence_flag(sim, tmp_path):
    stream, _, _ = paths(sim, "v2b_conflict")
    out = tmp_path / "t.jsonl"
    assert main(["track", "--input", stream, "--output", str(out), "--min-confidence", "1.0"]) == 0
    assert out.read_text() == ""


def test_evaluate_manifest(sim, tmp_path):
    stream, calib, truth = paths(sim, "v2b_conflict")
    out = tmp_path / "rep.json"
    assert main(["evaluate", "--input", stream, "--calibration", calib, "--truth", truth, "--output", str(out)]) == 0
    rep = json.loads(out.read_text())["overall"]
    assert rep["detected"] == rep["total_conflicts"] == 1 and rep["FAR"] == 0


def test_evaluate_manifest_mismatch(sim, tmp_path):
    stream, calib, _ = paths(sim, "v2b_conflict")
    truth = tmp_path / "t.json"
    truth.write_text(json.dumps({"scenario": "x", "duration": 50, "events": []}))
    assert main(["evaluate", "--input", stream, "--calibration", calib, "--truth", str(truth),
                 "--output", os.devnull]) == 1


def test_evaluate_suite_and_angle_gate(tmp_path):
    out = tmp_path / "rep.json"
    assert main(["evaluate", "--scenario", "all", "--output", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["overall"]["DR"] == 1.0 and rep["overall"]["FAR"] == 0.0
    assert len(rep["scenarios"]) >= 10
    assert main(["evaluate", "--scenario", "all", "--set", "conflict.theta_min=179", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["overall"]["DR"] == 0.0


def test_sweep(tmp_path):
    out = tmp_path / "sweep.jsonl"
    assert main(["sweep", "--scenario", "v2v_right_angle_collision", "--param", "conflict.theta_min=179,35",
                 "--output", str(out)]) == 0
    rows = read_jsonl(out)
    assert [r["DR"] for r in rows] == [1.0, 0.0]
    assert main(["sweep", "--output", str(out)]) == 2


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "trajconflict.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("track", "detect", "evaluate", "simulate", "sweep"):
        assert cmd in r.stdout
