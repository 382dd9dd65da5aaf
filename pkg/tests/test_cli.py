import copy
import json

import numpy as np
import pytest

from kpplab.cli import config_hash, main
from kpplab.geometry.sets import VShape
from kpplab.geometry.serialize import save_descriptor
from kpplab.io import read_kppg
from oracles import opening_brute
from test_scenarios import TINY

SIM = {
    "id": "sim-1d",
    "set": {"kind": "half-space", "normal": [1.0], "offset": 5.0},
    "grid": {"lower": [0], "upper": [40], "h": 0.1},
    "solver": {"dt": 0.002, "horizon": 2, "snapshot_every": 1},
}


def _only_dir(root):
    runs = [p for p in root.rglob("manifest.json")]
    assert len(runs) == 1
    return runs[0].parent


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["--version"]) == 0


def test_simulate_writes_manifest_and_snapshots(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps(SIM))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    d = _only_dir(tmp_path / "out")
    man = json.loads((d / "manifest.json").read_text())
    assert man["config_hash"] == config_hash(SIM)
    assert man["seed"] == 42
    snaps = sorted((d / "snapshots").glob("*.kppg"))
    assert len(snaps) == 3 and all(f"snapshots/{p.name}" in man["outputs"] for p in snaps)
    last = read_kppg(snaps[-1])
    assert last.time == pytest.approx(2.0)
    assert 0 <= last.values.min() and last.values.max() <= 1 and last.values[0] > 0.9


def test_simulate_rerun_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps(SIM))
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["--sequential", "simulate", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(sorted((_only_dir(out) / "snapshots").glob("*.kppg")))
    assert [p.name for p in outs[0]] == [p.name for p in outs[1]]
    for a, b in zip(*outs):
        assert a.read_bytes() == b.read_bytes()


def test_malformed_config_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "id": "x",\n\n  "grid": [1,,2]\n}')
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "line 4" in capsys.readouterr().err


@pytest.mark.parametrize("doc,msg", [
    ({**SIM, "colour": 1}, "unknown field"),
    ({k: v for k, v in SIM.items() if k != "set"}, "missing field 'set'"),
    ({**SIM, "solver": {"dt": 0.01, "horizon": 1, "snapshot_every": 1}}, "explicit bound"),
    ({**SIM, "solver": {"dt": 0.001, "horizon": 1}}, "snapshot_every"),
    ({**SIM, "set": {"kind": "blob"}}, "blob"),
])
def test_bad_config_fields(tmp_path, capsys, doc, msg):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(doc))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert msg in capsys.readouterr().err


def test_fronts_profile_prints_residual(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["fronts", "profile", "--reaction", "logistic", "--c", "2", "--output", str(out)]) == 0
    line = capsys.readouterr().out
    res = float(line.split("residual=")[1].split()[0])
    assert res <= 1e-6 and "monotone=True" in line
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape[1] >= 2 and np.all(np.diff(data[:, 1]) < 0)


def test_fronts_supersolution_json(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["fronts", "supersolution", "--c", "3", "--lam", "0.1", "--T", "10", "--output", str(out)]) == 0
    assert json.loads(out.read_text())


def test_fronts_bad_speed_exit_2(capsys):
    assert main(["fronts", "profile", "--c", "1"]) == 2


def test_geometry_opening_vshape(tmp_path, capsys):
    """[DERIVED] brute-force oracle over sampled set points and both projections."""
    U = VShape(beta=1.0)
    path = tmp_path / "vshape.json"
    save_descriptor(U, path)
    assert main(["geometry", "opening", "--set", str(path), "--point", "0,4"]) == 0
    got = float(capsys.readouterr().out)
    ref = opening_brute(U, np.array([0.0, 4.0]), U.projections([0.0, 4.0]).points, 720, 200, 0.01, 50.0)
    assert got == pytest.approx(ref, abs=1e-2)
    assert got == pytest.approx(1.0, abs=1e-2)


def test_geometry_bad_point(tmp_path, capsys):
    path = tmp_path / "vshape.json"
    save_descriptor(VShape(beta=1.0), path)
    assert main(["geometry", "opening", "--set", str(path), "--point", "0,4,1"]) == 2
    assert main(["geometry", "opening", "--set", str(path), "--point", "a,b"]) == 2
    assert main(["geometry", "opening", "--set", str(tmp_path / "missing.json"), "--point", "0,4"]) == 2


def test_scenario_list(capsys):
    assert main(["scenario", "list"]) == 0
    out = capsys.readouterr().out
    assert [ln.split("\t")[0] for ln in out.strip().splitlines()] == [
        "convex-2d", "directional-subgraph", "lattice-balls-2d", "uniform-spreading", "vgm-subgraph-2d",
        "vshape-2d"]


def _scenario_file(tmp_path, doc):
    p = tmp_path / f"{doc['id']}.json"
    p.write_text(json.dumps(doc))
    return p


def test_scenario_exit_codes(tmp_path, capsys):
    ok = _scenario_file(tmp_path, TINY)
    bad = copy.deepcopy(TINY)
    bad["id"] = "tiny-fail"
    bad["plan"][0]["predicate"] = {"kind": "at_least", "value": 1.0}
    bad = _scenario_file(tmp_path, bad)
    out = tmp_path / "out"
    assert main(["scenario", "run", str(ok), "--out", str(out)]) == 0
    assert main(["scenario", "run", str(bad), "--out", str(out)]) == 1
    assert main(["scenario", "run", "no-such-id", "--out", str(out)]) == 2
    assert main(["scenario", "run", "--out", str(out)]) == 2
    for sid in ("tiny-ball", "tiny-fail"):
        runs = list((out / sid).iterdir())
        assert len(runs) == 1 and len(list(runs[0].glob("manifest.json"))) == 1


def test_diagnose_speed(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({**SIM, "grid": {"lower": [0], "upper": [120], "h": 0.1},
                               "solver": {"dt": 0.002, "horizon": 40, "snapshot_every": 1}}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    snaps = _only_dir(tmp_path / "o") / "snapshots"
    capsys.readouterr()
    assert main(["diagnose", "speed", "--snapshots", str(snaps), "--t-min", "6", "--out", str(tmp_path / "d")]) == 0
    speed = float(capsys.readouterr().out.split("speed=")[1].split()[0])
    assert 1.8 < speed < 2.1
    assert (tmp_path / "d" / "speed.json").exists()
    assert main(["diagnose", "speed", "--snapshots", str(tmp_path)]) == 2
