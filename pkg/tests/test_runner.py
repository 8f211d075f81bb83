import hashlib
import json
import math

import numpy as np
import pytest

from odlab import crescent_scene
from odlab.checks import CRITERIA
from odlab.cli import main
from odlab.config import DEFAULT, Thresholds
from odlab.errors import PreconditionError, SceneError, UnsupportedError
from odlab.render import render_svg
from odlab.runner import SCHEMA, ExperimentConfig, determinism_probe, run, write_atomic


def _cfg(tmp_path, commands, scene="builtin:disk", h=0.02, **kw):
    return ExperimentConfig(scene, h, commands, tmp_path / "out", **kw)


def test_disk_solve_singular_report(tmp_path):
    rep = run(_cfg(tmp_path, ["solve", "singular", "report"]))
    out = tmp_path / "out"
    for name in ("field.csv", "singular.csv", "report.json"):
        assert (out / name).exists()
    data = json.loads((out / "report.json").read_text())
    assert data["schema"] == SCHEMA
    assert set(CRITERIA) <= set(data["verdicts"])
    assert data["verdicts"]["c03_singular_on_hull_boundary"]["status"] == "pass"
    assert data["verdicts"]["c11_involute_curvature"]["status"] == "inconclusive"
    assert "metric_convention" in data["notes"] and "involute_parameterization" in data["notes"]
    assert data["provenance"]["version"]
    assert rep.ok


def test_free_scene_scan(tmp_path):
    rep = run(_cfg(tmp_path, ["solve", "scscan", "report"], scene="builtin:free"))
    fits = json.loads((tmp_path / "out" / "fits.json").read_text())
    assert fits["interior"]["alpha_hat"] >= 0.9
    assert rep.metrics["n_singular"] == 0


def test_missing_scene_leaves_nothing(tmp_path):
    with pytest.raises(SceneError):
        run(ExperimentConfig(str(tmp_path / "nope.json"), 0.02, ["solve"], tmp_path / "out"))
    assert not (tmp_path / "out").exists()


def test_cli_missing_scene_exit_code(tmp_path, capsys):
    code = main(["solve", "--scene", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code != 0
    assert not (tmp_path / "o").exists()
    assert "not found" in capsys.readouterr().err


def test_malformed_scene_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"k0": [2, 0],\n "bbox": [[-3, -3], [3, 3]],\n}')
    code = main(["solve", "--scene", str(p), "--out", str(tmp_path / "o")])
    assert code != 0
    assert "line 3" in capsys.readouterr().err


@pytest.mark.parametrize("h", [5e-5, 0.2])
def test_resolution_bounds(tmp_path, h):
    with pytest.raises(PreconditionError):
        run(_cfg(tmp_path, ["solve"], h=h))


def test_bad_commands(tmp_path):
    with pytest.raises(PreconditionError):
        run(_cfg(tmp_path, []))
    with pytest.raises(PreconditionError):
        run(_cfg(tmp_path, ["solve", "teleport"]))
    with pytest.raises(PreconditionError):
        run(_cfg(tmp_path, ["solve"], fmt="png"))


def test_report_bytes_are_deterministic(tmp_path):
    a = run(_cfg(tmp_path / "a", ["solve", "singular", "flow", "report"]))
    b = run(_cfg(tmp_path / "b", ["solve", "singular", "flow", "report"]))
    ra = (tmp_path / "a" / "out" / "report.json").read_bytes()
    rb = (tmp_path / "b" / "out" / "report.json").read_bytes()
    assert ra == rb
    assert a.verdicts == b.verdicts
    for name in ("field.csv", "singular.csv", "arcs.ndjson"):
        assert (tmp_path / "a" / "out" / name).read_bytes() == (tmp_path / "b" / "out" / name).read_bytes()


def test_determinism_probe_is_stable():
    assert hashlib.sha256(determinism_probe(0)).digest() == hashlib.sha256(determinism_probe(0)).digest()


def test_config_hash_tracks_thresholds(tmp_path):
    a = run(_cfg(tmp_path / "a", ["solve"]))
    b = run(_cfg(tmp_path / "b", ["solve"], thresholds=DEFAULT.with_overrides(["p_eps=0.1"])))
    assert a.provenance["config_hash"] != b.provenance["config_hash"]
    assert b.provenance["config"]["thresholds"]["p_eps"] == 0.1


def test_all_commands_and_formats(tmp_path):
    rep = run(_cfg(tmp_path, ["solve", "oracle", "minimize", "singular", "flow", "scscan", "render", "report"],
                   fmt="bin", n_samples=3))
    out = tmp_path / "out"
    expected = {"field.csv", "field.bin", "oracle.json", "oracle.csv", "paths.ndjson", "energy.csv", "singular.csv",
                "arcs.ndjson", "fits.json", "field.svg", "report.json"}
    assert expected <= set(rep.artifacts)
    assert (out / "field.bin").read_bytes()[:4] == b"ODLF"
    for line in (out / "paths.ndjson").read_text().splitlines():
        row = json.loads(line)
        assert "tau" in row or "error" in row
    oracle = json.loads((out / "oracle.json").read_text())
    assert oracle["mirror_point"]["d"] == pytest.approx(2 * math.sqrt(3) + math.pi / 3)
    assert oracle["mirror_point"]["n_minimizers"] == 2
    assert (out / "field.svg").read_text().startswith("<svg")
    timings = json.loads((out / "timings.json").read_text())
    assert set(timings) == {"solve", "oracle", "minimize", "singular", "flow", "scscan", "render", "report"}


def test_partial_failure_writes_manifest(tmp_path, monkeypatch):
    import odlab.runner as runner

    def boom(*a, **k):
        raise runner.TraceError("synthetic failure")

    monkeypatch.setattr(runner, "integrate_singular_flow", boom)
    rep = run(_cfg(tmp_path, ["solve", "flow", "report"]))
    assert rep.errors and rep.errors[0]["command"] == "flow"
    manifest = json.loads((tmp_path / "out" / "errors.json").read_text())
    assert "field.csv" in manifest["completed"]
    assert not (tmp_path / "out" / "report.json").exists()


def test_coarse_grid_misses_are_inconclusive(tmp_path):
    rep = run(_cfg(tmp_path, ["solve", "singular"], h=0.04))
    assert all(v["status"] != "fail" for v in rep.verdicts.values())


def test_write_atomic_leaves_no_temp(tmp_path):
    write_atomic(tmp_path / "a.txt", "x")
    write_atomic(tmp_path / "b.bin", b"\x00\x01")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt", "b.bin"]


def test_cli_run_and_thresholds(tmp_path, capsys):
    code = main(["solve", "singular", "report", "--resolution", "0.02", "--out", str(tmp_path / "o"),
                 "--threshold", "cluster_deg=12", "--seed", "3"])
    assert code == 0
    out = capsys.readouterr().out
    assert "c03_singular_on_hull_boundary" in out
    data = json.loads((tmp_path / "o" / "report.json").read_text())
    assert data["provenance"]["config"]["thresholds"]["cluster_deg"] == 12.0
    assert main(["solve", "--threshold", "nonsense=1", "--out", str(tmp_path / "p")]) != 0
    assert main(["--out", str(tmp_path / "q")]) == 2


def test_threshold_overrides():
    t = DEFAULT.with_overrides({"flow_lost_steps": "5", "jump_deg": "15.5"})
    assert t.flow_lost_steps == 5 and isinstance(t.flow_lost_steps, int)
    assert t.jump_deg == 15.5
    assert DEFAULT == Thresholds()
    with pytest.raises(PreconditionError):
        DEFAULT.with_overrides(["p_eps"])
    with pytest.raises(PreconditionError):
        DEFAULT.with_overrides(["p_eps=abc"])


def test_render_is_deterministic(disk, coarse_disk_field, tmp_path):
    mask = np.zeros(coarse_disk_field.grid.dims, bool)
    a = render_svg(disk, coarse_disk_field, mask)
    b = render_svg(disk, coarse_disk_field, mask, path=tmp_path / "f.svg")
    assert a == b == (tmp_path / "f.svg").read_text()
    assert 'fill="#cc0000"' not in a  # empty mask: no highlight layer
    mask[10, 10] = True
    c = render_svg(disk, coarse_disk_field, mask, arcs=[np.array([[-2.0, 0.0], [-2.9, 0.0]])])
    assert 'fill="#cc0000"' in c and "<polyline" in c
    assert c.strip().endswith("</svg>")


def test_render_rejects_non_planar(disk, coarse_disk_field):
    with pytest.raises(UnsupportedError):
        render_svg(disk, coarse_disk_field, np.zeros((3, 3, 3), bool))
    with pytest.raises(UnsupportedError):
        render_svg(disk, None, arcs=[np.zeros(5)])


def test_render_crescent_without_field():
    text = render_svg(crescent_scene())
    assert "<polygon" in text and "<circle" in text
