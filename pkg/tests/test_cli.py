import json
import subprocess
import sys

import numpy as np
import pytest

from anchorvos.cli import main
from anchorvos.maskmedia import list_pngs, read_mask, rle_decode, write_mask
from anchorvos.anchors import PromptSchedule


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--family", "combined", "--seed", "1", "--out", str(root / "d")]) == 0
    return root / "d"


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_layout_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--family", "baseline", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    a.pop("synth.manifest.json")
    b.pop("synth.manifest.json")
    assert a == b
    assert "scenario.json" in a and "frames/00000.png" in a and "gt/target/00119.png" in a


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--family", "nope", "--out", str(tmp_path)])
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err
    cfg = tmp_path / "c.yaml"
    cfg.write_text("synth:\n  num_frames: 1\n")
    assert main(["synth", "--family", "baseline", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    assert "num_frames" in capsys.readouterr().err
    cfg.write_text("select:\n  nope: 1\n")
    assert main(["synth", "--family", "baseline", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1


def test_mine_track_eval(dataset, tmp_path):
    first = dataset / "gt" / "target" / "00000.png"
    sched = tmp_path / "m" / "schedule.json"
    args = ["--frames", str(dataset / "frames"), "--oracle", str(dataset / "gt")]
    assert main(["mine", "--first-mask", str(first), *args, "--patch-embed", "--out", str(sched)]) == 0
    s = PromptSchedule.from_json(json.loads(sched.read_text()))
    frames = s.frames()
    assert frames[0] == 0 and s.anchors[0].source == "first_frame"
    assert 1 <= len(s.mined) <= 3
    assert all(abs(a - b) > 15 for i, a in enumerate(frames[1:]) for b in frames[i + 2 :])
    header = (tmp_path / "m" / "scores.csv").read_text().splitlines()[0]
    assert header == "frame,id,score,best_transform"
    assert (tmp_path / "m" / "pool.json").exists() and (tmp_path / "m" / "mine.manifest.json").exists()

    out = tmp_path / "t"
    assert main(["track", *args, "--schedule", str(sched), "--out", str(out)]) == 0
    for a in s.anchors:
        assert np.array_equal(read_mask(out / "pred" / f"{a.frame_idx:05d}.png"), rle_decode(a.mask))
    track = json.loads((out / "track.json").read_text())
    assert track["format_version"] == 1 and len(track["frames"]) == 120

    assert main(["eval", "--pred", str(out), "--gt", str(dataset), "--out", str(tmp_path / "e.json")]) == 0
    rep = json.loads((tmp_path / "e.json").read_text())
    assert rep["summary"]["J&F"] > 0.5
    assert main(["eval", "--pred", str(out), "--gt", str(dataset), "--out", str(tmp_path / "e.csv")]) == 0
    assert (tmp_path / "e.csv").read_text().splitlines()[-1].startswith("dataset,")

    # the pool written by mine can be replayed
    again = tmp_path / "m2" / "schedule.json"
    pool = tmp_path / "m" / "pool.json"
    assert main(["mine", "--first-mask", str(first), *args, "--pool", str(pool), "--out", str(again)]) == 0
    assert again.read_bytes() == sched.read_bytes()


def test_eval_identity_and_missing_frame(dataset, tmp_path, capsys):
    gt = dataset / "gt" / "target"
    assert main(["eval", "--pred", str(gt), "--gt", str(gt), "--out", str(tmp_path / "r.json")]) == 0
    summary = json.loads((tmp_path / "r.json").read_text())["summary"]
    assert all(summary[k] == 1.0 for k in ("J", "F", "J&F", "J&F_d", "J&F_r"))
    pred = tmp_path / "pred"
    pred.mkdir()
    for p in list_pngs(gt):
        if p.name != "00007.png":
            (pred / p.name).write_bytes(p.read_bytes())
    assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--out", str(tmp_path / "r2.json")]) == 2
    assert "00007.png" in capsys.readouterr().err
    extra = tmp_path / "extra"
    extra.mkdir()
    for p in list_pngs(gt):
        (extra / p.name).write_bytes(p.read_bytes())
    write_mask(extra / "00999.png", np.zeros((128, 128), bool))
    assert main(["eval", "--pred", str(extra), "--gt", str(gt), "--out", str(tmp_path / "r3.json")]) == 2


def test_mine_zero_and_k0(dataset, tmp_path, caplog):
    first = dataset / "gt" / "target" / "00000.png"
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "a" / "schedule.json"
    assert main(["mine", "--frames", str(dataset / "frames"), "--first-mask", str(first), "--detections", str(empty), "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["anchors"]) == 1
    assert "first frame only" in caplog.text
    manifest = json.loads((tmp_path / "a" / "mine.manifest.json").read_text())
    assert manifest["warnings"]

    cfg = tmp_path / "k0.yaml"
    cfg.write_text("select:\n  k: 0\n")
    out = tmp_path / "b" / "schedule.json"
    args = ["--frames", str(dataset / "frames"), "--first-mask", str(first), "--oracle", str(dataset / "gt")]
    assert main(["mine", *args, "--config", str(cfg), "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["anchors"]) == 1


def test_format_errors(dataset, tmp_path, capsys):
    first = dataset / "gt" / "target" / "00000.png"
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"frame": 1}\n\n{broken\n')
    args = ["--frames", str(dataset / "frames"), "--first-mask", str(first)]
    assert main(["mine", *args, "--detections", str(bad), "--out", str(tmp_path / "s.json")]) == 2
    assert "line 1" in capsys.readouterr().err
    # schedule referencing a frame past the end of the video
    sched = json.loads(json.dumps({"format_version": 1, "video": "v", "anchors": []}))
    mask = {"size": [128, 128], "counts": [128 * 128]}
    sched["anchors"] = [
        {"frame": 0, "score": 1.0, "source": "first_frame", "rle": {"size": [128, 128], "counts": [0, 128 * 128]}},
        {"frame": 500, "score": 0.9, "source": "mined", "rle": mask},
    ]
    sp = tmp_path / "sched.json"
    sp.write_text(json.dumps(sched))
    track = ["track", "--frames", str(dataset / "frames"), "--oracle", str(dataset / "gt"), "--out", str(tmp_path / "t")]
    assert main([*track, "--schedule", str(sp)]) == 2
    sp.write_text("{not json")
    assert main([*track, "--schedule", str(sp)]) == 2
    with pytest.raises(SystemExit) as info:
        main(["track", "--frames", "x", "--schedule", "y", "--out", "z"])
    assert info.value.code == 1


def test_run_end_to_end_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--family", "combined", "--seed", "1", "--out", str(tmp_path / name), "--overlays"]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    for mode in ("baseline", "mined"):
        assert tree_bytes(a / mode) == tree_bytes(b / mode)
    report = json.loads((a / "report.json").read_text())
    assert report["format_version"] == 1
    rows = {r["mode"]: r for r in report["rows"]}
    assert set(rows) == {"baseline", "mined"}
    for r in rows.values():
        assert {"J", "F", "J&F", "J&F_d", "J&F_r", "n_frames"} <= set(r)
    assert rows["mined"]["J&F"] > rows["baseline"]["J&F"]
    assert len(list_pngs(a / "overlays" / "mined")) == 120
    manifest = json.loads((a / "run.manifest.json").read_text())
    assert manifest["kind"] == "run_manifest" and manifest["config"]["seed"] == 1
    assert set(manifest["timings_s"]) >= {"synth", "mine", "eval"}

    # replaying the manifest reproduces the run
    c = tmp_path / "c"
    assert main(["run", "--family", "combined", "--config", str(a / "run.manifest.json"), "--out", str(c)]) == 0
    assert (c / "report.json").read_bytes() == (a / "report.json").read_bytes()


def test_run_baseline_family_no_harm(tmp_path):
    assert main(["run", "--family", "baseline", "--seed", "2", "--out", str(tmp_path)]) == 0
    rows = {r["mode"]: r for r in json.loads((tmp_path / "report.json").read_text())["rows"]}
    assert abs(rows["mined"]["J&F"] - rows["baseline"]["J&F"]) <= 0.01


def test_run_from_files(dataset, tmp_path):
    from anchorvos.backends import OracleDetector, write_detections
    from anchorvos.synthgen import load_gt

    gt = load_gt(dataset / "gt")
    dets = [c for per in OracleDetector(gt.masks).detect([None] * len(gt.masks), None, True) for c in per]
    write_detections(tmp_path / "d.jsonl", dets)
    out = tmp_path / "r"
    args = ["run", "--frames", str(dataset / "frames"), "--first-mask", str(dataset / "gt" / "target" / "00000.png")]
    assert main([*args, "--detections", str(tmp_path / "d.jsonl"), "--gt", str(dataset), "--out", str(out)]) == 0
    assert len(json.loads((out / "report.json").read_text())["rows"]) == 2
    assert main(["run", "--frames", str(dataset / "frames"), "--out", str(tmp_path / "q")]) == 1


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "anchorvos.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("synth", "mine", "track", "eval", "run"):
        assert cmd in res.stdout
