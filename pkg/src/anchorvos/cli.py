"""Command-line entry point: ``anchorvos {synth,mine,track,eval,run}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error.  Every command writes ``<command>.manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np

from anchorvos import __version__
from anchorvos.anchors import PromptSchedule, build_schedule
from anchorvos.backends import FileDetector, FileEmbedder, OracleDetector, PatchEmbedder
from anchorvos.config import PipelineConfig, load_config
from anchorvos.errors import DataError, LengthMismatch, ParseError, UsageError
from anchorvos.featurepool import TargetFeaturePool
from anchorvos.maskmedia import list_pngs, read_mask, rle_encode, write_frame, write_mask
from anchorvos.metrics import F_LABEL, aggregate, evaluate_video, format_metrics
from anchorvos.overlay import render_overlay
from anchorvos.pipeline import MODES, mine, track
from anchorvos.synthgen import FAMILIES, generate, load_frames, load_gt, preset, save_dataset

log = logging.getLogger("anchorvos")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- run manifest --------------------------------------------------------------


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


class RunManifest:
    def __init__(self, command: str, cfg: PipelineConfig, inputs: dict):
        self.command = command
        self.cfg = cfg
        self.inputs = {k: (str(v) if v is not None else None) for k, v in inputs.items()}
        self.timings: dict[str, float] = {}
        self.collector = _WarningCollector()

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - start, 6)

    def write(self, directory) -> Path:
        doc = {
            "format_version": 1,
            "kind": "run_manifest",
            "command": self.command,
            "tool_version": __version__,
            "config": self.cfg.to_dict(),
            "inputs": self.inputs,
            "timings_s": self.timings,
            "warnings": self.collector.messages,
        }
        return write_json_atomic(Path(directory) / f"{self.command}.manifest.json", doc)


def write_json_atomic(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp, path)
    return path


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# --- shared helpers ------------------------------------------------------------


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "boundary_tol", None) is not None:
        cfg.metrics.boundary_tol = args.boundary_tol
        cfg.validate()
    return cfg


def _frames(directory) -> list[np.ndarray]:
    frames = load_frames(directory)
    if not frames:
        raise DataError(f"no PNG frames in {directory}")
    return frames


def _detector(args, cfg: PipelineConfig):
    if args.detections:
        return FileDetector.load(args.detections)
    gt = load_gt(args.oracle)
    return OracleDetector(gt.masks, cfg.jitter())


def _embedder(args, cfg: PipelineConfig):
    if getattr(args, "embeddings", None):
        return FileEmbedder.load(args.embeddings)
    return PatchEmbedder(cfg.pool.patch_side)


def _write_masks(directory: Path, result) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for t in range(len(result.masks)):
        write_mask(directory / f"{t:05d}.png", result.dense(t))


def _add_backend_flags(p, required_detector=True):
    det = p.add_mutually_exclusive_group(required=required_detector)
    det.add_argument("--detections", help="JSON Lines detections file")
    det.add_argument("--oracle", metavar="GT_DIR", help="oracle detector over a ground-truth directory (gt/<id>/)")
    emb = p.add_mutually_exclusive_group()
    emb.add_argument("--embeddings", help="JSON Lines embeddings file")
    emb.add_argument("--patch-embed", action="store_true", help="built-in patch descriptor (default)")


# --- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    man = RunManifest("synth", cfg, {"family": args.family, "out": out})
    with man.stage("generate"):
        sc = preset(args.family, cfg.seed, cfg.synth.width, cfg.synth.height, cfg.synth.num_frames)
        frames, gt = generate(sc)
    with man.stage("write"):
        save_dataset(out, sc, frames, gt)
    man.write(out)
    return 0


def _mine_to(out_schedule: Path, frames, first_mask, detector, embedder, cfg, video, pool=None):
    res = mine(frames, first_mask, detector, embedder, cfg, video, pool)
    if not res.anchors:
        reason = "k=0" if cfg.select.k == 0 else f"no candidate passed theta={cfg.select.theta}"
        log.warning("%s; schedule holds the first frame only", reason)
    write_json(out_schedule, res.schedule.to_json())
    (out_schedule.parent / "scores.csv").write_text(res.scores_csv(), encoding="utf-8")
    write_json(out_schedule.parent / "pool.json", res.pool.to_json())
    return res


def cmd_mine(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    man = RunManifest("mine", cfg, vars(args))
    logging.getLogger().addHandler(man.collector)
    try:
        with man.stage("load"):
            frames = _frames(args.frames)
            first_mask = read_mask(args.first_mask)
            if first_mask.shape != frames[0].shape[:2]:
                raise DataError(f"first mask {first_mask.shape} does not match frame size {frames[0].shape[:2]}")
            detector = _detector(args, cfg)
            embedder = _embedder(args, cfg)
            pool = None
            if args.pool:
                pool = TargetFeaturePool.from_json(json.loads(Path(args.pool).read_text(encoding="utf-8")))
        with man.stage("mine"):
            _mine_to(out, frames, first_mask, detector, embedder, cfg, args.video or Path(args.frames).parent.name, pool)
    finally:
        logging.getLogger().removeHandler(man.collector)
    man.write(out.parent)
    return 0


def _load_schedule(path) -> PromptSchedule:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", exc.lineno, str(path)) from None
    return PromptSchedule.from_json(doc)


def _write_track(out: Path, result) -> None:
    _write_masks(out / "pred", result)
    write_json(out / "track.json", result.to_json())


def cmd_track(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    man = RunManifest("track", cfg, vars(args))
    with man.stage("load"):
        frames = _frames(args.frames)
        schedule = _load_schedule(args.schedule)
        detector = _detector(args, cfg)
        embedder = _embedder(args, cfg)
    with man.stage("track"):
        result = track(frames, schedule, detector, embedder, cfg)
    with man.stage("write"):
        _write_track(out, result)
    man.write(out)
    return 0


def _resolve_gt_dir(gt: Path) -> Path:
    meta = gt / "scenario.json"
    if meta.exists():
        return gt / "gt" / json.loads(meta.read_text())["target_id"]
    return gt


def _resolve_pred_dir(pred: Path) -> Path:
    return pred / "pred" if (pred / "pred").is_dir() else pred


def _load_pairs(pred_dir: Path, gt_dir: Path):
    gt_files = list_pngs(gt_dir)
    if not gt_files:
        raise DataError(f"no ground-truth PNGs in {gt_dir}")
    pred_names = {p.name for p in list_pngs(pred_dir)}
    for p in gt_files:
        if p.name not in pred_names:
            raise DataError(f"missing prediction for frame {p.name} in {pred_dir}")
    if len(pred_names) != len(gt_files):
        raise LengthMismatch(f"{len(pred_names)} predicted frames vs {len(gt_files)} ground-truth frames")
    return [read_mask(pred_dir / p.name) for p in gt_files], [read_mask(p) for p in gt_files]


def _write_report(path: Path, report) -> None:
    if path.suffix.lower() == ".csv":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.to_csv(), encoding="utf-8")
    else:
        write_json(path, report.to_json())


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    man = RunManifest("eval", cfg, vars(args))
    with man.stage("evaluate"):
        gt_dir = _resolve_gt_dir(Path(args.gt))
        preds, gts = _load_pairs(_resolve_pred_dir(Path(args.pred)), gt_dir)
        video = args.video or gt_dir.parent.parent.name or "video"
        m = evaluate_video(preds, gts, cfg.metrics.boundary_tol, video, gt_dir.name)
        report = aggregate([m])
    _write_report(out, report)
    print(format_metrics(m))
    man.write(out.parent)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    man = RunManifest("run", cfg, vars(args))
    logging.getLogger().addHandler(man.collector)
    try:
        code = _run(args, cfg, out, man)
    finally:
        logging.getLogger().removeHandler(man.collector)
    man.write(out)
    return code


def _run(args, cfg: PipelineConfig, out: Path, man: RunManifest) -> int:
    gt_masks = None
    obj = "target"
    if args.family:
        with man.stage("synth"):
            sc = preset(args.family, cfg.seed, cfg.synth.width, cfg.synth.height, cfg.synth.num_frames)
            frames, gt = generate(sc)
            save_dataset(out / "data", sc, frames, gt)
        first_mask = gt.target_masks()[0]
        gt_masks = gt.target_masks()
        obj = gt.target_id
        detector = OracleDetector(gt.masks, cfg.jitter())
        embedder = PatchEmbedder(cfg.pool.patch_side)
        video = args.video or f"{args.family}-{cfg.seed}"
    else:
        if not (args.frames and args.first_mask and args.detections):
            raise UsageError("run needs --family, or --frames with --first-mask and --detections")
        frames = _frames(args.frames)
        first_mask = read_mask(args.first_mask)
        detector = FileDetector.load(args.detections)
        embedder = _embedder(args, cfg)
        video = args.video or Path(args.frames).parent.name
        if args.gt:
            gt_dir = _resolve_gt_dir(Path(args.gt))
            gt_masks = [read_mask(p) for p in list_pngs(gt_dir)]
            obj = gt_dir.name

    with man.stage("mine"):
        res = _mine_to(out / "mine" / "schedule.json", frames, first_mask, detector, embedder, cfg, video)
    schedules = {"baseline": build_schedule(video, rle_encode(first_mask), []), "mined": res.schedule}
    tracks = {}
    for mode in MODES:
        with man.stage(f"track_{mode}"):
            tracks[mode] = track(frames, schedules[mode], detector, embedder, cfg)
            write_json(out / mode / "schedule.json", schedules[mode].to_json())
            _write_track(out / mode, tracks[mode])

    report = {
        "format_version": 1,
        "video": video,
        "object": obj,
        "f_definition": F_LABEL,
        "anchors": {m: schedules[m].frames() for m in MODES},
        "rows": [],
    }
    if gt_masks is not None:
        with man.stage("eval"):
            metrics = {}
            for mode in MODES:
                preds = [tracks[mode].dense(t) for t in range(len(frames))]
                metrics[mode] = evaluate_video(preds, gt_masks, cfg.metrics.boundary_tol, video, obj)
                report["rows"].append({"mode": mode, **metrics[mode].row()})
                print(format_metrics(metrics[mode], mode))
        csv_rows = aggregate([metrics["baseline"], metrics["mined"]]).to_csv().splitlines()
        lines = ["mode," + csv_rows[0]] + [f"{m},{row}" for m, row in zip(MODES, csv_rows[1:3])]
        (out / "report.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(out / "report.json", report)

    if args.overlays:
        with man.stage("overlays"):
            try:
                _write_overlays(out / "overlays", frames, tracks, schedules, gt_masks)
            except Exception as exc:  # best effort: never changes the exit status
                log.warning("overlay emission failed: %s", exc)
    return 0


def _write_overlays(root: Path, frames, tracks, schedules, gt_masks) -> None:
    for mode in MODES:
        d = root / mode
        d.mkdir(parents=True, exist_ok=True)
        anchor_frames = set(schedules[mode].frames())
        for t, frame in enumerate(frames):
            gt = gt_masks[t] if gt_masks is not None else None
            img = render_overlay(frame, tracks[mode].dense(t), gt, t in anchor_frames)
            write_frame(d / f"{t:05d}.png", img)


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anchorvos", description="Anchor mining and multi-anchor re-prompting for video object segmentation.")
    p.add_argument("--version", action="version", version=f"anchorvos {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic video with ground truth")
    s.add_argument("--family", required=True, choices=FAMILIES)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("mine", help="stage 1: build the target pool, score candidates, select anchors")
    m.add_argument("--frames", required=True, help="directory of frame PNGs")
    m.add_argument("--first-mask", required=True, help="first-frame target mask PNG")
    _add_backend_flags(m)
    m.add_argument("--pool", help="precomputed target pool JSON (skips pool building)")
    m.add_argument("--config")
    m.add_argument("--seed", type=int)
    m.add_argument("--video")
    m.add_argument("--out", required=True, help="schedule JSON path")
    m.set_defaults(func=cmd_mine)

    t = sub.add_parser("track", help="stage 2: propagate from the prompt schedule")
    t.add_argument("--frames", required=True)
    t.add_argument("--schedule", required=True)
    _add_backend_flags(t)
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="J, F, J&F and disappearance/reappearance composites")
    e.add_argument("--pred", required=True, help="prediction PNG directory (or a track output directory)")
    e.add_argument("--gt", required=True, help="ground-truth PNG directory (or a synth output directory)")
    e.add_argument("--config")
    e.add_argument("--video")
    e.add_argument("--boundary-tol", type=float, help="boundary match tolerance in pixels (default: ceil(0.8%% of the diagonal))")
    e.add_argument("--out", required=True, help="report path, .json or .csv")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="synth (optional) -> mine -> track both modes -> eval -> report")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", choices=FAMILIES)
    src.add_argument("--frames")
    r.add_argument("--first-mask")
    r.add_argument("--detections")
    emb = r.add_mutually_exclusive_group()
    emb.add_argument("--embeddings")
    emb.add_argument("--patch-embed", action="store_true")
    r.add_argument("--gt")
    r.add_argument("--seed", type=int)
    r.add_argument("--config")
    r.add_argument("--video")
    r.add_argument("--boundary-tol", type=float, help="boundary match tolerance in pixels")
    r.add_argument("--overlays", action="store_true", help="write overlay PNGs per mode")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"anchorvos {args.command}: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"anchorvos {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
