"""Two-stage pipeline glue: anchor mining, then multi-anchor tracking."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from anchorvos.anchors import Anchor, PromptSchedule, build_schedule, select_anchors
from anchorvos.config import PipelineConfig
from anchorvos.featurepool import MatchScore, TargetFeaturePool, build_pool, score_all
from anchorvos.maskmedia import rle_encode
from anchorvos.metrics import VideoMetrics, evaluate_video
from anchorvos.tracker import TrackResult, propagate

MODES = ("baseline", "mined")


@dataclass
class MiningResult:
    pool: TargetFeaturePool
    scored: list[MatchScore]
    anchors: list[Anchor]
    schedule: PromptSchedule

    def scores_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "id", "score", "best_transform"])
        for m in self.scored:
            w.writerow([m.candidate.frame_idx, m.candidate.instance_id, repr(m.score), m.best_transform.value])
        return buf.getvalue()


def mine(
    frames: Sequence[np.ndarray],
    first_mask: np.ndarray,
    detector,
    embedder,
    cfg: PipelineConfig,
    video_id: str = "video",
    pool: Optional[TargetFeaturePool] = None,
) -> MiningResult:
    if pool is None:
        pool = build_pool(
            frames[0], first_mask, embedder, cfg.transforms(), cfg.pool.pad_ratio, cfg.pool.patch_side
        )
    candidates = detector.detect(frames, first_mask)
    scored = score_all(frames, candidates, pool, embedder, cfg.pool.pad_ratio, cfg.pool.patch_side)
    anchors = select_anchors(scored, cfg.selection())
    schedule = build_schedule(video_id, rle_encode(first_mask), anchors)
    return MiningResult(pool, scored, anchors, schedule)


def track(frames, schedule: PromptSchedule, detector, embedder, cfg: PipelineConfig) -> TrackResult:
    return propagate(frames, schedule, detector, embedder, cfg.tracker_params())


def evaluate(result: TrackResult, gt_masks: Sequence[np.ndarray], cfg: PipelineConfig, video="video", obj="target"):
    preds = [result.dense(t) for t in range(len(result.masks))]
    return evaluate_video(preds, gt_masks, cfg.metrics.boundary_tol, video, obj)


@dataclass
class ComparisonResult:
    mining: MiningResult
    tracks: dict[str, TrackResult]
    metrics: dict[str, Optional[VideoMetrics]]


def compare_modes(
    frames,
    first_mask: np.ndarray,
    detector,
    embedder,
    cfg: PipelineConfig,
    gt_masks: Optional[Sequence[np.ndarray]] = None,
    video_id: str = "video",
    obj: str = "target",
) -> ComparisonResult:
    """Track with the first-frame-only schedule and with the mined one."""
    mining = mine(frames, first_mask, detector, embedder, cfg, video_id)
    schedules = {
        "baseline": build_schedule(video_id, rle_encode(first_mask), []),
        "mined": mining.schedule,
    }
    tracks = {m: track(frames, schedules[m], detector, embedder, cfg) for m in MODES}
    metrics = {
        m: (evaluate(tracks[m], gt_masks, cfg, video_id, obj) if gt_masks is not None else None) for m in MODES
    }
    return ComparisonResult(mining, tracks, metrics)
