"""Region similarity J, dilated-boundary F, and disappearance/reappearance composites.

Conventions:

* A frame whose ground truth is empty scores J = F = 1 if the prediction is
  empty too, and 0 otherwise.
* Frame 0 carries the prompt and is left out of every mean.
* ``jf_d`` averages ``(J + F) / 2`` over evaluated frames with empty ground
  truth; ``jf_r`` does the same over non-empty frames that come after the
  first empty-ground-truth frame.  Either is ``None`` when its subset is empty.
* F is the classical boundary F-measure with a pixel tolerance, labelled
  "F (dilated-boundary)" in reports.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from anchorvos.errors import DimensionMismatch, EmptyDataset, LengthMismatch
from anchorvos.maskmedia import boundary, dilate, iou

F_LABEL = "F (dilated-boundary)"
CSV_COLUMNS = ["video", "object", "J", "F", "J&F", "J&F_d", "J&F_r", "n_frames", "n_disappear", "n_reappear"]


def default_boundary_tol(height: int, width: int) -> int:
    return int(math.ceil(0.008 * math.hypot(height, width)))


def region_j(pred: np.ndarray, gt: np.ndarray) -> float:
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if not gt.any():
        return 0.0 if pred.any() else 1.0
    return iou(pred, gt)


@dataclass(frozen=True)
class BoundaryScore:
    precision: float
    recall: float
    f: float


def _window(a: np.ndarray, b: np.ndarray, tolerance: float):
    # Restrict to the union box plus a margin; the margin keeps every mask
    # pixel off the window edge unless it already sits on the image edge.
    rows = np.flatnonzero(a.any(axis=1) | b.any(axis=1))
    if rows.size == 0:
        return a, b
    cols = np.flatnonzero(a.any(axis=0) | b.any(axis=0))
    m = int(math.ceil(tolerance)) + 1
    r0, r1 = max(rows[0] - m, 0), min(rows[-1] + m + 1, a.shape[0])
    c0, c1 = max(cols[0] - m, 0), min(cols[-1] + m + 1, a.shape[1])
    return a[r0:r1, c0:c1], b[r0:r1, c0:c1]


def boundary_f(pred: np.ndarray, gt: np.ndarray, tolerance: float) -> BoundaryScore:
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    pred, gt = _window(np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool), tolerance)
    bp, bg = boundary(pred), boundary(gt)
    n_p, n_g = int(np.count_nonzero(bp)), int(np.count_nonzero(bg))
    if n_p == 0 and n_g == 0:
        return BoundaryScore(1.0, 1.0, 1.0)
    if n_p == 0 or n_g == 0:
        return BoundaryScore(0.0, 0.0, 0.0)
    precision = np.count_nonzero(bp & dilate(bg, tolerance)) / n_p
    recall = np.count_nonzero(bg & dilate(bp, tolerance)) / n_g
    if precision + recall == 0:
        return BoundaryScore(precision, recall, 0.0)
    return BoundaryScore(precision, recall, 2 * precision * recall / (precision + recall))


@dataclass(frozen=True)
class FrameEval:
    frame_idx: int
    j: float
    f: float
    gt_empty: bool
    reappearance: bool


@dataclass
class VideoMetrics:
    video: str
    object: str
    j_mean: float
    f_mean: float
    jf: float
    jf_d: Optional[float]
    jf_r: Optional[float]
    n_frames: int
    n_disappear: int
    n_reappear: int
    frames: list[FrameEval] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {
            "video": self.video,
            "object": self.object,
            "J": self.j_mean,
            "F": self.f_mean,
            "J&F": self.jf,
            "J&F_d": self.jf_d,
            "J&F_r": self.jf_r,
            "n_frames": self.n_frames,
            "n_disappear": self.n_disappear,
            "n_reappear": self.n_reappear,
        }


def _mean(values: Sequence[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def evaluate_video(
    pred_masks: Sequence[np.ndarray],
    gt_masks: Sequence[np.ndarray],
    boundary_tol: Optional[float] = None,
    video: str = "video",
    obj: str = "target",
) -> VideoMetrics:
    if len(pred_masks) != len(gt_masks):
        raise LengthMismatch(f"{len(pred_masks)} predicted frames vs {len(gt_masks)} ground-truth frames")
    if len(gt_masks) < 2:
        raise LengthMismatch("need at least two frames: frame 0 is the prompt and is not scored")
    if boundary_tol is None:
        boundary_tol = default_boundary_tol(*gt_masks[0].shape)
    evals = []
    seen_empty = False
    for t in range(1, len(gt_masks)):
        gt = np.asarray(gt_masks[t], dtype=bool)
        pred = np.asarray(pred_masks[t], dtype=bool)
        empty = not gt.any()
        seen_empty |= empty
        evals.append(
            FrameEval(t, region_j(pred, gt), boundary_f(pred, gt, boundary_tol).f, empty, seen_empty and not empty)
        )
    j_mean = _mean([e.j for e in evals])
    f_mean = _mean([e.f for e in evals])
    disappear = [(e.j + e.f) / 2 for e in evals if e.gt_empty]
    reappear = [(e.j + e.f) / 2 for e in evals if e.reappearance]
    return VideoMetrics(
        video,
        obj,
        j_mean,
        f_mean,
        (j_mean + f_mean) / 2,
        _mean(disappear),
        _mean(reappear),
        len(evals),
        len(disappear),
        len(reappear),
        evals,
    )


@dataclass
class DatasetReport:
    rows: list[VideoMetrics]
    summary: VideoMetrics

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "f_definition": F_LABEL,
            "videos": [r.row() for r in self.rows],
            "summary": self.summary.row(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in [*self.rows, self.summary]:
            writer.writerow({k: "" if v is None else v for k, v in r.row().items()})
        return buf.getvalue()


def aggregate(results: Sequence[VideoMetrics], name: str = "dataset") -> DatasetReport:
    """Unweighted means over (video, object) rows; ``None`` entries are skipped."""
    if not results:
        raise EmptyDataset("no videos to aggregate")

    def col(attr):
        return _mean([getattr(r, attr) for r in results if getattr(r, attr) is not None])

    summary = VideoMetrics(
        name,
        "*" if len(results) > 1 else results[0].object,
        col("j_mean"),
        col("f_mean"),
        col("jf"),
        col("jf_d"),
        col("jf_r"),
        sum(r.n_frames for r in results),
        sum(r.n_disappear for r in results),
        sum(r.n_reappear for r in results),
    )
    return DatasetReport(list(results), summary)


def format_row(label: str, jf: float, j: float, f: float, jf_d: Optional[float], jf_r: Optional[float]) -> str:
    """One leaderboard-style line in percent with two decimals."""

    def pct(v):
        return "  n/a" if v is None else f"{100 * v:.2f}"

    return f"{label:<12} J&F {pct(jf)}  J {pct(j)}  F {pct(f)}  J&F_d {pct(jf_d)}  J&F_r {pct(jf_r)}"


def format_metrics(m: VideoMetrics, label: Optional[str] = None) -> str:
    return format_row(label or m.video, m.jf, m.j_mean, m.f_mean, m.jf_d, m.jf_r)
