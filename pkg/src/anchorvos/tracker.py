"""Reference multi-anchor tracker.

A deliberately small stand-in for a memory-based video tracker.  Every
scheduled anchor is embedded and installed as permanent memory before the
sweep starts, so anchors guide frames on both sides of their own index.
Unprompted frames pick the detector candidate with the highest
max-over-memory cosine.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from anchorvos.anchors import FIRST_FRAME, Anchor, PromptSchedule, build_schedule
from anchorvos.featurepool import cosines, object_vector
from anchorvos.errors import ScheduleMismatch
from anchorvos.maskmedia import RleMask, rle_decode, rle_encode

ANCHOR = "anchor"
MATCHED = "matched"
ABSENT = "absent"
ROLLING = "rolling"


@dataclass(frozen=True)
class TrackerParams:
    tau_track: float = 0.6
    tau_mem: float = 0.8
    mem_capacity: int = 4
    pad_ratio: float = 0.1
    patch_side: int = 16

    def __post_init__(self):
        if self.tau_mem < self.tau_track:
            raise ValueError("tau_mem must be >= tau_track")
        if self.mem_capacity < 0:
            raise ValueError("mem_capacity must be >= 0")


@dataclass(frozen=True)
class MemoryEntry:
    frame_idx: int
    embedding: np.ndarray
    mask: RleMask
    kind: str


@dataclass
class TrackResult:
    masks: list[RleMask]
    scores: list[Optional[float]]
    tags: list[str]
    instance_ids: list[Optional[str]]
    rolling_sizes: list[int] = field(default_factory=list)

    def dense(self, t: int) -> np.ndarray:
        return rle_decode(self.masks[t])

    def to_json(self) -> dict:
        frames = [
            {"frame": t, "tag": tag, "score": s, "instance_id": i}
            for t, (tag, s, i) in enumerate(zip(self.tags, self.scores, self.instance_ids))
        ]
        return {"format_version": 1, "frames": frames}


def propagate(
    frames: Sequence[np.ndarray],
    schedule: PromptSchedule,
    detector,
    embedder,
    params: TrackerParams = TrackerParams(),
) -> TrackResult:
    """Sweep the video once in frame order.

    The detector is queried once for the whole video.  An anchor frame emits
    its anchor mask verbatim.  Any other frame takes the candidate whose best cosine against memory is
    highest (ties go to the lower instance id); it is emitted when the score
    reaches ``tau_track`` and pushed into the rolling FIFO when it also
    reaches ``tau_mem``.
    """
    n = len(frames)
    if n < 1:
        raise ScheduleMismatch("video has no frames")
    h, w = frames[0].shape[:2]
    by_frame: dict[int, Anchor] = {}
    for a in schedule.anchors:
        if not 0 <= a.frame_idx < n:
            raise ScheduleMismatch(f"anchor frame {a.frame_idx} outside a {n}-frame video")
        if a.mask.size != (h, w):
            raise ScheduleMismatch(f"anchor mask size {a.mask.size} differs from frame size {(h, w)}")
        by_frame[a.frame_idx] = a

    anchors: list[MemoryEntry] = []
    for a in schedule.anchors:
        inst = None if a.source == FIRST_FRAME else a.instance_id
        vec = object_vector(
            embedder, frames[a.frame_idx], rle_decode(a.mask), a.frame_idx, inst, params.pad_ratio, params.patch_side
        )
        anchors.append(MemoryEntry(a.frame_idx, vec, a.mask, ANCHOR))
    rolling: deque[MemoryEntry] = deque()

    first = next(a for a in schedule.anchors if a.source == FIRST_FRAME)
    candidates = detector.detect(frames, rle_decode(first.mask))
    empty = rle_encode(np.zeros((h, w), dtype=bool))
    result = TrackResult([], [], [], [], [])
    for t in range(n):
        if t in by_frame:
            a = by_frame[t]
            result.masks.append(a.mask)
            result.scores.append(a.score)
            result.tags.append(ANCHOR)
            result.instance_ids.append(a.instance_id)
            result.rolling_sizes.append(len(rolling))
            continue
        memory = np.stack([m.embedding for m in anchors] + [m.embedding for m in rolling])
        best = None
        for cand in sorted(candidates[t] if t < len(candidates) else (), key=lambda c: c.instance_id):
            vec = object_vector(
                embedder, frames[t], cand.dense, t, cand.instance_id, params.pad_ratio, params.patch_side
            )
            score = float(cosines(vec, memory).max())
            if best is None or score > best[0]:
                best = (score, cand, vec)
        if best is not None and best[0] >= params.tau_track:
            score, cand, vec = best
            result.masks.append(cand.mask)
            result.scores.append(score)
            result.tags.append(MATCHED)
            result.instance_ids.append(cand.instance_id)
            if score >= params.tau_mem and params.mem_capacity > 0:
                rolling.append(MemoryEntry(t, vec, cand.mask, ROLLING))
                if len(rolling) > params.mem_capacity:
                    rolling.popleft()
        else:
            result.masks.append(empty)
            result.scores.append(None if best is None else best[0])
            result.tags.append(ABSENT)
            result.instance_ids.append(None)
        result.rolling_sizes.append(len(rolling))
    return result


def propagate_baseline(frames, first_frame_mask: RleMask, detector, embedder, params=TrackerParams(), video_id=""):
    """First-frame-only propagation."""
    return propagate(frames, build_schedule(video_id, first_frame_mask, []), detector, embedder, params)
