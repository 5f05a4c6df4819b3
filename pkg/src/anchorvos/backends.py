"""Detector and embedder backends.

Two kinds of each: file-backed replays of precomputed model exports, and
deterministic desk-scale stand-ins (an oracle detector over synthetic ground
truth and a pixel-permutation-equivariant patch descriptor).

A detector exposes ``detect(frames, target_mask, include_first=False)`` and
returns one list of :class:`Candidate` per frame.  An embedder exposes
``embed(patch)`` (patch-based) or ``lookup(frame_idx, instance_id)``
(file-backed); ``frame_idx == -1`` keys the first-frame target pool, with the
transform name as the instance id.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from anchorvos.errors import MissingEmbedding, ParseError
from anchorvos.maskmedia import BBox, RleMask, bbox_of, dilate, erode, iou, rle_decode, rle_encode

log = logging.getLogger(__name__)

TARGET_POOL_FRAME = -1


@dataclass(frozen=True)
class Candidate:
    frame_idx: int
    instance_id: str
    bbox: BBox
    mask: RleMask
    det_score: float

    @cached_property
    def dense(self) -> np.ndarray:
        return rle_decode(self.mask)

    def to_json(self) -> dict:
        return {
            "frame": self.frame_idx,
            "id": self.instance_id,
            "bbox": self.bbox.to_list(),
            "rle": self.mask.to_json(),
            "det_score": self.det_score,
        }


def candidate_from_mask(frame_idx: int, instance_id: str, mask: np.ndarray, det_score: float) -> Candidate:
    return Candidate(frame_idx, instance_id, bbox_of(mask), rle_encode(mask), float(det_score))


class Detector(Protocol):
    def detect(
        self, frames: Sequence[np.ndarray], target_mask: np.ndarray, include_first: bool = False
    ) -> list[list[Candidate]]: ...


def _per_frame(cands: list[Candidate], n_frames: int, include_first: bool) -> list[list[Candidate]]:
    out: list[list[Candidate]] = [[] for _ in range(n_frames)]
    for c in cands:
        if 0 <= c.frame_idx < n_frames and (include_first or c.frame_idx != 0):
            out[c.frame_idx].append(c)
    for lst in out:
        lst.sort(key=lambda c: (-c.det_score, c.instance_id))
    return out


class FileDetector:
    """Replays candidates recorded in a JSON Lines detections file."""

    def __init__(self, candidates: list[Candidate]):
        self.candidates = sorted(candidates, key=lambda c: (c.frame_idx, -c.det_score, c.instance_id))

    @classmethod
    def load(cls, path) -> "FileDetector":
        cands = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                cands.append(_parse_detection(line, lineno, str(path)))
        return cls(cands)

    def detect(self, frames, target_mask, include_first=False):
        return _per_frame(self.candidates, len(frames), include_first)


def _parse_detection(line: str, lineno: int, path: str) -> Candidate:
    try:
        rec = json.loads(line)
        frame = rec["frame"]
        inst = rec["id"]
        bbox = rec["bbox"]
        score = float(rec["det_score"])
        if not isinstance(frame, int) or frame < 0:
            raise ValueError(f"bad frame index {frame!r}")
        if not isinstance(inst, str):
            raise ValueError("id must be a string")
        if len(bbox) != 4:
            raise ValueError("bbox must have 4 entries")
        rle = RleMask.from_json(rec["rle"])
    except ParseError as exc:
        raise ParseError(str(exc), lineno, path) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"invalid detection record: {exc}", lineno, path) from None
    dense = rle_decode(rle)  # CountsMismatch propagates
    if not dense.any():
        raise ParseError("detection mask is empty", lineno, path)
    box = BBox(*(int(v) for v in bbox))
    if not box.contains(bbox_of(dense)):
        raise ParseError("bbox does not contain the mask", lineno, path)
    return Candidate(frame, inst, box, rle, score)


def write_detections(path, candidates) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_json()) + "\n")


@dataclass(frozen=True)
class JitterParams:
    radius: int = 0
    drop_prob: float = 0.0
    seed: int = 0


class OracleDetector:
    """Returns every ground-truth instance, optionally perturbed.

    Each (frame, instance) draws from its own PCG64 stream keyed by
    ``(seed, frame, crc of id)``, so results do not depend on iteration order.
    A perturbation erodes or dilates by a random radius in ``[0, radius]``;
    ``det_score`` is the IoU of the perturbed mask with the clean one.
    """

    def __init__(self, gt_masks: Sequence[Mapping[str, np.ndarray]], jitter: JitterParams = JitterParams()):
        self.gt_masks = gt_masks
        self.jitter = jitter
        self._cache: dict[tuple[int, bool], list[list[Candidate]]] = {}

    def _rng(self, frame: int, inst: str) -> np.random.Generator:
        import zlib

        key = zlib.crc32(inst.encode("utf-8"))
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.jitter.seed, frame, key])))

    def detect(self, frames, target_mask, include_first=False):
        n = len(frames) if frames is not None else len(self.gt_masks)
        key = (n, include_first)
        if key not in self._cache:
            self._cache[key] = self._detect(n, include_first)
        return [list(c) for c in self._cache[key]]

    def _detect(self, n: int, include_first: bool) -> list[list[Candidate]]:
        out: list[list[Candidate]] = [[] for _ in range(n)]
        for f in range(min(n, len(self.gt_masks))):
            if f == 0 and not include_first:
                continue
            for inst in sorted(self.gt_masks[f]):
                clean = self.gt_masks[f][inst]
                if not clean.any():
                    continue
                mask = clean
                if self.jitter.radius > 0 or self.jitter.drop_prob > 0:
                    rng = self._rng(f, inst)
                    if rng.random() < self.jitter.drop_prob:
                        continue
                    r = int(rng.integers(0, self.jitter.radius + 1))
                    if r > 0:
                        mask = dilate(clean, r) if rng.random() < 0.5 else erode(clean, r)
                    if not mask.any():
                        continue
                out[f].append(candidate_from_mask(f, inst, mask, iou(mask, clean)))
            out[f].sort(key=lambda c: (-c.det_score, c.instance_id))
        return out


def normalize(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    norm = math.sqrt(math.fsum((v * v).tolist()))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


class PatchEmbedder:
    """Mean-centred flattened RGB descriptor.

    Pixels are flattened in (row, col, channel) order, each channel's mean is
    subtracted, and the result is L2-normalised.  A constant patch has no
    direction and maps to ``e1``.  Any pixel permutation of the input permutes
    the output entries identically; sums use exact integer or ``fsum``
    arithmetic so the result does not depend on summation order.
    """

    def __init__(self, side: int = 16):
        self.side = side

    def embed(self, patch: np.ndarray) -> np.ndarray:
        p = np.asarray(patch)
        n = p.shape[0] * p.shape[1]
        sums = p.reshape(n, 3).astype(np.int64).sum(axis=0)
        centered = p.reshape(n, 3).astype(np.float64) - sums / n
        flat = centered.ravel()
        norm = math.sqrt(math.fsum((flat * flat).tolist()))
        if norm < 1e-9:
            e1 = np.zeros(flat.size)
            e1[0] = 1.0
            return e1
        return flat / norm


@dataclass
class FileEmbedder:
    vectors: dict[tuple[int, str], np.ndarray] = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "FileEmbedder":
        vectors: dict[tuple[int, str], np.ndarray] = {}
        dim: Optional[int] = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = (int(rec["frame"]), str(rec["id"]))
                    vec = normalize(rec["vec"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(f"invalid embedding record: {exc}", lineno, str(path)) from None
                if dim is not None and vec.size != dim:
                    raise ParseError(f"embedding dim {vec.size} differs from {dim}", lineno, str(path))
                dim = vec.size
                vectors[key] = vec  # later lines win
        return cls(vectors)

    def lookup(self, frame_idx: int, instance_id: str) -> np.ndarray:
        try:
            return self.vectors[(frame_idx, instance_id)]
        except KeyError:
            raise MissingEmbedding(frame_idx, instance_id) from None
