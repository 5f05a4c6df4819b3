"""Transformation-aware target feature pool and candidate scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from anchorvos.backends import TARGET_POOL_FRAME, Candidate, normalize
from anchorvos.errors import DimensionMismatch, EmptyMask, ParseError
from anchorvos.maskmedia import D4Transform, d4_apply, object_patch

log = logging.getLogger(__name__)

FULL_D4 = tuple(D4Transform)


@dataclass(frozen=True)
class TargetFeaturePool:
    entries: tuple[tuple[D4Transform, np.ndarray], ...]
    source_frame: int = 0
    patch_side: int = 16

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.stack([v for _, v in self.entries])

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "source_frame": self.source_frame,
            "patch_side": self.patch_side,
            "entries": [{"transform": t.value, "vec": v.tolist()} for t, v in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TargetFeaturePool":
        try:
            entries = tuple(
                (D4Transform(e["transform"]), normalize(e["vec"])) for e in obj["entries"]
            )
            pool = cls(entries, int(obj.get("source_frame", 0)), int(obj["patch_side"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid pool file: {exc}") from None
        if not entries or len({v.size for _, v in entries}) != 1:
            raise ParseError("pool needs at least one entry and a single vector dim")
        return pool


@dataclass(frozen=True)
class MatchScore:
    candidate: Candidate
    score: float
    best_transform: D4Transform


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product of unit vectors, clamped to [-1, 1]."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"vector dims differ: {u.shape} vs {v.shape}")
    return float(cosines(u, u[None] if v is u else v[None])[0])


def cosines(u: np.ndarray, stack: np.ndarray) -> np.ndarray:
    """Cosine of ``u`` against each row of ``stack``.

    Products are sorted before summation, so permuting the entries of both
    vectors the same way leaves every result bit-identical.
    """
    if stack.ndim != 2 or stack.shape[1] != u.shape[0]:
        raise DimensionMismatch(f"vector dims differ: {u.shape} vs {stack.shape[1:]}")
    dots = np.sort(stack * u[None, :], axis=1).sum(axis=1)
    return np.clip(dots, -1.0, 1.0)


def object_vector(
    embedder,
    image: Optional[np.ndarray],
    mask: Optional[np.ndarray],
    frame_idx: int,
    instance_id: Optional[str],
    pad_ratio: float,
    patch_side: int,
    transform: D4Transform = D4Transform.IDENTITY,
) -> np.ndarray:
    """Embed one object with whichever capability the embedder has.

    File-backed embedders key the first-frame target (``instance_id=None``)
    by the reserved pool frame and the transform name.
    """
    if hasattr(embedder, "embed"):
        patch = object_patch(image, mask, pad_ratio, patch_side)
        return embedder.embed(d4_apply(patch, transform))
    if instance_id is None:
        return embedder.lookup(TARGET_POOL_FRAME, transform.value)
    return embedder.lookup(frame_idx, instance_id)


def build_pool(
    first_frame: np.ndarray,
    target_mask: np.ndarray,
    embedder,
    transforms: Iterable[D4Transform] = FULL_D4,
    pad_ratio: float = 0.1,
    patch_side: int = 16,
) -> TargetFeaturePool:
    if not np.asarray(target_mask).any():
        raise EmptyMask("first-frame target mask is empty")
    wanted = set(transforms) | {D4Transform.IDENTITY}
    ordered = [t for t in D4Transform if t in wanted]
    if hasattr(embedder, "embed"):
        # resize before transforming so each variant is an exact permutation
        base = object_patch(first_frame, target_mask, pad_ratio, patch_side)
        entries = tuple((t, embedder.embed(d4_apply(base, t))) for t in ordered)
    else:
        entries = tuple((t, embedder.lookup(TARGET_POOL_FRAME, t.value)) for t in ordered)
    return TargetFeaturePool(entries, 0, patch_side)


def score_candidate(vec: np.ndarray, pool: TargetFeaturePool) -> tuple[float, D4Transform]:
    """Max cosine over the pool; ties resolve to the earliest entry."""
    sims = cosines(vec, pool.matrix)
    i = int(np.argmax(sims))
    return float(sims[i]), pool.entries[i][0]


def score_all(
    frames: Sequence[np.ndarray],
    candidates: Sequence[Sequence[Candidate]],
    pool: TargetFeaturePool,
    embedder,
    pad_ratio: float = 0.1,
    patch_side: Optional[int] = None,
) -> list[MatchScore]:
    """Score every candidate against the pool.

    Candidates are embedded untransformed.  Output is sorted by score
    descending, then frame ascending, then instance id ascending.
    """
    side = pool.patch_side if patch_side is None else patch_side
    out: list[MatchScore] = []
    for per_frame in candidates:
        for cand in per_frame:
            mask = cand.dense
            if not mask.any():
                log.warning("skipping candidate %s at frame %d: empty mask", cand.instance_id, cand.frame_idx)
                continue
            image = frames[cand.frame_idx] if frames is not None else None
            vec = object_vector(embedder, image, mask, cand.frame_idx, cand.instance_id, pad_ratio, side)
            score, t = score_candidate(vec, pool)
            out.append(MatchScore(cand, score, t))
    out.sort(key=ranking_key)
    return out


def ranking_key(m: MatchScore):
    return (-m.score, m.candidate.frame_idx, m.candidate.instance_id)
