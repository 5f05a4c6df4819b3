"""Anchor selection with temporal suppression, and prompt schedules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

from anchorvos.errors import DuplicateFrame, ParseError, ScheduleMismatch
from anchorvos.featurepool import MatchScore, ranking_key
from anchorvos.maskmedia import RleMask

FIRST_FRAME = "first_frame"
MINED = "mined"


@dataclass(frozen=True)
class Anchor:
    frame_idx: int
    mask: RleMask
    score: float
    source: str = MINED
    instance_id: Optional[str] = None

    def to_json(self) -> dict[str, Any]:
        out = {"frame": self.frame_idx, "score": self.score, "source": self.source, "rle": self.mask.to_json()}
        if self.instance_id is not None:
            out["id"] = self.instance_id
        return out


@dataclass(frozen=True)
class SelectionParams:
    k: int = 3
    theta_min: float = 0.5
    delta: int = 15

    def __post_init__(self):
        if self.k < 0 or self.delta < 0 or not -1.0 <= self.theta_min <= 1.0:
            raise ValueError(f"invalid selection params {self}")


def select_anchors(scored: Sequence[MatchScore], params: SelectionParams = SelectionParams()) -> list[Anchor]:
    """Greedy top-k selection in score order.

    A candidate is accepted when it clears ``theta_min``, is not on frame 0,
    and lies more than ``delta`` frames from every accepted anchor.  Because
    ``0 <= delta``, a frame never receives two anchors.
    """
    accepted: list[Anchor] = []
    if params.k == 0:
        return accepted
    for m in sorted(scored, key=ranking_key):
        if m.score < params.theta_min:
            break
        f = m.candidate.frame_idx
        if f == 0 or any(abs(f - a.frame_idx) <= params.delta for a in accepted):
            continue
        accepted.append(Anchor(f, m.candidate.mask, m.score, MINED, m.candidate.instance_id))
        if len(accepted) == params.k:
            break
    return accepted


@dataclass(frozen=True)
class PromptSchedule:
    video_id: str
    anchors: tuple[Anchor, ...]

    @property
    def mined(self) -> tuple[Anchor, ...]:
        return tuple(a for a in self.anchors if a.source == MINED)

    def frames(self) -> list[int]:
        return [a.frame_idx for a in self.anchors]

    def to_json(self) -> dict[str, Any]:
        return {"format_version": 1, "video": self.video_id, "anchors": [a.to_json() for a in self.anchors]}

    @classmethod
    def from_json(cls, obj: Any) -> "PromptSchedule":
        try:
            anchors = [
                Anchor(
                    int(a["frame"]),
                    RleMask.from_json(a["rle"]),
                    float(a["score"]),
                    str(a["source"]),
                    a.get("id"),
                )
                for a in obj["anchors"]
            ]
            video = str(obj["video"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid schedule: {exc}") from None
        firsts = [a for a in anchors if a.source == FIRST_FRAME]
        if len(firsts) != 1 or any(a.source not in (FIRST_FRAME, MINED) for a in anchors):
            raise ParseError("schedule needs exactly one first_frame anchor and only mined others")
        mined = [a for a in anchors if a.source == MINED]
        return build_schedule(video, firsts[0].mask, mined)


def build_schedule(video_id: str, first_frame_mask: RleMask, mined: Sequence[Anchor]) -> PromptSchedule:
    first = Anchor(0, first_frame_mask, 1.0, FIRST_FRAME)
    seen = {0}
    for a in mined:
        if a.frame_idx in seen:
            raise DuplicateFrame(f"two anchors claim frame {a.frame_idx}")
        if a.frame_idx < 0:
            raise ScheduleMismatch(f"anchor frame {a.frame_idx} is negative")
        seen.add(a.frame_idx)
    anchors = sorted([first, *mined], key=lambda a: a.frame_idx)
    return PromptSchedule(video_id, tuple(anchors))
