"""Mask and image primitives.

Dense masks are 2-D ``bool`` arrays of shape ``(H, W)``; frames and patches
are ``uint8`` arrays of shape ``(H, W, 3)``.  Run-length masks follow the
uncompressed COCO convention: pixels are read in column-major order and the
counts alternate zero-runs and one-runs, starting with a (possibly empty)
zero-run.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from anchorvos.errors import CountsMismatch, DimensionMismatch, EmptyMask, ParseError


@dataclass(frozen=True)
class RleMask:
    size: tuple[int, int]  # (height, width)
    counts: tuple[int, ...]

    @property
    def height(self) -> int:
        return self.size[0]

    @property
    def width(self) -> int:
        return self.size[1]

    def area(self) -> int:
        return int(sum(self.counts[1::2]))

    def to_json(self) -> dict[str, Any]:
        return {"size": [self.size[0], self.size[1]], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: Any) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = tuple(int(c) for c in obj["counts"])
            if any(float(c) != int(c) for c in obj["counts"]):
                raise ValueError("non-integer count")
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed RLE object: {exc}") from None
        return cls((int(h), int(w)), counts)


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    def contains(self, other: "BBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and self.x + self.w >= other.x + other.w
            and self.y + self.h >= other.y + other.h
        )


class D4Transform(enum.Enum):
    """Axis-aligned symmetries of a square patch.

    ``ROT90`` is the clockwise quarter turn, mapping pixel ``(row, col)`` to
    ``(col, side - 1 - row)``.  The compound members apply the rotation first
    and the flip second.  Declaration order is the tie-breaking order.
    """

    IDENTITY = "identity"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    FLIP_H = "flip_h"
    FLIP_V = "flip_v"
    FLIP_H_ROT90 = "flip_h_rot90"
    FLIP_V_ROT90 = "flip_v_rot90"

    @property
    def inverse(self) -> "D4Transform":
        return _INVERSE[self]

    def then(self, other: "D4Transform") -> "D4Transform":
        """The transform equal to applying ``self`` and then ``other``."""
        return _COMPOSE[(self, other)]


def _apply(p: np.ndarray, t: D4Transform) -> np.ndarray:
    if t is D4Transform.IDENTITY:
        out = p
    elif t is D4Transform.ROT90:
        out = np.rot90(p, -1)
    elif t is D4Transform.ROT180:
        out = np.rot90(p, 2)
    elif t is D4Transform.ROT270:
        out = np.rot90(p, 1)
    elif t is D4Transform.FLIP_H:
        out = p[:, ::-1]
    elif t is D4Transform.FLIP_V:
        out = p[::-1]
    elif t is D4Transform.FLIP_H_ROT90:
        out = np.rot90(p, -1)[:, ::-1]
    else:
        out = np.rot90(p, -1)[::-1]
    return np.ascontiguousarray(out)


def d4_apply(patch: np.ndarray, t: D4Transform) -> np.ndarray:
    if patch.shape[0] != patch.shape[1]:
        raise DimensionMismatch(f"D4 transforms need a square patch, got {patch.shape[:2]}")
    return _apply(patch, t)


def _build_tables():
    probe = np.arange(9).reshape(3, 3)
    images = {t: _apply(probe, t).tobytes() for t in D4Transform}
    lookup = {v: t for t, v in images.items()}
    compose = {}
    for a in D4Transform:
        for b in D4Transform:
            compose[(a, b)] = lookup[_apply(_apply(probe, a), b).tobytes()]
    inverse = {a: next(b for b in D4Transform if compose[(a, b)] is D4Transform.IDENTITY) for a in D4Transform}
    return compose, inverse


_COMPOSE, _INVERSE = _build_tables()


def parse_transforms(names) -> tuple[D4Transform, ...]:
    """Parse transform names, returning them in canonical declaration order."""
    wanted = set()
    for name in names:
        try:
            wanted.add(D4Transform(name))
        except ValueError:
            raise ValueError(f"unknown D4 transform {name!r}") from None
    return tuple(t for t in D4Transform if t in wanted)


# --- run-length coding -----------------------------------------------------


def rle_encode(mask: np.ndarray) -> RleMask:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    flat = mask.ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return RleMask((h, w), tuple(int(r) for r in runs))


def rle_decode(rle: RleMask) -> np.ndarray:
    h, w = rle.size
    counts = np.asarray(rle.counts, dtype=np.int64)
    if h < 1 or w < 1:
        raise CountsMismatch(f"invalid RLE size {rle.size}")
    if counts.size and counts.min() < 0:
        raise CountsMismatch("negative run length in RLE counts")
    total = int(counts.sum())
    if total != h * w:
        raise CountsMismatch(f"RLE counts sum to {total}, expected {h * w}")
    values = np.zeros(counts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((w, h)).T.copy()


# --- mask algebra ------------------------------------------------------------


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatch(f"shape mismatch: {a.shape[:2]} vs {b.shape[:2]}")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    _check_same(a, b)
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def bbox_of(mask: np.ndarray) -> Optional[BBox]:
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def boundary(mask: np.ndarray) -> np.ndarray:
    """Set pixels with an unset 4-neighbour; the image border counts as unset."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return mask & ~interior


def disk(radius: float) -> np.ndarray:
    r = int(math.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= radius * radius


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """All pixels within Euclidean distance ``radius`` of a set pixel."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if radius < 1 or not mask.any():
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk(radius))


def erode(mask: np.ndarray, radius: float) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if radius < 1:
        return mask.copy()
    return ~dilate(~mask, radius)


# --- cropping and resizing ---------------------------------------------------


def masked_crop(image: np.ndarray, mask: np.ndarray, pad_ratio: float = 0.1) -> np.ndarray:
    """Crop the mask's box (padded on each side) and flatten the background.

    Each side of the tight box grows by ``round(pad_ratio * extent)`` pixels,
    clamped to the frame.  Pixels outside the mask are replaced by the
    channel-wise mean colour of the masked pixels, rounded half up.
    """
    _check_same(image, mask)
    mask = np.asarray(mask, dtype=bool)
    box = bbox_of(mask)
    if box is None:
        raise EmptyMask("cannot crop an empty mask")
    h, w = mask.shape
    px = int(math.floor(pad_ratio * box.w + 0.5))
    py = int(math.floor(pad_ratio * box.h + 0.5))
    x0, x1 = max(box.x - px, 0), min(box.x + box.w + px, w)
    y0, y1 = max(box.y - py, 0), min(box.y + box.h + py, h)
    crop = image[y0:y1, x0:x1].copy()
    inside = mask[y0:y1, x0:x1]
    sums = crop[inside].astype(np.int64).sum(axis=0)
    fill = np.floor(sums / np.count_nonzero(inside) + 0.5).astype(np.uint8)
    crop[~inside] = fill
    return crop


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, source coordinate clamped to the valid range
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_patch(crop: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize to ``side x side`` (align-corners false).

    Output pixel ``i`` samples source coordinate ``(i + 0.5) * n_in / side - 0.5``
    clamped to ``[0, n_in - 1]``; rows are interpolated before columns in
    float64 and the result is rounded half up.
    """
    if crop.ndim != 3 or crop.shape[0] < 1 or crop.shape[1] < 1:
        raise DimensionMismatch(f"degenerate crop of shape {crop.shape}")
    if crop.shape[0] == side and crop.shape[1] == side:
        return crop.copy()
    src = crop.astype(np.float64)
    lo, hi, frac = _axis_weights(crop.shape[0], side)
    rows = src[lo] * (1.0 - frac)[:, None, None] + src[hi] * frac[:, None, None]
    lo, hi, frac = _axis_weights(crop.shape[1], side)
    out = rows[:, lo] * (1.0 - frac)[None, :, None] + rows[:, hi] * frac[None, :, None]
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def object_patch(image: np.ndarray, mask: np.ndarray, pad_ratio: float, side: int) -> np.ndarray:
    return resize_patch(masked_crop(image, mask, pad_ratio), side)


# --- PNG I/O -----------------------------------------------------------------


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_frame(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_mask(path, mask: np.ndarray) -> None:
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def list_pngs(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
