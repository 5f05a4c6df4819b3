"""Side-by-side style overlays: prediction fill, ground-truth contour, anchor flag."""

from __future__ import annotations

from typing import Optional

import numpy as np

from anchorvos.maskmedia import boundary

PRED_COLOR = np.array([30, 110, 255], dtype=np.float64)
GT_COLOR = (0, 255, 0)
ANCHOR_COLOR = (255, 220, 0)


def render_overlay(
    frame: np.ndarray, pred: np.ndarray, gt: Optional[np.ndarray] = None, is_anchor: bool = False, alpha: float = 0.5
) -> np.ndarray:
    out = frame.astype(np.float64)
    out[pred] = (1 - alpha) * out[pred] + alpha * PRED_COLOR
    out = np.floor(out + 0.5).astype(np.uint8)
    if gt is not None:
        out[boundary(gt)] = GT_COLOR
    if is_anchor:
        out[:2], out[-2:], out[:, :2], out[:, -2:] = ANCHOR_COLOR, ANCHOR_COLOR, ANCHOR_COLOR, ANCHOR_COLOR
    return out
