"""Deterministic synthetic videos with scripted disappearance and transformation.

Rendering rules
---------------
* Painter's order: seeded-noise background, then objects in list order, then
  static occluder rectangles on top.
* A pixel belongs to a shape iff its centre ``(col + 0.5, row + 0.5)`` lies
  inside or on the shape after mapping into the object's local frame
  (translate by the centre, rotate by minus the current angle, divide by the
  current scale).
* Ground-truth masks are the visible pixels only.
* Randomness: every stream is a PCG64 generator seeded with
  ``SeedSequence([seed, stream])``.  Stream 1 is the background, stream 2 the
  family-level choices, stream ``100 + i`` object ``i``.  Adding an object
  leaves the other streams untouched.

Preset families (defaults 128x128, 120 frames; geometry scales with size)
------------------------------------------------------------------------
``baseline``
    One two-tone target wandering over the whole frame, no events.
``disappear_reappear``
    Target in the left lane parks behind an occluder (``BehindOccluder``
    around 12-30% of the video) and later leaves the frame (``Offscreen``
    around 75%).
``transform``
    Target alone; a visible ``Rotate`` by 90, 180 or 270 degrees and a
    ``HueShift`` of 60-90 degrees between 30% and 60% of the video.
``distractor``
    Target in the left lane plus three same-shape, same-colour objects in the
    right lane whose accent is a centred spot instead of a half.
``combined``
    ``distractor`` layout plus the occluder park of ``disappear_reappear``;
    while hidden the target rotates by a multiple of 90 degrees and shifts hue
    by 60-90 degrees, so it reappears in an appearance the first frame does not
    show directly.  A later ``ScaleChange`` (0.7-0.85) and ``Offscreen`` gap
    follow.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from anchorvos.errors import InvalidScenario, UnknownFamily
from anchorvos.maskmedia import list_pngs, read_frame, read_mask, write_frame, write_mask

FAMILIES = ("baseline", "disappear_reappear", "transform", "distractor", "combined")

STREAM_BACKGROUND = 1
STREAM_FAMILY = 2
STREAM_OBJECT = 100

OCCLUDER_COLOR = (72, 72, 72)


@dataclass(frozen=True)
class Offscreen:
    t0: int
    t1: int


@dataclass(frozen=True)
class BehindOccluder:
    t0: int
    t1: int


@dataclass(frozen=True)
class HueShift:
    t0: int
    t1: int
    degrees: float


@dataclass(frozen=True)
class Rotate:
    t0: int
    t1: int
    total_degrees: float


@dataclass(frozen=True)
class ScaleChange:
    t0: int
    t1: int
    factor: float


Event = Union[Offscreen, BehindOccluder, HueShift, Rotate, ScaleChange]
EVENT_TYPES = {cls.__name__: cls for cls in (Offscreen, BehindOccluder, HueShift, Rotate, ScaleChange)}
DISAPPEARANCE = (Offscreen, BehindOccluder)


@dataclass(frozen=True)
class Keyframe:
    frame: int
    x: float
    y: float
    scale: float = 1.0


@dataclass(frozen=True)
class ObjectScript:
    instance_id: str
    shape: str  # "ellipse" | "polygon"
    base_color: tuple[int, int, int]
    trajectory: tuple[Keyframe, ...]
    events: tuple[Event, ...] = ()
    axes: tuple[float, float] = (10.0, 7.0)  # ellipse semi-axes along local u, v
    vertices: tuple[tuple[float, float], ...] = ()  # polygon, local coords
    accent_color: tuple[int, int, int] = (0, 0, 0)
    pattern: str = "none"  # "none" | "half" | "spot"
    angle: float = 0.0  # initial orientation, degrees
    is_target: bool = False

    def extent(self) -> float:
        """Radius of the smallest centred disk holding the shape at scale 1."""
        if self.shape == "ellipse":
            return max(self.axes)
        return max(math.hypot(u, v) for u, v in self.vertices)

    def inner_extent(self) -> float:
        if self.shape == "ellipse":
            return min(self.axes)
        return min(math.hypot(u, v) for u, v in self.vertices)


@dataclass(frozen=True)
class Background:
    level: int = 110
    amplitude: int = 14


@dataclass(frozen=True)
class Scenario:
    seed: int
    width: int
    height: int
    num_frames: int
    objects: tuple[ObjectScript, ...]
    occluders: tuple[tuple[int, int, int, int], ...] = ()  # (x, y, w, h)
    background: Background = Background()
    family: str = "custom"

    @property
    def target(self) -> ObjectScript:
        return next(o for o in self.objects if o.is_target)

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        for obj, src in zip(d["objects"], self.objects):
            obj["events"] = [{"type": type(e).__name__, **asdict(e)} for e in src.events]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Scenario":
        try:
            objects = []
            for o in d["objects"]:
                o = dict(o)
                events = tuple(
                    EVENT_TYPES[e["type"]](**{k: v for k, v in e.items() if k != "type"}) for e in o.pop("events", [])
                )
                objects.append(
                    ObjectScript(
                        **{
                            **o,
                            "events": events,
                            "trajectory": tuple(Keyframe(**k) for k in o["trajectory"]),
                            "base_color": tuple(o["base_color"]),
                            "accent_color": tuple(o.get("accent_color", (0, 0, 0))),
                            "axes": tuple(o.get("axes", (10.0, 7.0))),
                            "vertices": tuple(tuple(v) for v in o.get("vertices", ())),
                        }
                    )
                )
            return cls(
                seed=int(d["seed"]),
                width=int(d["width"]),
                height=int(d["height"]),
                num_frames=int(d["num_frames"]),
                objects=tuple(objects),
                occluders=tuple(tuple(r) for r in d.get("occluders", ())),
                background=Background(**d.get("background", {})),
                family=d.get("family", "custom"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"malformed scenario: {exc}") from None


@dataclass
class GroundTruth:
    masks: list[dict[str, np.ndarray]]
    target_id: str

    def target_masks(self) -> list[np.ndarray]:
        return [m[self.target_id] for m in self.masks]

    def instance_ids(self) -> list[str]:
        return sorted(self.masks[0]) if self.masks else []


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


# --- per-frame object state ----------------------------------------------------


def _progress(t: int, t0: int, t1: int) -> float:
    if t < t0:
        return 0.0
    if t >= t1:
        return 1.0
    return (t - t0) / (t1 - t0)


def _position(traj: tuple[Keyframe, ...], t: int) -> tuple[float, float, float]:
    if t <= traj[0].frame:
        k = traj[0]
        return k.x, k.y, k.scale
    for a, b in zip(traj, traj[1:]):
        if t <= b.frame:
            p = (t - a.frame) / (b.frame - a.frame)
            return a.x + p * (b.x - a.x), a.y + p * (b.y - a.y), a.scale + p * (b.scale - a.scale)
    k = traj[-1]
    return k.x, k.y, k.scale


def hue_rotate(color, degrees: float) -> tuple[int, int, int]:
    """Rotate an RGB colour about the grey axis (rounded half up, clipped)."""
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    k = 1.0 / 3.0
    sq = math.sqrt(k)
    # Rodrigues rotation matrix for the unit axis (1, 1, 1) / sqrt(3)
    m = np.array(
        [
            [c + k * (1 - c), k * (1 - c) - sq * s, k * (1 - c) + sq * s],
            [k * (1 - c) + sq * s, c + k * (1 - c), k * (1 - c) - sq * s],
            [k * (1 - c) - sq * s, k * (1 - c) + sq * s, c + k * (1 - c)],
        ]
    )
    out = m @ np.asarray(color, dtype=np.float64)
    return tuple(int(v) for v in np.clip(np.floor(out + 0.5), 0, 255))


@dataclass(frozen=True)
class _State:
    x: float
    y: float
    scale: float
    angle: float
    base: tuple[int, int, int]
    accent: tuple[int, int, int]
    hidden: bool


def _state(obj: ObjectScript, t: int, width: int, height: int) -> _State:
    x, y, scale = _position(obj.trajectory, t)
    angle, hue, hidden = obj.angle, 0.0, False
    for e in obj.events:
        if isinstance(e, Rotate):
            angle += e.total_degrees * _progress(t, e.t0, e.t1)
        elif isinstance(e, HueShift):
            hue += e.degrees * _progress(t, e.t0, e.t1)
        elif isinstance(e, ScaleChange):
            scale *= 1.0 + (e.factor - 1.0) * _progress(t, e.t0, e.t1)
        elif isinstance(e, Offscreen) and e.t0 <= t <= e.t1:
            hidden = True
    r = obj.extent() * scale
    if 2 * r > width or 2 * r > height:
        raise InvalidScenario(f"object {obj.instance_id} is larger than the frame at t={t}")
    x = min(max(x, r), width - r)
    y = min(max(y, r), height - r)
    base = hue_rotate(obj.base_color, hue) if hue else tuple(obj.base_color)
    accent = hue_rotate(obj.accent_color, hue) if hue else tuple(obj.accent_color)
    return _State(x, y, scale, angle, base, accent, hidden)


def _rasterize(obj: ObjectScript, st: _State, width: int, height: int):
    """Full (pre-occlusion) shape mask and accent mask of one object."""
    shape = np.zeros((height, width), dtype=bool)
    accent = np.zeros((height, width), dtype=bool)
    r = obj.extent() * st.scale
    c0, c1 = max(int(math.floor(st.x - r)) - 1, 0), min(int(math.ceil(st.x + r)) + 1, width)
    r0, r1 = max(int(math.floor(st.y - r)) - 1, 0), min(int(math.ceil(st.y + r)) + 1, height)
    yy, xx = np.mgrid[r0:r1, c0:c1].astype(np.float64)
    dx, dy = xx + 0.5 - st.x, yy + 0.5 - st.y
    th = math.radians(st.angle)
    cos, sin = math.cos(th), math.sin(th)
    u = (cos * dx + sin * dy) / st.scale
    v = (-sin * dx + cos * dy) / st.scale
    if obj.shape == "ellipse":
        a, b = obj.axes
        inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    else:
        inside = np.ones_like(u, dtype=bool)
        verts = obj.vertices
        for (ua, va), (ub, vb) in zip(verts, verts[1:] + verts[:1]):
            inside &= (ub - ua) * (v - va) - (vb - va) * (u - ua) >= 0.0
    if obj.pattern == "half":
        acc = inside & (u < 0.0)
    elif obj.pattern == "spot":
        rad = 0.5 * obj.inner_extent()
        acc = inside & (u * u + v * v <= rad * rad)
    else:
        acc = np.zeros_like(inside)
    shape[r0:r1, c0:c1] = inside
    accent[r0:r1, c0:c1] = acc
    return shape, accent


def _validate(sc: Scenario) -> None:
    if sc.num_frames < 2:
        raise InvalidScenario(f"num_frames must be >= 2, got {sc.num_frames}")
    if sc.width < 8 or sc.height < 8:
        raise InvalidScenario("frames must be at least 8x8")
    targets = [o for o in sc.objects if o.is_target]
    if len(targets) != 1:
        raise InvalidScenario(f"exactly one target object required, got {len(targets)}")
    ids = [o.instance_id for o in sc.objects]
    if len(set(ids)) != len(ids):
        raise InvalidScenario("duplicate instance ids")
    for o in sc.objects:
        if o.shape not in ("ellipse", "polygon"):
            raise InvalidScenario(f"unknown shape {o.shape!r}")
        if o.shape == "polygon":
            _check_convex(o)
        elif min(o.axes) <= 0:
            raise InvalidScenario(f"ellipse axes of {o.instance_id} must be positive")
        if o.pattern not in ("none", "half", "spot"):
            raise InvalidScenario(f"unknown pattern {o.pattern!r}")
        if not o.trajectory:
            raise InvalidScenario(f"object {o.instance_id} has no trajectory")
        frames = [k.frame for k in o.trajectory]
        if frames != sorted(set(frames)):
            raise InvalidScenario(f"trajectory keyframes of {o.instance_id} must strictly increase")
        for c in (o.base_color, o.accent_color):
            if len(c) != 3 or any(not 0 <= v <= 255 for v in c):
                raise InvalidScenario(f"bad colour {c}")
        for e in o.events:
            if not 0 <= e.t0 <= e.t1 < sc.num_frames:
                raise InvalidScenario(f"event {e} outside [0, {sc.num_frames})")
    for e in sc.target.events:
        if isinstance(e, DISAPPEARANCE) and e.t0 == 0:
            raise InvalidScenario("the target must be visible in frame 0")


def _check_convex(o: ObjectScript) -> None:
    v = o.vertices
    if len(v) < 3:
        raise InvalidScenario(f"polygon {o.instance_id} needs >= 3 vertices")
    crosses = []
    for i in range(len(v)):
        (ax, ay), (bx, by), (cx, cy) = v[i], v[(i + 1) % len(v)], v[(i + 2) % len(v)]
        crosses.append((bx - ax) * (cy - by) - (by - ay) * (cx - bx))
    if not all(c > 0 for c in crosses):
        raise InvalidScenario(f"polygon {o.instance_id} must be convex with counter-clockwise vertices")


def _background(sc: Scenario) -> np.ndarray:
    rng = rng_for(sc.seed, STREAM_BACKGROUND)
    bg = sc.background
    noise = rng.integers(-bg.amplitude, bg.amplitude + 1, size=(sc.height, sc.width, 3))
    return np.clip(bg.level + noise, 0, 255).astype(np.uint8)


def _occluder_mask(sc: Scenario) -> np.ndarray:
    m = np.zeros((sc.height, sc.width), dtype=bool)
    for x, y, w, h in sc.occluders:
        m[max(y, 0) : max(y + h, 0), max(x, 0) : max(x + w, 0)] = True
    return m


def render_frame(sc: Scenario, t: int, background: Optional[np.ndarray] = None, occ: Optional[np.ndarray] = None):
    """One frame and its visible per-instance masks."""
    frame = (_background(sc) if background is None else background).copy()
    occ = _occluder_mask(sc) if occ is None else occ
    shapes = []
    for obj in sc.objects:
        st = _state(obj, t, sc.width, sc.height)
        if st.hidden:
            shapes.append(np.zeros((sc.height, sc.width), dtype=bool))
            continue
        shape, accent = _rasterize(obj, st, sc.width, sc.height)
        frame[shape] = st.base
        frame[accent] = st.accent
        shapes.append(shape)
    frame[occ] = OCCLUDER_COLOR
    masks = {}
    covered = occ.copy()
    for obj, shape in zip(reversed(sc.objects), reversed(shapes)):
        masks[obj.instance_id] = shape & ~covered
        covered |= shape
    return frame, {k: masks[k] for k in sorted(masks)}


def disappearance_frames(obj: ObjectScript) -> set[int]:
    out: set[int] = set()
    for e in obj.events:
        if isinstance(e, DISAPPEARANCE):
            out.update(range(e.t0, e.t1 + 1))
    return out


def generate(sc: Scenario) -> tuple[list[np.ndarray], GroundTruth]:
    _validate(sc)
    bg = _background(sc)
    occ = _occluder_mask(sc)
    target = sc.target
    gone = disappearance_frames(target)
    frames, masks = [], []
    for t in range(sc.num_frames):
        frame, m = render_frame(sc, t, bg, occ)
        visible = bool(m[target.instance_id].any())
        if visible == (t in gone):
            state = "visible" if visible else "hidden"
            raise InvalidScenario(f"target is {state} at frame {t}, contradicting its disappearance events")
        frames.append(frame)
        masks.append(m)
    return frames, GroundTruth(masks, target.instance_id)


# --- presets -------------------------------------------------------------------


def _colors(rng: np.random.Generator):
    h = float(rng.random())
    base = tuple(int(round(255 * c)) for c in colorsys.hsv_to_rgb(h, 0.65, 0.9))
    accent = tuple(int(round(255 * c)) for c in colorsys.hsv_to_rgb(h, 0.65, 0.3))
    return base, accent


def _shape_kwargs(rng: np.random.Generator, unit: float) -> dict:
    if rng.random() < 0.5:
        a = unit * float(rng.uniform(11.0, 13.0))
        b = unit * float(rng.uniform(7.5, 9.5))
        return {"shape": "ellipse", "axes": (a, b)}
    n = int(rng.integers(5, 8))
    radius = unit * float(rng.uniform(10.5, 12.5))
    stretch = float(rng.uniform(0.7, 0.85))
    verts = tuple(
        (radius * math.cos(2 * math.pi * i / n), stretch * radius * math.sin(2 * math.pi * i / n)) for i in range(n)
    )
    return {"shape": "polygon", "vertices": verts}


def _wander(rng, region, start: int, stop: int, first=None, step=(14, 22)) -> list[Keyframe]:
    """Keyframes at random points of ``region`` = (x0, x1, y0, y1), every ``step`` frames."""
    x0, x1, y0, y1 = region
    keys = []
    t = start
    if first is not None:
        keys.append(Keyframe(t, *first))
        t += int(rng.integers(*step))
    while t < stop:
        keys.append(Keyframe(t, float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))))
        t += int(rng.integers(*step))
    keys.append(Keyframe(stop, float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))))
    return keys


def _hidden_run(sc: Scenario, around: int) -> tuple[int, int]:
    """Maximal run of frames containing ``around`` where the target is invisible."""
    bg = _background(sc)
    occ = _occluder_mask(sc)
    tid = sc.target.instance_id

    def hidden(t):
        return not render_frame(sc, t, bg, occ)[1][tid].any()

    if not hidden(around):
        raise InvalidScenario("parked target is not fully occluded")
    t0 = around
    while t0 - 1 > 0 and hidden(t0 - 1):
        t0 -= 1
    t1 = around
    while t1 + 1 < sc.num_frames and hidden(t1 + 1):
        t1 += 1
    return t0, t1


def preset(family: str, seed: int, width: int = 128, height: int = 128, num_frames: int = 120) -> Scenario:
    if family not in FAMILIES:
        raise UnknownFamily(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    if num_frames < 2:
        raise InvalidScenario(f"num_frames must be >= 2, got {num_frames}")
    if family in ("disappear_reappear", "combined") and num_frames < 60:
        raise InvalidScenario(f"family {family} needs at least 60 frames, got {num_frames}")
    unit = min(width, height) / 128.0
    if unit < 0.5:
        raise InvalidScenario("frames must be at least 64 pixels on each side")
    fam = rng_for(seed, STREAM_FAMILY)
    trng = rng_for(seed, STREAM_OBJECT)
    base, accent = _colors(fam)
    look = _shape_kwargs(fam, unit)
    probe = ObjectScript("probe", base_color=base, trajectory=(Keyframe(0, 0, 0),), **look)
    R = probe.extent()
    last = num_frames - 1
    m = 2.0
    target_kw = dict(base_color=base, accent_color=accent, pattern="half", is_target=True, **look)
    target_kw["angle"] = float(trng.uniform(0.0, 360.0))

    if family in ("baseline", "transform"):
        region = (R + m, width - R - m, R + m, height - R - m)
        events: tuple[Event, ...] = ()
        if family == "transform":
            t0, t1 = int(round(0.3 * last)), int(round(0.6 * last))
            events = (
                Rotate(t0, t1, 90.0 * int(fam.integers(1, 4))),
                HueShift(t0, t1, float(fam.uniform(60.0, 90.0))),
            )
        target = ObjectScript("target", trajectory=tuple(_wander(trng, region, 0, last)), events=events, **target_kw)
        return Scenario(seed, width, height, num_frames, (target,), family=family)

    # lane layout: target on the left half, distractors stacked on the right
    half = width / 2.0
    objects = []
    occluders: tuple[tuple[int, int, int, int], ...] = ()
    if family == "distractor":
        region = (R + m, half - R - m, R + m, height - R - m)
        target = ObjectScript("target", trajectory=tuple(_wander(trng, region, 0, last)), **target_kw)
    else:
        occ_half = int(math.ceil(R)) + 2
        occ_cx = int(round(half / 2.0))
        occ_cy = int(round(height - occ_half - 2 * unit))
        occluders = ((occ_cx - occ_half, occ_cy - occ_half, 2 * occ_half, 2 * occ_half),)
        y_max = occ_cy - occ_half - R - m
        region = (R + m, half - R - m, R + m, y_max)
        park = (float(occ_cx), float(occ_cy))
        approach = (float(occ_cx), y_max)
        p0 = int(round(0.12 * last)) + int(fam.integers(0, 3))
        p1 = p0 + int(round(0.15 * last)) + int(fam.integers(0, 4))
        keys = _wander(trng, region, 0, p0 - 6)
        keys += [Keyframe(p0 - 5, *approach), Keyframe(p0, *park), Keyframe(p1, *park), Keyframe(p1 + 5, *approach)]
        keys += _wander(trng, region, p1 + 6, last)
        o0 = int(round(0.75 * last)) + int(fam.integers(0, 5))
        o1 = o0 + max(int(round(0.06 * last)), 2)
        events = [Offscreen(o0, o1)]
        if family == "combined":
            s0 = int(round(0.5 * last))
            events += [
                Rotate(p0 + 1, p1 - 1, 90.0 * int(fam.integers(1, 4))),
                HueShift(p0 + 1, p1 - 1, float(fam.uniform(60.0, 90.0))),
                ScaleChange(s0, s0 + int(round(0.12 * last)), float(fam.uniform(0.7, 0.85))),
            ]
        target = ObjectScript("target", trajectory=tuple(keys), events=tuple(events), **target_kw)
        provisional = Scenario(seed, width, height, num_frames, (target,), occluders, family=family)
        t0, t1 = _hidden_run(provisional, (p0 + p1) // 2)
        target = replace(target, events=(BehindOccluder(t0, t1), *target.events))
    objects.append(target)

    if family in ("distractor", "combined"):
        band = height / 3.0
        for i in range(3):
            drng = rng_for(seed, STREAM_OBJECT + 1 + i)
            region = (half + R + m, width - R - m, i * band + R + 1, (i + 1) * band - R - 1)
            objects.append(
                ObjectScript(
                    f"distractor{i + 1}",
                    base_color=base,
                    accent_color=accent,
                    pattern="spot",
                    angle=float(drng.uniform(0.0, 360.0)),
                    trajectory=tuple(_wander(drng, region, 0, last)),
                    **look,
                )
            )
    return Scenario(seed, width, height, num_frames, tuple(objects), occluders, family=family)


# --- dataset layout ----------------------------------------------------------


def save_dataset(out, sc: Scenario, frames, gt: GroundTruth) -> None:
    out = Path(out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        write_frame(out / "frames" / f"{t:05d}.png", frame)
    for inst in gt.instance_ids():
        d = out / "gt" / inst
        d.mkdir(parents=True, exist_ok=True)
        for t, m in enumerate(gt.masks):
            write_mask(d / f"{t:05d}.png", m[inst])
    doc = {"format_version": 1, "target_id": gt.target_id, "scenario": sc.to_json()}
    (out / "scenario.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_frames(directory) -> list[np.ndarray]:
    return [read_frame(p) for p in list_pngs(directory)]


def load_gt(gt_dir, target_id: Optional[str] = None) -> GroundTruth:
    gt_dir = Path(gt_dir)
    insts = sorted(p.name for p in gt_dir.iterdir() if p.is_dir())
    per_inst = {i: [read_mask(p) for p in list_pngs(gt_dir / i)] for i in insts}
    n = max((len(v) for v in per_inst.values()), default=0)
    masks = [{i: per_inst[i][t] for i in insts} for t in range(n)]
    if target_id is None:
        meta = gt_dir.parent / "scenario.json"
        target_id = json.loads(meta.read_text())["target_id"] if meta.exists() else insts[0]
    return GroundTruth(masks, target_id)
