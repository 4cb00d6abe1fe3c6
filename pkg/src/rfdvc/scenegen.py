"""Procedural stand-in for the simulator capture and the radiance-field renderer.

A background is a seeded composition (sky gradient, buildings with windows,
road with lane marks) that depends only on ``background_id``.  Live frames
composite moving vehicle/pedestrian sprites over it and then apply a
lighting/weather transform; background frames are always rendered under the
morning training condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np

from .core import (
    ALIGN, CameraPose, Condition, ConditionTag, Frame, Mask, MaskSet, MaskSource,
    RF_CONDITION, Role, Traffic,
)

MAX_BATCH = 10
VEHICLE_SIZE = (24, 12)
PEDESTRIAN_SIZE = (4, 10)
PEDESTRIAN_LABEL_BASE = 128

TRAFFIC_COUNTS = {
    Traffic.EMPTY: (0, 0),
    Traffic.SPARSE: (3, 2),
    Traffic.DENSE: (12, 8),
}

_COND_CODE = {c: i for i, c in enumerate(Condition)}


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key]))


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    width: int = 320
    height: int = 192
    n_vehicles: int = 0
    n_pedestrians: int = 0
    condition: ConditionTag = ConditionTag()
    batch_len: int = 10
    background_id: int = 5
    camera_step: float = 0.0
    full_coverage: bool = False

    def __post_init__(self):
        if not 1 <= self.batch_len <= MAX_BATCH:
            raise ValueError(f"batch_len must be in [1, {MAX_BATCH}], got {self.batch_len}")
        if self.width % ALIGN or self.height % ALIGN or self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive multiples of 16")
        if not 0 <= self.n_vehicles < PEDESTRIAN_LABEL_BASE:
            raise ValueError("n_vehicles out of range")
        if not 0 <= self.n_pedestrians < 256 - PEDESTRIAN_LABEL_BASE:
            raise ValueError("n_pedestrians out of range")

    @classmethod
    def for_traffic(cls, seed: int, condition: Condition | str, traffic: Traffic | str, **kw) -> "SceneSpec":
        tag = ConditionTag.parse(condition, traffic)
        nv, npd = TRAFFIC_COUNTS[tag.traffic]
        return cls(seed=seed, n_vehicles=nv, n_pedestrians=npd, condition=tag, **kw)

    def pose(self, t: int) -> CameraPose:
        return CameraPose.translation(x=self.camera_step * t)


class BackgroundProvider(Protocol):
    def render(self, pose: CameraPose, background_id: int) -> Frame: ...


class ProceduralBackground:
    """Deterministic static-scene renderer; the pose's x translation pans a panorama."""

    def __init__(self, width: int = 320, height: int = 192):
        self.width = width
        self.height = height

    def render(self, pose: CameraPose, background_id: int) -> Frame:
        pano = _panorama(self.width, self.height, int(background_id))
        shift = int(np.clip(round(pose.matrix[0, 3]), 0, pano.shape[1] - self.width))
        px = pano[:, shift:shift + self.width]
        return Frame(px.copy(), role=Role.RF, pose=pose, condition=RF_CONDITION)


# Channel values that stay inside their 8-level colour bin under the +-10 %
# wet-surface field and the noon gain, so static regions keep their shape.
PALETTE_LEVELS = (16, 48, 80, 112, 144, 250)


@lru_cache(maxsize=16)
def _panorama(width: int, height: int, background_id: int) -> np.ndarray:
    rng = _rng(0xB6, background_id)
    pw = 2 * width
    img = np.zeros((height, pw, 3), dtype=np.float64)
    horizon = int(height * 0.55)
    road_top = int(height * 0.62)

    top = np.array([70.0, 108.0, 250.0])
    bottom = np.array([120.0, 150.0, 250.0])
    frac = (np.arange(horizon) / max(horizon - 1, 1))[:, None]
    img[:horizon] = (top + (bottom - top) * frac)[:, None, :]
    img[horizon:road_top] = (144, 144, 112)         # sidewalk
    img[road_top:] = (80, 80, 80)                   # asphalt

    body_levels = np.array(PALETTE_LEVELS[1:5], dtype=np.float64)
    n_buildings = int(rng.integers(5, 13))
    for _ in range(n_buildings):
        bw = int(rng.integers(pw // 14, pw // 5))
        bh = int(rng.integers(horizon // 3, horizon - 4))
        x0 = int(rng.integers(0, pw - bw))
        y0 = horizon - bh
        idx = rng.integers(0, len(body_levels), size=3)
        img[y0:horizon, x0:x0 + bw] = body_levels[idx]
        win = np.array(PALETTE_LEVELS, dtype=np.float64)[np.where(idx > 1, idx - 1, idx + 3)]
        for wy in range(y0 + 4, horizon - 8, 10):
            for wx in range(x0 + 4, x0 + bw - 6, 9):
                img[wy:wy + 5, wx:wx + 5] = win

    lane_y = (road_top + height) // 2
    for x in range(0, pw, 32):
        img[lane_y - 1:lane_y + 2, x:x + 16] = (250, 250, 250)
    img[road_top:road_top + 2] = (250, 250, 144)    # curb
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class _Sprite:
    label: int
    kind: str
    x: float
    y: float
    vx: float
    vy: float
    color: tuple[int, int, int]

    def box(self, t: int) -> tuple[int, int, int, int]:
        w, h = VEHICLE_SIZE if self.kind == "vehicle" else PEDESTRIAN_SIZE
        x = int(round(self.x + self.vx * t))
        y = int(round(self.y + self.vy * t))
        return x, y, w, h


def _sprites(spec: SceneSpec) -> list[_Sprite]:
    rng = _rng(0x5C, spec.seed)
    h, w = spec.height, spec.width
    road_top = int(h * 0.62)
    horizon = int(h * 0.55)
    out = []
    for i in range(spec.n_vehicles):
        speed = float(rng.integers(1, 5)) * (1 if rng.random() < 0.5 else -1)
        x = float(rng.integers(-8, w - VEHICLE_SIZE[0] + 8))
        y = float(rng.integers(road_top + 2, h - VEHICLE_SIZE[1] + 2))
        color = tuple(int(c) for c in rng.integers(40, 231, size=3))
        out.append(_Sprite(i + 1, "vehicle", x, y, speed, 0.0, color))
    for i in range(spec.n_pedestrians):
        vx = float(rng.integers(1, 3)) * (1 if rng.random() < 0.5 else -1)
        x = float(rng.integers(0, w - PEDESTRIAN_SIZE[0]))
        y = float(rng.integers(horizon - 6, road_top - 2))
        color = tuple(int(c) for c in rng.integers(40, 231, size=3))
        out.append(_Sprite(PEDESTRIAN_LABEL_BASE + i, "pedestrian", x, y, vx, 0.0, color))
    return out


def _paint_sprite(canvas: np.ndarray, sprite: _Sprite, t: int) -> np.ndarray:
    """Paint one sprite in place and return its clipped footprint."""
    H, W = canvas.shape[:2]
    x, y, w, h = sprite.box(t)
    patch = np.empty((h, w, 3), dtype=np.uint8)
    patch[...] = sprite.color
    if sprite.kind == "vehicle":
        outline = tuple(c // 2 for c in sprite.color)
        patch[:2] = outline
        patch[-2:] = outline
        patch[:, :2] = outline
        patch[:, -2:] = outline
    x0, y0, x1, y1 = max(x, 0), max(y, 0), min(x + w, W), min(y + h, H)
    foot = np.zeros((H, W), dtype=bool)
    if x1 <= x0 or y1 <= y0:
        return foot
    canvas[y0:y1, x0:x1] = patch[y0 - y:y1 - y, x0 - x:x1 - x]
    foot[y0:y1, x0:x1] = True
    return foot


def _occluder(spec: SceneSpec, t: int) -> np.ndarray:
    """Full-frame foreground: the back of a truck filling the field of view."""
    rng = _rng(0x0C, spec.seed)
    base = rng.integers(50, 200, size=3).astype(np.float64)
    h, w = spec.height, spec.width
    yy = np.arange(h)[:, None, None] / h
    img = np.broadcast_to(base * (0.75 + 0.5 * yy), (h, w, 3)).copy()
    for x in range(int(rng.integers(8, 24)), w, 40):
        img[:, x:x + 3] *= 0.6
    img[h // 3:h // 3 + 4] *= 0.5
    shift = t % 8
    img = np.roll(img, shift, axis=0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _composite(spec: SceneSpec, background: np.ndarray, t: int) -> tuple[np.ndarray, list[Mask]]:
    canvas = background.copy()
    masks: list[Mask] = []
    if spec.full_coverage:
        canvas[...] = _occluder(spec, t)
        foot = np.ones(canvas.shape[:2], dtype=bool)
        masks.append(Mask(foot, 1, "vehicle"))
    else:
        for sprite in _sprites(spec):
            foot = _paint_sprite(canvas, sprite, t)
            if foot.any():
                masks.append(Mask(foot, sprite.label, sprite.kind))
    # keep ground truth exact: foreground pixels never coincide with the background
    if masks:
        fg = np.zeros(canvas.shape[:2], dtype=bool)
        for m in masks:
            fg |= m.bitmap
        same = fg & np.all(canvas == background, axis=2)
        canvas[same, 0] ^= 0x40
    return canvas, masks


def _value_noise(h: int, w: int, lattice: int, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    gh, gw = h // lattice + 2, w // lattice + 2
    grid = rng.uniform(lo, hi, size=(gh, gw))
    yy = np.arange(h) / lattice
    xx = np.arange(w) / lattice
    y0 = yy.astype(int)
    x0 = xx.astype(int)
    fy = (yy - y0)[:, None]
    fx = (xx - x0)[None, :]
    g00 = grid[y0][:, x0]
    g01 = grid[y0][:, x0 + 1]
    g10 = grid[y0 + 1][:, x0]
    g11 = grid[y0 + 1][:, x0 + 1]
    top = g00 * (1 - fx) + g01 * fx
    bot = g10 * (1 - fx) + g11 * fx
    return top * (1 - fy) + bot * fy


def _round_clip(img: np.ndarray) -> np.ndarray:
    # round half away from zero; values are non-negative here
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def rain_streak_count(width: int, height: int) -> int:
    return math.ceil(0.002 * width * height / 12)


def apply_condition(frame: Frame, condition: ConditionTag | Condition, seed: int) -> Frame:
    """Apply a lighting/weather transform to a live frame."""
    if frame.role is not Role.CAV:
        raise ValueError("conditions apply to CAV frames only")
    cond = condition.condition if isinstance(condition, ConditionTag) else condition
    px = frame.pixels.astype(np.float64)
    if cond is Condition.MORNING:
        out = frame.pixels.copy()
    elif cond is Condition.NOON:
        out = _round_clip(px * 1.05)
    elif cond is Condition.EVENING:
        out = _round_clip(px * 0.6 + np.array([10.0, 0.0, -10.0]))
    elif cond is Condition.WET:
        # wet surfaces are static: the field depends on the scene seed only
        rng = _rng(0x3E, seed, _COND_CODE[cond])
        field = _value_noise(frame.height, frame.width, 16, 0.9, 1.1, rng)
        out = _round_clip(px * field[..., None])
    elif cond is Condition.RAIN:
        out = _round_clip(px * 0.7)
        rng = _rng(0x4A, seed, _COND_CODE[cond], frame.frame_index)
        h, w = frame.height, frame.width
        for _ in range(rain_streak_count(w, h)):
            length = int(rng.integers(8, 17))
            x = int(rng.integers(0, w))
            y = int(rng.integers(0, h))
            k = np.arange(length)
            xs, ys = x + k, y + k
            keep = (xs < w) & (ys < h)
            out[ys[keep], xs[keep]] = 220
    else:  # pragma: no cover
        raise ValueError(cond)
    return frame.replace(pixels=out)


def render_pair(spec: SceneSpec, t: int, provider: BackgroundProvider | None = None
                ) -> tuple[Frame, Frame, MaskSet]:
    """Return (cav, rf, ground-truth masks) for frame ``t`` of the batch."""
    if not 0 <= t < spec.batch_len:
        raise IndexError(f"frame ordinal {t} outside batch of {spec.batch_len}")
    provider = provider or ProceduralBackground(spec.width, spec.height)
    pose = spec.pose(t)
    rf = provider.render(pose, spec.background_id).replace(frame_index=t)
    canvas, masks = _composite(spec, np.asarray(rf.pixels), t)
    cav = Frame(canvas, role=Role.CAV, pose=pose, frame_index=t, condition=spec.condition)
    cav = apply_condition(cav, spec.condition, spec.seed)
    return cav, rf, MaskSet(tuple(masks), MaskSource.GROUND_TRUTH)


def render_batch(spec: SceneSpec, provider: BackgroundProvider | None = None):
    provider = provider or ProceduralBackground(spec.width, spec.height)
    cavs, rfs, gts = [], [], []
    for t in range(spec.batch_len):
        cav, rf, gt = render_pair(spec, t, provider)
        cavs.append(cav)
        rfs.append(rf)
        gts.append(gt)
    return cavs, rfs, gts
