"""Shared data model: frames, poses, masks and the pixel helpers used everywhere."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

ALIGN = 16
ORTHO_TOL = 1e-6


class Role(enum.Enum):
    CAV = "cav"
    RF = "rf"
    DELTA = "delta"
    REC = "rec"


class Condition(enum.Enum):
    MORNING = "morning"
    NOON = "noon"
    EVENING = "evening"
    WET = "wet"
    RAIN = "rain"


class Traffic(enum.Enum):
    EMPTY = "empty"
    SPARSE = "sparse"
    DENSE = "dense"


class MaskSource(enum.Enum):
    SEGMENTER_RF = "segmenter_rf"
    SEGMENTER_CAV = "segmenter_cav"
    CLASS_ORACLE = "class_oracle"
    DELTA = "delta"
    GROUND_TRUTH = "ground_truth"


@dataclass(frozen=True)
class ConditionTag:
    condition: Condition = Condition.MORNING
    traffic: Traffic = Traffic.EMPTY

    @classmethod
    def parse(cls, condition: str | Condition, traffic: str | Traffic = Traffic.EMPTY) -> "ConditionTag":
        return cls(Condition(condition), Traffic(traffic))


# The background model is always rendered under its training condition.
RF_CONDITION = ConditionTag(Condition.MORNING, Traffic.EMPTY)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CameraPose:
    """4x4 homogeneous camera-to-world transform."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose must be 4x4, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("pose bottom row must be (0, 0, 0, 1)")
        r = m[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > ORTHO_TOL:
            raise ValueError("pose rotation block is not orthonormal")
        object.__setattr__(self, "matrix", _readonly(m.copy()))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(4))

    @classmethod
    def translation(cls, x: float = 0.0, y: float = 0.0, z: float = 0.0) -> "CameraPose":
        m = np.eye(4)
        m[:3, 3] = (x, y, z)
        return cls(m)

    def __eq__(self, other):
        return isinstance(other, CameraPose) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def to_bytes(self) -> bytes:
        """Top three rows as little-endian float64 (the fourth row is implied)."""
        return self.matrix[:3].astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CameraPose":
        top = np.frombuffer(data, dtype="<f8", count=12).reshape(3, 4)
        return cls(np.vstack([top, [0.0, 0.0, 0.0, 1.0]]))


POSE_NBYTES = 96


@dataclass(frozen=True, eq=False)
class Frame:
    """RGB raster, shape (height, width, 3), uint8."""

    pixels: np.ndarray
    role: Role = Role.CAV
    pose: CameraPose = field(default_factory=CameraPose.identity)
    frame_index: int = 0
    condition: ConditionTag = field(default_factory=ConditionTag)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must have shape (H, W, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise TypeError(f"pixels must be uint8, got {px.dtype}")
        h, w = px.shape[:2]
        if h == 0 or w == 0 or h % ALIGN or w % ALIGN:
            raise ValueError(f"frame dimensions {w}x{h} must be nonzero multiples of {ALIGN}")
        object.__setattr__(self, "pixels", _readonly(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    @property
    def nbytes(self) -> int:
        return self.pixels.size

    def replace(self, **changes) -> "Frame":
        kw = dict(pixels=self.pixels, role=self.role, pose=self.pose,
                  frame_index=self.frame_index, condition=self.condition)
        kw.update(changes)
        return Frame(**kw)

    def __eq__(self, other):
        return (isinstance(other, Frame) and self.role == other.role
                and self.pose == other.pose and self.frame_index == other.frame_index
                and self.condition == other.condition
                and np.array_equal(self.pixels, other.pixels))

    __hash__ = None

    @classmethod
    def filled(cls, width: int, height: int, rgb=(0, 0, 0), **kw) -> "Frame":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = rgb
        return cls(px, **kw)


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary region with a label; bbox and area are derived from the bitmap.

    ``bbox`` is inclusive ``(x0, y0, x1, y1)``, or ``None`` for an empty mask.
    """

    bitmap: np.ndarray
    label: int
    class_name: str | None = None
    bbox: tuple[int, int, int, int] | None = field(init=False)
    area: int = field(init=False)

    def __post_init__(self):
        bm = np.asarray(self.bitmap, dtype=bool)
        if bm.ndim != 2:
            raise ValueError("mask bitmap must be 2-D")
        if int(self.label) < 1:
            raise ValueError("mask label must be >= 1 (0 is background)")
        object.__setattr__(self, "bitmap", _readonly(bm))
        object.__setattr__(self, "label", int(self.label))
        area = int(np.count_nonzero(bm))
        object.__setattr__(self, "area", area)
        if area:
            rows = np.flatnonzero(bm.any(axis=1))
            cols = np.flatnonzero(bm.any(axis=0))
            bbox = (int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))
        else:
            bbox = None
        object.__setattr__(self, "bbox", bbox)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bitmap.shape

    def packed(self) -> bytes:
        return np.packbits(self.bitmap, axis=None).tobytes()

    def __eq__(self, other):
        return (isinstance(other, Mask) and self.label == other.label
                and self.class_name == other.class_name
                and self.shape == other.shape and np.array_equal(self.bitmap, other.bitmap))

    __hash__ = None


@dataclass(frozen=True)
class MaskSet:
    masks: tuple[Mask, ...] = ()
    source: MaskSource = MaskSource.GROUND_TRUTH

    def __post_init__(self):
        masks = tuple(self.masks)
        labels = [m.label for m in masks]
        if len(set(labels)) != len(labels):
            raise ValueError("mask labels must be unique within a MaskSet")
        shapes = {m.shape for m in masks}
        if len(shapes) > 1:
            raise ValueError(f"masks in a set must share one raster shape, got {shapes}")
        object.__setattr__(self, "masks", masks)

    def __len__(self):
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __getitem__(self, i):
        return self.masks[i]

    @property
    def labels(self) -> list[int]:
        return [m.label for m in self.masks]

    def union(self, shape: tuple[int, int] | None = None) -> np.ndarray:
        if not self.masks:
            if shape is None:
                raise ValueError("shape required for the union of an empty MaskSet")
            return np.zeros(shape, dtype=bool)
        out = np.zeros(self.masks[0].shape, dtype=bool)
        for m in self.masks:
            out |= m.bitmap
        return out

    def label_image(self, shape: tuple[int, int]) -> np.ndarray:
        """Painter's-order label raster (later masks win), 0 = background."""
        out = np.zeros(shape, dtype=np.int32)
        for m in self.masks:
            out[m.bitmap] = m.label
        return out


def luma(frame: Frame) -> np.ndarray:
    """BT.601 luma plane, float64 in [0, 255]."""
    px = frame.pixels.astype(np.float64)
    return 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]


def mask_iou(a: Mask, b: Mask) -> float:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a.bitmap | b.bitmap)
    if union == 0:
        return 0.0
    return np.count_nonzero(a.bitmap & b.bitmap) / union


def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=np.float64)


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1]], dtype=np.float64)


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=np.float64)


def convert_pose_carla_to_ns(m_cl: CameraPose, t_trans: np.ndarray | None = None) -> CameraPose:
    """Map a simulator camera pose into the renderer's axis convention.

    ``t_trans`` is the axis-substitution matrix between the two conventions;
    it defaults to identity because the source convention is configurable.
    """
    t = np.eye(4) if t_trans is None else np.asarray(t_trans, dtype=np.float64)
    if t.shape != (4, 4):
        raise ValueError("t_trans must be 4x4")
    if abs(np.linalg.det(t)) < 1e-12:
        raise ValueError("t_trans is not invertible")
    fixed = rot_z(np.pi / 2) @ rot_x(-np.pi / 2) @ rot_y(np.pi)
    m = fixed @ t @ m_cl.matrix
    # cos(pi/2) is not exactly zero in floating point; clean the homogeneous row
    m[3] = (0.0, 0.0, 0.0, 1.0)
    return CameraPose(m)
