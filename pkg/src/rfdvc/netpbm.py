"""Binary PPM (P6) / PGM (P5) reading and writing, plus alignment to 16-px grids."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .core import ALIGN, Frame, Mask

_HEADER = re.compile(rb"\A(P[56])\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def _parse(data: bytes, magic: bytes):
    m = _HEADER.match(data)
    if not m or m.group(1) != magic:
        raise ValueError(f"not a binary {magic.decode()} file")
    w, h, maxval = int(m.group(2)), int(m.group(3)), int(m.group(4))
    if not 0 < maxval < 65536:
        raise ValueError(f"bad maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    return w, h, maxval, dtype, data[m.end():]


def read_ppm_array(path) -> np.ndarray:
    w, h, maxval, dtype, body = _parse(Path(path).read_bytes(), b"P6")
    arr = np.frombuffer(body, dtype=dtype, count=w * h * 3).reshape(h, w, 3)
    if maxval != 255:
        arr = np.round(arr.astype(np.float64) * 255.0 / maxval)
    return arr.astype(np.uint8)


def write_ppm(path, pixels: np.ndarray) -> None:
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + px.tobytes())


def read_pgm(path) -> np.ndarray:
    w, h, _, dtype, body = _parse(Path(path).read_bytes(), b"P5")
    return np.frombuffer(body, dtype=dtype, count=w * h).reshape(h, w).astype(np.int64)


def write_pgm(path, gray: np.ndarray) -> None:
    g = np.asarray(gray)
    h, w = g.shape
    maxval = 255 if g.max(initial=0) <= 255 else 65535
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    Path(path).write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + g.astype(dtype).tobytes())


def write_mask_pgm(path, mask: Mask) -> None:
    write_pgm(path, mask.bitmap.astype(np.int64) * mask.label)


def read_mask_pgm(path) -> Mask:
    gray = read_pgm(path)
    labels = np.unique(gray[gray > 0])
    if len(labels) != 1:
        raise ValueError(f"{path}: expected exactly one nonzero label, found {labels.tolist()}")
    return Mask(gray > 0, int(labels[0]))


def align16(pixels: np.ndarray) -> np.ndarray:
    """Pad with black to the next multiple of 16 in each dimension."""
    h, w = pixels.shape[:2]
    ph, pw = -h % ALIGN, -w % ALIGN
    if not (ph or pw):
        return pixels
    return np.pad(pixels, ((0, ph), (0, pw), (0, 0)))


def read_frame(path, **kw) -> Frame:
    return Frame(align16(read_ppm_array(path)), **kw)


def write_frame(path, frame: Frame) -> None:
    write_ppm(path, frame.pixels)
