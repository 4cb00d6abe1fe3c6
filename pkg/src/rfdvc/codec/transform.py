"""Colour conversion, 8x8 orthonormal DCT-II and zigzag scan."""

from __future__ import annotations

import numpy as np

N = 8


def _dct_matrix(n: int = N) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] *= np.sqrt(1.0 / n)
    c[1:] *= np.sqrt(2.0 / n)
    return c


DCT = _dct_matrix()
DCT.setflags(write=False)


def dct2(blocks: np.ndarray) -> np.ndarray:
    """Forward orthonormal 2-D DCT-II over the trailing 8x8 axes."""
    return DCT @ blocks @ DCT.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    return DCT.T @ coeffs @ DCT


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.trunc(x + np.copysign(0.5, x))


def _zigzag(n: int = N) -> np.ndarray:
    order = sorted(((r, c) for r in range(n) for c in range(n)),
                   key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]))
    return np.array([r * n + c for r, c in order])


ZIGZAG = _zigzag()
ZIGZAG.setflags(write=False)


def rgb_to_ycbcr(px: np.ndarray) -> np.ndarray:
    """BT.601 full-range; returns int32 planes of shape (3, H, W) in [0, 255]."""
    p = px.astype(np.float64)
    r, g, b = p[..., 0], p[..., 1], p[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    out = round_half_away(np.stack([y, cb, cr]))
    return np.clip(out, 0, 255).astype(np.int32)


def ycbcr_to_rgb(planes: np.ndarray) -> np.ndarray:
    y = planes[0].astype(np.float64)
    cb = planes[1] - 128.0
    cr = planes[2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    out = round_half_away(np.stack([r, g, b], axis=-1))
    return np.clip(out, 0, 255).astype(np.uint8)


def to_blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) -> (H/8, W/8, 8, 8)."""
    h, w = plane.shape
    return plane.reshape(h // N, N, w // N, N).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    br, bc = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(br * N, bc * N)
