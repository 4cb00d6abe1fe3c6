"""Delta segmentation: which regions of a live frame differ from the background render.

Both frames are split into colour regions; a live-frame region whose best IoU
against every background region is at most ``delta_thr`` counts as a
difference.  Critical-class masks from the class oracle are always added.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .core import Frame, Mask, MaskSet, MaskSource, Role
from .polygons import PolygonSet, extract_polygons


@dataclass(frozen=True)
class SegParams:
    delta_thr: float = 0.5
    color_quant_levels: int = 8
    min_region_area: int = 16
    poly_epsilon: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta_thr <= 1:
            raise ValueError(f"delta_thr must be in (0, 1], got {self.delta_thr}")
        if not 1 <= self.color_quant_levels <= 256:
            raise ValueError("color_quant_levels must be in [1, 256]")


def quantize_colors(frame: Frame, levels: int) -> np.ndarray:
    """Per-pixel code of the uniformly binned RGB colour."""
    q = (frame.pixels.astype(np.int64) * levels) // 256
    return (q[..., 0] * levels + q[..., 1]) * levels + q[..., 2]


def segment_regions(frame: Frame, params: SegParams = SegParams(),
                    source: MaskSource = MaskSource.SEGMENTER_CAV) -> MaskSet:
    codes = quantize_colors(frame, params.color_quant_levels)
    # every pixel belongs to a region: no code value is treated as background
    comps = measure.label(codes, background=-1, connectivity=1)
    areas = np.bincount(comps.ravel())
    masks = []
    for i, sl in enumerate(ndimage.find_objects(comps), start=1):
        if sl is None or areas[i] < params.min_region_area:
            continue
        bm = np.zeros(codes.shape, dtype=bool)
        bm[sl] = comps[sl] == i
        masks.append(Mask(bm, len(masks) + 1))
    return MaskSet(tuple(masks), source)


def _max_iou(m: Mask, others: MaskSet, boxes: np.ndarray) -> float:
    if m.area == 0 or len(boxes) == 0:
        return 0.0
    x0, y0, x1, y1 = m.bbox
    overlap = ((boxes[:, 0] <= x1) & (boxes[:, 2] >= x0)
               & (boxes[:, 1] <= y1) & (boxes[:, 3] >= y0))
    best = 0.0
    for j in np.flatnonzero(overlap):
        o = others[j]
        ox0, oy0, ox1, oy1 = boxes[j]
        sl = (slice(max(y0, oy0), min(y1, oy1) + 1), slice(max(x0, ox0), min(x1, ox1) + 1))
        inter = int(np.count_nonzero(m.bitmap[sl] & o.bitmap[sl]))
        if inter:
            best = max(best, inter / (m.area + o.area - inter))
    return best


def _boxes(ms: MaskSet) -> np.ndarray:
    rows = [m.bbox if m.bbox is not None else (1, 1, -1, -1) for m in ms]
    return np.asarray(rows, dtype=np.int64).reshape(-1, 4)


def match_delta_masks(m_rf: MaskSet, m_cav: MaskSet, params: SegParams = SegParams()) -> MaskSet:
    """Live-frame masks with no background counterpart above the IoU threshold."""
    if len(m_rf) and len(m_cav) and m_rf[0].shape != m_cav[0].shape:
        raise ValueError(f"mask rasters differ: {m_rf[0].shape} vs {m_cav[0].shape}")
    boxes = _boxes(m_rf)
    out = [m for m in m_cav if _max_iou(m, m_rf, boxes) <= params.delta_thr]
    return MaskSet(tuple(out), MaskSource.DELTA)


def _delta_from_region(f_cav: Frame, region: np.ndarray) -> Frame:
    px = np.where(region[..., None], f_cav.pixels, np.uint8(0))
    return f_cav.replace(pixels=px, role=Role.DELTA)


def _region_polygons(region: np.ndarray, eps: float) -> PolygonSet:
    if not region.any():
        return PolygonSet()
    return extract_polygons(MaskSet((Mask(region, 1),), MaskSource.DELTA), eps)


def seg_delta(f_rf: Frame, f_cav: Frame, class_oracle: MaskSet,
              params: SegParams = SegParams()) -> tuple[Frame, PolygonSet]:
    if f_rf.shape != f_cav.shape:
        raise ValueError(f"frame sizes differ: {f_rf.shape} vs {f_cav.shape}")
    m_rf = segment_regions(f_rf, params, MaskSource.SEGMENTER_RF)
    m_cav = segment_regions(f_cav, params, MaskSource.SEGMENTER_CAV)
    diff = match_delta_masks(m_rf, m_cav, params)
    region = diff.union(f_cav.shape) | class_oracle.union(f_cav.shape)
    return _delta_from_region(f_cav, region), _region_polygons(region, params.poly_epsilon)


def ideal_delta(f_cav: Frame, gt: MaskSet, poly_epsilon: float = 1.0) -> tuple[Frame, PolygonSet]:
    region = gt.union(f_cav.shape)
    return _delta_from_region(f_cav, region), extract_polygons(gt, poly_epsilon)
