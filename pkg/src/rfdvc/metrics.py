"""Quality metrics, data-savings accounting and the transmission constraint checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import ndimage

from .core import Frame, luma

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


def _check_same(a: Frame, b: Frame) -> None:
    if a.shape != b.shape:
        raise ValueError(f"frame sizes differ: {a.shape} vs {b.shape}")


def psnr(a: Frame, b: Frame) -> float:
    _check_same(a, b)
    mse = np.mean((a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / mse))


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-window SSIM over the valid region of two float planes."""
    g = gaussian_window()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x ** 2
    syy = _filter_valid(y * y, g) - mu_y ** 2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (sxx + syy + SSIM_C2)
    return num / den


def ssim(a: Frame, b: Frame) -> float:
    """Mean SSIM on luma, 11x11 Gaussian window (sigma 1.5), valid region only."""
    _check_same(a, b)
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"frames must be at least {SSIM_WIN}x{SSIM_WIN}")
    if np.array_equal(a.pixels, b.pixels):
        return 1.0
    return float(ssim_map(luma(a), luma(b)).mean())


def data_savings(raw_bytes: float, compressed_bytes: float) -> float:
    if raw_bytes <= 0:
        raise ValueError("raw_bytes must be positive")
    return 100.0 * (1.0 - compressed_bytes / raw_bytes)


def compression_ratio(raw_bytes: float, compressed_bytes: float) -> float:
    if compressed_bytes <= 0:
        raise ValueError("compressed_bytes must be positive")
    return raw_bytes / compressed_bytes


def rfdvc_savings_vs_baseline(report_rfdvc, report_vc) -> float:
    """Savings of a delta run relative to the full-frame baseline on the same scene."""
    rf = getattr(report_rfdvc, "compressed_bytes", report_rfdvc)
    vc = getattr(report_vc, "compressed_bytes", report_vc)
    if vc <= 0:
        raise ValueError("baseline byte count must be positive")
    return 100.0 * (1.0 - rf / vc)


CONSTRAINTS = ("throughput", "delta_quality", "rec_quality", "loss", "robustness")


@dataclass(frozen=True)
class ConstraintSpec:
    t_net: float = 10e6
    tau: float = 1.0 / 30.0
    q_min_delta: float = 0.9
    q_min_rec: float = 0.8
    epsilon: float = 0.1

    def __post_init__(self):
        if self.t_net <= 0 or self.tau <= 0:
            raise ValueError("t_net and tau must be positive")
        for name in ("q_min_delta", "q_min_rec"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be an SSIM value in [-1, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be a probability")


@dataclass
class QualityReport:
    variant: str
    condition: str
    traffic: str
    quant_step: int
    bler_target: float
    realized_loss: float
    raw_bytes: int
    compressed_bytes: int
    savings_pct: float = field(init=False)
    psnr_rec_db: float = 0.0
    ssim_rec: float = 0.0
    ssim_delta: float = 1.0
    constraints: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        self.savings_pct = data_savings(self.raw_bytes, self.compressed_bytes)

    def row(self) -> dict:
        d = asdict(self)
        verdicts = d.pop("constraints")
        for name in CONSTRAINTS:
            v = verdicts.get(name)
            d[f"c_{name}"] = "" if v is None else ("PASS" if v else "FAIL")
        return d


CSV_COLUMNS = [f.name for f in fields(QualityReport) if f.name != "constraints"] + [
    f"c_{name}" for name in CONSTRAINTS
]


def format_row(row: dict, columns=CSV_COLUMNS) -> list[str]:
    """Fixed textual formatting so CSV bytes are reproducible."""
    out = []
    for c in columns:
        v = row[c]
        if isinstance(v, float):
            out.append(f"{v:.6f}")
        else:
            out.append(str(v))
    return out


def evaluate_constraints(report: QualityReport, spec: ConstraintSpec,
                         reports_all_conditions: list[QualityReport],
                         conditions: list[str] | None = None) -> dict[str, bool]:
    """Verdict per constraint; robustness requires delta quality under every condition."""
    covered = {r.condition for r in reports_all_conditions}
    required = set(conditions or ()) | {report.condition}
    missing = required - covered
    if missing:
        raise ValueError(f"no reports for condition(s): {sorted(missing)}")
    return {
        "throughput": 8 * report.compressed_bytes <= spec.t_net * spec.tau,
        "delta_quality": report.ssim_delta >= spec.q_min_delta,
        "rec_quality": report.ssim_rec >= spec.q_min_rec,
        "loss": report.realized_loss <= spec.epsilon,
        "robustness": all(r.ssim_delta >= spec.q_min_delta for r in reports_all_conditions),
    }
