"""Experiment grid runner: config loading, per-cell runs, aggregation and checks.

Grid iteration order is fixed (seeds, conditions, traffic, variants,
quant steps, BLER targets) and results are collected in that order no
matter how many worker processes are used, so CSV output is reproducible
byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import bler_to_config
from .codec import CodecParams
from .core import Condition, Traffic
from .deltaseg import SegParams
from .metrics import CONSTRAINTS, CSV_COLUMNS, ConstraintSpec, QualityReport, format_row, rfdvc_savings_vs_baseline
from .pipeline import Variant, finish_run, prepare_run
from .scenegen import SceneSpec

log = logging.getLogger(__name__)

SEED_ENV = "RFDVC_SEED"
MIN_AGGREGATE_SEEDS = 10
GRID_COLUMNS = ["seed"] + CSV_COLUMNS
CELL_KEYS = ("condition", "traffic", "variant", "quant_step", "bler_target")
SUMMARY_COLUMNS = list(CELL_KEYS) + [
    "n", "savings_q1", "savings_median", "savings_q3",
    "vs_vc_q1", "vs_vc_median", "vs_vc_q3", "ssim_rec_mean", "ssim_rec_std",
]
CURVE_COLUMNS = ["variant", "bler_target", "n", "ssim_rec_mean", "ssim_rec_std"]
RAIN = Condition.RAIN.value
# single-cell shorthand accepted in config files
SINGULAR = {"seed": "seeds", "condition": "conditions", "variant": "variants",
            "quant_step": "quant_steps", "bler_target": "bler_targets"}


def _pick(cls, d: dict | None, what: str):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {what} key(s): {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...] = (0,)
    conditions: tuple[str, ...] = ("morning",)
    traffic: tuple[str, ...] = ("sparse",)
    variants: tuple[str, ...] = ("vc", "gt", "ds")
    quant_steps: tuple[int, ...] = (8,)
    bler_targets: tuple[float, ...] = (0.0,)
    scene: dict = field(default_factory=dict)       # extra SceneSpec fields
    channel: dict = field(default_factory=dict)     # burstiness / packet overrides
    codec: dict = field(default_factory=dict)       # gop_len, slice_rows
    seg: SegParams = SegParams()
    constraints: ConstraintSpec = ConstraintSpec()
    out: str = "results"

    def __post_init__(self):
        for name in ("seeds", "conditions", "traffic", "variants", "quant_steps", "bler_targets"):
            if not getattr(self, name):
                raise ValueError(f"empty grid axis: {name}")
        for c in self.conditions:
            Condition(c)
        for t in self.traffic:
            Traffic(t)
        for v in self.variants:
            Variant(v)
        for b in self.bler_targets:
            if not 0.0 <= b <= 0.5:
                raise ValueError(f"BLER target {b} outside [0, 0.5]")
        bad = set(self.scene) & {"seed", "condition", "traffic", "n_vehicles", "n_pedestrians"}
        if bad:
            raise ValueError(f"scene keys set by the grid itself: {sorted(bad)}")
        bad = set(self.channel) - {"p_bg", "payload_bytes", "t_net", "tau"}
        if bad:
            raise ValueError(f"channel keys must be p_bg, payload_bytes, t_net or tau, got {sorted(bad)}")
        bad = set(self.codec) - {"gop_len", "slice_rows"}
        if bad:
            raise ValueError(f"codec keys must be gop_len or slice_rows, got {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for one, many in SINGULAR.items():
            if one in d and many not in d and not (one == "seed" and "n_seeds" in d):
                d[many] = [d.pop(one)]
        if "seeds" not in d and "n_seeds" in d:
            base = int(d.pop("seed", 0))
            d["seeds"] = [base + i for i in range(int(d.pop("n_seeds")))]
        for key in ("seeds", "conditions", "traffic", "variants", "quant_steps", "bler_targets"):
            if key in d:
                v = d[key]
                d[key] = (v,) if isinstance(v, (str, int, float)) else tuple(v)
        d["seg"] = _pick(SegParams, d.get("seg"), "seg")
        d["constraints"] = _pick(ConstraintSpec, d.get("constraints"), "constraints")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path, env=os.environ) -> "ExperimentConfig":
        with open(path) as fh:
            cfg = cls.from_dict(json.load(fh))
        return cfg.with_env_seed(env)

    def with_env_seed(self, env=os.environ) -> "ExperimentConfig":
        """``RFDVC_SEED=S`` replaces the seed list by S, S+1, ... (same length)."""
        raw = env.get(SEED_ENV)
        if raw is None or raw == "":
            return self
        base = int(raw)
        return replace(self, seeds=tuple(base + i for i in range(len(self.seeds))))

    @property
    def n_cells(self) -> int:
        return (len(self.seeds) * len(self.conditions) * len(self.traffic) * len(self.variants)
                * len(self.quant_steps) * len(self.bler_targets))

    def codec_params(self, quant_step: int) -> CodecParams:
        return CodecParams(quant_step=quant_step, **self.codec)

    def scene_spec(self, seed: int, condition: str, traffic: str) -> SceneSpec:
        return SceneSpec.for_traffic(seed, condition, traffic, **self.scene)


def channel_seed(scene_seed: int, bler: float) -> int:
    """Channel seed shared by all variants of a scene so loss comparisons are paired."""
    key = [scene_seed & 0xFFFFFFFFFFFFFFFF, int(round(bler * 1e6))]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Job:
    index: int
    seed: int
    condition: str
    traffic: str
    variant: str
    quant_step: int


def jobs_for(cfg: ExperimentConfig) -> list[Job]:
    out = []
    for seed in cfg.seeds:
        for c in cfg.conditions:
            for t in cfg.traffic:
                for v in cfg.variants:
                    for q in cfg.quant_steps:
                        out.append(Job(len(out), seed, c, t, v, q))
    return out


def batch_report(reports: list[QualityReport]) -> QualityReport:
    """Collapse per-frame reports of one batch into a single row.

    Byte counts are summed, quality figures averaged; a verdict passes only
    if it passes for every frame.
    """
    first = reports[0]
    agg = QualityReport(
        variant=first.variant, condition=first.condition, traffic=first.traffic,
        quant_step=first.quant_step, bler_target=first.bler_target, realized_loss=first.realized_loss,
        raw_bytes=sum(r.raw_bytes for r in reports),
        compressed_bytes=sum(r.compressed_bytes for r in reports),
        psnr_rec_db=float(np.mean([r.psnr_rec_db for r in reports])),
        ssim_rec=float(np.mean([r.ssim_rec for r in reports])),
        ssim_delta=float(np.mean([r.ssim_delta for r in reports])),
    )
    agg.constraints = {name: all(r.constraints[name] for r in reports) for name in CONSTRAINTS}
    return agg


def run_job(cfg: ExperimentConfig, job: Job) -> list[tuple[int, QualityReport]] | str:
    """All BLER points of one scene/variant/quant cell; the encode is shared."""
    try:
        spec = cfg.scene_spec(job.seed, job.condition, job.traffic)
        prep = prepare_run(spec, job.variant, cfg.codec_params(job.quant_step), cfg.seg)
        rows = []
        for bler in cfg.bler_targets:
            ch = bler_to_config(bler, seed=channel_seed(job.seed, bler), **cfg.channel)
            res = finish_run(prep, ch, cfg.constraints, bler_target=bler)
            rows.append((job.seed, batch_report(res.reports)))
        return rows
    except Exception as exc:  # recorded, grid continues
        log.exception("cell %s failed", job)
        return f"{type(exc).__name__}: {exc}"


def _run_job_star(args):
    return run_job(*args)


@dataclass
class GridResult:
    rows: list[tuple[int, QualityReport]]
    failures: list[tuple[Job, str]]


def _apply_robustness(rows: list[tuple[int, QualityReport]], conditions) -> None:
    """Robustness holds when delta quality passes under every condition of the grid."""
    groups: dict[tuple, list[QualityReport]] = {}
    for seed, r in rows:
        groups.setdefault((seed, r.traffic, r.variant, r.quant_step, r.bler_target), []).append(r)
    for group in groups.values():
        covered = {r.condition for r in group}
        verdict = set(conditions) <= covered and all(r.constraints["delta_quality"] for r in group)
        for r in group:
            r.constraints["robustness"] = verdict


def run_grid(cfg: ExperimentConfig, jobs: int = 1) -> GridResult:
    if len(cfg.seeds) < MIN_AGGREGATE_SEEDS:
        log.warning("only %d seed(s); aggregate statistics want at least %d", len(cfg.seeds), MIN_AGGREGATE_SEEDS)
    todo = jobs_for(cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job_star, [(cfg, j) for j in todo]))
    else:
        results = [run_job(cfg, j) for j in todo]
    rows, failures = [], []
    for job, res in zip(todo, results):
        if isinstance(res, str):
            failures.append((job, res))
        else:
            rows.extend(res)
    _apply_robustness(rows, cfg.conditions)
    return GridResult(rows, failures)


def quartiles(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(q1), float(med), float(q3)


def _cell(r: QualityReport) -> tuple:
    return tuple(getattr(r, k) for k in CELL_KEYS)


def vs_baseline(rows: list[tuple[int, QualityReport]]) -> dict[int, float]:
    """Savings of each row against the full-frame run of the same scene and channel."""
    base = {}
    for seed, r in rows:
        if r.variant == Variant.VC_BASELINE.value:
            base[(seed, r.condition, r.traffic, r.quant_step, r.bler_target)] = r
    out = {}
    for i, (seed, r) in enumerate(rows):
        vc = base.get((seed, r.condition, r.traffic, r.quant_step, r.bler_target))
        if vc is not None:
            out[i] = rfdvc_savings_vs_baseline(r, vc)
    return out


def summarize(rows: list[tuple[int, QualityReport]]) -> list[dict]:
    vs = vs_baseline(rows)
    cells: dict[tuple, list[int]] = {}
    for i, (_, r) in enumerate(rows):
        cells.setdefault(_cell(r), []).append(i)
    out = []
    for key, idx in cells.items():
        sav = [rows[i][1].savings_pct for i in idx]
        ss = [rows[i][1].ssim_rec for i in idx]
        d = dict(zip(CELL_KEYS, key))
        d["n"] = len(idx)
        d["savings_q1"], d["savings_median"], d["savings_q3"] = quartiles(sav)
        rel = [vs[i] for i in idx if i in vs]
        if rel:
            d["vs_vc_q1"], d["vs_vc_median"], d["vs_vc_q3"] = quartiles(rel)
        else:
            d["vs_vc_q1"] = d["vs_vc_median"] = d["vs_vc_q3"] = ""
        d["ssim_rec_mean"] = float(np.mean(ss))
        d["ssim_rec_std"] = float(np.std(ss))
        out.append(d)
    return out


def bler_curves(rows: list[tuple[int, QualityReport]], rain: bool) -> list[dict]:
    """Mean Rec SSIM per (variant, BLER), pooled over seeds, conditions and traffic."""
    pts: dict[tuple, list[float]] = {}
    for _, r in rows:
        if (r.condition == RAIN) != rain:
            continue
        pts.setdefault((r.variant, r.bler_target), []).append(r.ssim_rec)
    order = {v.value: i for i, v in enumerate(Variant)}
    out = []
    for (v, b), vals in sorted(pts.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
        out.append({"variant": v, "bler_target": b, "n": len(vals),
                    "ssim_rec_mean": float(np.mean(vals)), "ssim_rec_std": float(np.std(vals))})
    return out


def write_csv(path, columns, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow(format_row(row, columns))


def write_grid_csv(path, rows: list[tuple[int, QualityReport]]) -> None:
    write_csv(path, GRID_COLUMNS, [{"seed": s, **r.row()} for s, r in rows])


def write_failures(path, failures) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "condition", "traffic", "variant", "quant_step", "error"])
        for job, err in failures:
            w.writerow([job.seed, job.condition, job.traffic, job.variant, job.quant_step, err])


# ---- checks -------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def non_increasing(values, max_inversions: int = 1, tol: float = 0.01) -> bool:
    """Sorted-sequence test allowing a small number of small upward steps."""
    ups = np.diff(np.asarray(values, dtype=np.float64))
    ups = ups[ups > 0]
    return len(ups) <= max_inversions and bool(np.all(ups < tol))


def grid_checks(result: GridResult, min_fraction: float = 0.95) -> list[Check]:
    checks = [Check("no failed cells", not result.failures, f"{len(result.failures)} failure(s)")]
    by_scene: dict[tuple, dict[str, int]] = {}
    for seed, r in result.rows:
        key = (seed, r.condition, r.traffic, r.quant_step, r.bler_target)
        by_scene.setdefault(key, {})[r.variant] = r.compressed_bytes
    triples = [d for d in by_scene.values() if {"vc", "gt", "ds"} <= set(d)]
    if triples:
        ok = sum(d["gt"] <= d["ds"] <= d["vc"] for d in triples)
        frac = ok / len(triples)
        checks.append(Check("bytes gt <= ds <= vc", frac >= min_fraction,
                            f"{ok}/{len(triples)} scenes ({100 * frac:.1f}%)"))
    summ = {(*[d[k] for k in CELL_KEYS],): d for d in summarize(result.rows)}
    pairs = []
    for key, d in summ.items():
        if d["variant"] == "gt":
            other = summ.get((key[0], key[1], "ds", *key[3:]))
            if other is not None:
                pairs.append(d["savings_median"] >= other["savings_median"])
    if pairs:
        frac = sum(pairs) / len(pairs)
        checks.append(Check("median savings gt >= ds per cell", frac >= min_fraction,
                            f"{sum(pairs)}/{len(pairs)} cells"))
    return checks


def sweep_checks(curves: list[dict], probe: float = 0.25, min_gap: float = 0.0) -> list[Check]:
    checks = []
    per_variant: dict[str, list[tuple[float, float]]] = {}
    for c in curves:
        per_variant.setdefault(c["variant"], []).append((c["bler_target"], c["ssim_rec_mean"]))
    for v, pts in per_variant.items():
        ys = [y for _, y in sorted(pts)]
        checks.append(Check(f"{v} ssim non-increasing in BLER", non_increasing(ys),
                            " ".join(f"{y:.4f}" for y in ys)))
    vc = dict(per_variant.get("vc", []))
    if probe in vc:
        for v in ("gt", "ds"):
            pts = dict(per_variant.get(v, []))
            if probe in pts:
                gap = pts[probe] - vc[probe]
                checks.append(Check(f"{v} - vc ssim at BLER {probe}", gap >= min_gap, f"gap {gap:+.4f}"))
    return checks


# ---- entry points used by the CLI ----------------------------------------

def grid_to_dir(cfg: ExperimentConfig, out: Path, jobs: int = 1, plots: bool = True) -> GridResult:
    out.mkdir(parents=True, exist_ok=True)
    result = run_grid(cfg, jobs)
    write_grid_csv(out / "grid.csv", result.rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(result.rows))
    if result.failures:
        write_failures(out / "failures.csv", result.failures)
    if plots and result.rows:
        from .plotting import savings_boxplot
        savings_boxplot(result.rows, out / "savings_box.png", vs_baseline(result.rows) or None)
    return result


def sweep_to_dir(cfg: ExperimentConfig, out: Path, jobs: int = 1, plots: bool = True):
    if list(cfg.bler_targets) != sorted(cfg.bler_targets):
        raise ValueError("bler_targets must be sorted ascending")
    out.mkdir(parents=True, exist_ok=True)
    result = run_grid(cfg, jobs)
    write_grid_csv(out / "grid.csv", result.rows)
    curves = {"": bler_curves(result.rows, rain=False), "_rain": bler_curves(result.rows, rain=True)}
    for suffix, rows in curves.items():
        if rows:
            write_csv(out / f"ssim_bler{suffix}.csv", CURVE_COLUMNS, rows)
            if plots:
                from .plotting import ssim_bler_plot
                ssim_bler_plot(rows, out / f"ssim_bler{suffix}.png",
                               title="Rain" if suffix else "Non-rain conditions")
    if result.failures:
        write_failures(out / "failures.csv", result.failures)
    return result, curves


__all__ = [
    "ExperimentConfig", "Job", "GridResult", "Check", "run_grid", "run_job", "jobs_for", "batch_report",
    "summarize", "quartiles", "bler_curves", "vs_baseline", "grid_checks", "sweep_checks", "non_increasing",
    "write_grid_csv", "write_csv", "grid_to_dir", "sweep_to_dir", "channel_seed", "SEED_ENV",
    "GRID_COLUMNS", "SUMMARY_COLUMNS", "CURVE_COLUMNS",
]
