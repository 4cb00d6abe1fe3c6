import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfdvc.harness import (
    CURVE_COLUMNS, GRID_COLUMNS, SUMMARY_COLUMNS, ExperimentConfig, GridResult, batch_report, bler_curves,
    channel_seed, grid_checks, grid_to_dir, jobs_for, non_increasing, quartiles, run_grid, summarize,
    sweep_checks, sweep_to_dir, vs_baseline,
)
from rfdvc.metrics import QualityReport

TINY = dict(scene={"width": 96, "height": 64, "batch_len": 3}, codec={"gop_len": 3})


def _cfg(**kw):
    return ExperimentConfig.from_dict({**TINY, **kw})


def _row(variant="gt", condition="noon", bler=0.0, comp=100, ssim=0.9, seed=0, traffic="sparse"):
    r = QualityReport(variant=variant, condition=condition, traffic=traffic, quant_step=8, bler_target=bler,
                      realized_loss=0.0, raw_bytes=1000, compressed_bytes=comp, ssim_rec=ssim)
    r.constraints = {"delta_quality": True}
    return seed, r


def _sorted_quartile(values, q):
    # linear interpolation between closest ranks on an explicitly sorted list
    xs = sorted(values)
    pos = q * (len(xs) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


class TestConfig:
    def test_singular_keys(self):
        cfg = ExperimentConfig.from_dict({"seed": 3, "condition": "wet", "variant": "gt",
                                          "quant_step": 4, "bler_target": 0.1, "traffic": "dense"})
        assert cfg.seeds == (3,) and cfg.conditions == ("wet",) and cfg.variants == ("gt",)
        assert cfg.quant_steps == (4,) and cfg.bler_targets == (0.1,) and cfg.traffic == ("dense",)
        assert cfg.n_cells == 1

    def test_n_seeds(self):
        assert ExperimentConfig.from_dict({"seed": 5, "n_seeds": 3}).seeds == (5, 6, 7)

    @pytest.mark.parametrize("d", [
        {"conditions": []}, {"conditions": ["fog"]}, {"variants": ["h264"]}, {"bler_targets": [0.6]},
        {"bogus": 1}, {"seg": {"nope": 1}}, {"constraints": {"q_min_rec": 3}}, {"scene": {"seed": 1}},
        {"traffic": ["jam"]}, {"channel": {"seed": 1}}, {"channel": {"e_b": 0.5}}, {"codec": {"quant_step": 2}},
    ])
    def test_invalid(self, d):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(d)

    def test_env_seed_override(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seeds": [0, 1, 2]}))
        assert ExperimentConfig.load(path, env={}).seeds == (0, 1, 2)
        assert ExperimentConfig.load(path, env={"RFDVC_SEED": "40"}).seeds == (40, 41, 42)
        assert ExperimentConfig.load(path, env={"RFDVC_SEED": ""}).seeds == (0, 1, 2)

    def test_job_order(self):
        cfg = _cfg(seeds=[1, 2], conditions=["noon", "wet"], variants=["vc", "gt"])
        keys = [(j.seed, j.condition, j.variant) for j in jobs_for(cfg)]
        assert keys == [(s, c, v) for s in (1, 2) for c in ("noon", "wet") for v in ("vc", "gt")]
        assert [j.index for j in jobs_for(cfg)] == list(range(8))

    def test_channel_seed(self):
        assert channel_seed(3, 0.25) == channel_seed(3, 0.25)
        assert len({channel_seed(s, b) for s in range(5) for b in (0.0, 0.1, 0.25)}) == 15


class TestAggregation:
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=40))
    def test_quartiles_match_sort_oracle(self, xs):
        got = quartiles(xs)
        want = tuple(_sorted_quartile(xs, q) for q in (0.25, 0.5, 0.75))
        assert got == pytest.approx(want, abs=1e-9)

    def test_batch_report(self):
        a, b = _row(comp=100, ssim=0.8)[1], _row(comp=50, ssim=1.0)[1]
        a.constraints = {k: True for k in ("throughput", "delta_quality", "rec_quality", "loss", "robustness")}
        b.constraints = dict(a.constraints, loss=False)
        agg = batch_report([a, b])
        assert agg.compressed_bytes == 150 and agg.raw_bytes == 2000
        assert agg.ssim_rec == pytest.approx(0.9)
        assert agg.savings_pct == pytest.approx(92.5)
        assert agg.constraints["loss"] is False and agg.constraints["throughput"] is True

    def test_vs_baseline_pairs_same_scene(self):
        rows = [_row("vc", comp=200), _row("gt", comp=50), _row("gt", comp=50, seed=1)]
        vs = vs_baseline(rows)
        assert vs == {0: 0.0, 1: pytest.approx(75.0)}

    def test_summary_cells(self):
        rows = [_row("gt", comp=c, seed=s) for s, c in enumerate([100, 200, 300, 400])]
        (d,) = summarize(rows)
        assert d["n"] == 4
        assert d["savings_median"] == pytest.approx(75.0)
        assert d["vs_vc_median"] == ""
        assert list(d) == SUMMARY_COLUMNS

    def test_curves_split_rain(self):
        rows = [_row("vc", "noon", 0.0, ssim=0.9), _row("vc", "rain", 0.0, ssim=0.5),
                _row("gt", "wet", 0.1, ssim=0.8), _row("gt", "noon", 0.1, ssim=0.6)]
        dry = bler_curves(rows, rain=False)
        wet = bler_curves(rows, rain=True)
        assert [(c["variant"], c["bler_target"], c["n"]) for c in dry] == [("vc", 0.0, 1), ("gt", 0.1, 2)]
        assert dry[1]["ssim_rec_mean"] == pytest.approx(0.7)
        assert [c["ssim_rec_mean"] for c in wet] == [0.5]
        assert list(dry[0]) == CURVE_COLUMNS

    @pytest.mark.parametrize("ys,ok", [([1, 0.9, 0.8], True), ([1, 1.005, 0.8], True),
                                       ([1, 1.02, 0.8], False), ([1, 1.005, 0.9, 0.905], False)])
    def test_non_increasing(self, ys, ok):
        assert non_increasing(ys) is ok

    def test_checks_flag_ordering(self):
        good = GridResult([_row("vc", comp=300), _row("ds", comp=200), _row("gt", comp=100)], [])
        assert all(c.passed for c in grid_checks(good))
        bad = GridResult([_row("vc", comp=300), _row("ds", comp=50), _row("gt", comp=100)], [])
        assert not all(c.passed for c in grid_checks(bad))

    def test_sweep_checks(self):
        curves = [{"variant": v, "bler_target": b, "ssim_rec_mean": y}
                  for v, ys in (("vc", (0.9, 0.7)), ("gt", (0.95, 0.9))) for b, y in zip((0.0, 0.25), ys)]
        checks = sweep_checks(curves)
        assert all(c.passed for c in checks) and len(checks) == 3
        assert not sweep_checks(curves, min_gap=0.5)[-1].passed


class TestGrid:
    def test_one_cell(self, tmp_path):
        cfg = _cfg(variants=["gt"])
        grid_to_dir(cfg, tmp_path, plots=False)
        grid = (tmp_path / "grid.csv").read_text().splitlines()
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert len(grid) == 2 and len(summary) == 2
        assert grid[0].split(",") == GRID_COLUMNS
        assert summary[0].split(",") == SUMMARY_COLUMNS

    def test_byte_identical_and_job_parity(self, tmp_path):
        cfg = _cfg(seeds=[0, 1], conditions=["noon", "rain"], bler_targets=[0.0, 0.25],
                   channel={"payload_bytes": 128})
        grid_to_dir(cfg, tmp_path / "a", plots=False)
        grid_to_dir(cfg, tmp_path / "b", plots=False)
        grid_to_dir(cfg, tmp_path / "c", jobs=2, plots=False)
        for name in ("grid.csv", "summary.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()

    def test_rows_and_robustness(self):
        cfg = _cfg(conditions=["noon", "wet"])
        res = run_grid(cfg)
        assert len(res.rows) == 6 and not res.failures
        for _, r in res.rows:
            assert r.constraints["robustness"] == all(
                x.constraints["delta_quality"] for s, x in res.rows if x.variant == r.variant)

    def test_failure_recorded(self, tmp_path):
        # 100 px is not a multiple of 16: every cell fails but the grid finishes
        cfg = ExperimentConfig.from_dict({"scene": {"width": 100, "height": 64, "batch_len": 2},
                                          "variants": ["vc", "gt"]})
        res = grid_to_dir(cfg, tmp_path, plots=False)
        assert len(res.failures) == 2 and not res.rows
        assert len((tmp_path / "failures.csv").read_text().splitlines()) == 3

    def test_sweep(self, tmp_path):
        cfg = _cfg(conditions=["noon", "rain"], variants=["vc", "gt"], bler_targets=[0.0, 0.25])
        _, curves = sweep_to_dir(cfg, tmp_path, plots=True)
        for name in ("ssim_bler.csv", "ssim_bler_rain.csv", "ssim_bler.png", "ssim_bler_rain.png"):
            assert (tmp_path / name).stat().st_size > 0
        assert len(curves[""]) == 4 and len(curves["_rain"]) == 4

    def test_sweep_zero_bler_equals_no_loss(self, tmp_path):
        cfg = _cfg(variants=["gt"], bler_targets=[0.0])
        res, curves = sweep_to_dir(cfg, tmp_path, plots=False)
        (pt,) = curves[""]
        assert pt["ssim_rec_mean"] == pytest.approx(np.mean([r.ssim_rec for _, r in res.rows]))
        assert res.rows[0][1].realized_loss == 0.0

    def test_sweep_requires_sorted(self, tmp_path):
        with pytest.raises(ValueError):
            sweep_to_dir(_cfg(bler_targets=[0.25, 0.0]), tmp_path)

    def test_boxplot_written(self, tmp_path):
        grid_to_dir(_cfg(), tmp_path, plots=True)
        assert (tmp_path / "savings_box.png").read_bytes()[:4] == b"\x89PNG"


@pytest.mark.parametrize("name", ["run", "grid", "sweep"])
def test_shipped_configs_load(name):
    from pathlib import Path
    path = Path(__file__).resolve().parent.parent / "configs" / f"{name}.json"
    cfg = ExperimentConfig.load(path, env={})
    assert cfg.n_cells >= 1
