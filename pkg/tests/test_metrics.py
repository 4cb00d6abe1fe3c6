import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfdvc.core import Frame
from rfdvc.metrics import (
    CSV_COLUMNS, PSNR_CAP, SSIM_C1, ConstraintSpec, QualityReport, compression_ratio, data_savings,
    evaluate_constraints, format_row, psnr, rfdvc_savings_vs_baseline, ssim,
)

from conftest import random_frame


def _report(condition="noon", **kw):
    base = dict(variant="gt", condition=condition, traffic="sparse", quant_step=8, bler_target=0.0,
                realized_loss=0.0, raw_bytes=1000, compressed_bytes=300,
                ssim_rec=0.95, ssim_delta=0.95)
    base.update(kw)
    return QualityReport(**base)


class TestPsnr:
    def test_identical_is_cap(self, rng):
        f = random_frame(rng)
        assert psnr(f, f) == PSNR_CAP == 99.0

    def test_mse_one(self):
        a = Frame.filled(16, 16, (10, 10, 10))
        b = Frame.filled(16, 16, (11, 11, 11))
        assert psnr(a, b) == pytest.approx(20 * math.log10(255), abs=1e-9)
        assert psnr(a, b) == pytest.approx(48.13, abs=0.005)

    def test_black_white(self):
        assert psnr(Frame.filled(16, 16), Frame.filled(16, 16, (255,) * 3)) == 0.0

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            psnr(Frame.filled(16, 16), Frame.filled(32, 16))

    def test_symmetric(self, rng):
        a, b = random_frame(rng), random_frame(rng)
        assert psnr(a, b) == psnr(b, a)


class TestSsim:
    def test_identity(self, rng):
        f = random_frame(rng, 48, 32)
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-9)

    def test_symmetric(self, rng):
        a, b = random_frame(rng), random_frame(rng)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    @pytest.mark.parametrize("mu", [0, 40, 120, 245])
    def test_constant_shift_closed_form(self, mu):
        a = Frame.filled(32, 32, (mu,) * 3)
        b = Frame.filled(32, 32, (mu + 10,) * 3)
        m1, m2 = float(mu), float(mu + 10)
        expect = (2 * m1 * m2 + SSIM_C1) / (m1 ** 2 + m2 ** 2 + SSIM_C1)
        assert ssim(a, b) == pytest.approx(expect, abs=1e-9)

    @given(st.integers(0, 200), st.integers(0, 50), st.integers(1, 5))
    def test_shift_both_on_constant_images(self, base, shift, d):
        # variance terms vanish on constant images, so shifting both frames changes
        # only the luminance term; check that against the closed form at both offsets
        for m in (base, base + shift):
            a = Frame.filled(16, 16, (m,) * 3)
            b = Frame.filled(16, 16, (m + d,) * 3)
            expect = (2 * m * (m + d) + SSIM_C1) / (m ** 2 + (m + d) ** 2 + SSIM_C1)
            assert ssim(a, b) == pytest.approx(expect, abs=1e-9)
            assert ssim(a, a) == 1.0

    def test_matches_skimage(self, rng):
        from skimage.metrics import structural_similarity
        from rfdvc.core import luma
        a, b = random_frame(rng, 48, 48), random_frame(rng, 48, 48)
        ref = structural_similarity(luma(a), luma(b), gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, data_range=255)
        # skimage averages over a cropped region of the same windows; allow a small gap
        assert ssim(a, b) == pytest.approx(ref, abs=0.02)


class TestSavings:
    @pytest.mark.parametrize("raw,comp,expect", [(100, 30, 70.0), (100, 100, 0.0), (100, 0, 100.0)])
    def test_examples(self, raw, comp, expect):
        assert data_savings(raw, comp) == pytest.approx(expect)

    @pytest.mark.parametrize("raw,comp,expect", [(100, 25, 4.0), (100, 100, 1.0)])
    def test_ratio(self, raw, comp, expect):
        assert compression_ratio(raw, comp) == pytest.approx(expect)

    def test_errors(self):
        with pytest.raises(ValueError):
            data_savings(0, 1)
        with pytest.raises(ValueError):
            compression_ratio(1, 0)
        with pytest.raises(ValueError):
            rfdvc_savings_vs_baseline(1, 0)

    @given(st.integers(1, 10 ** 9), st.integers(1, 10 ** 9))
    def test_identity(self, raw, comp):
        assert data_savings(raw, comp) == pytest.approx(100 * (1 - 1 / compression_ratio(raw, comp)),
                                                        rel=1e-9, abs=1e-9)

    def test_vs_baseline(self):
        assert rfdvc_savings_vs_baseline(500, 500) == 0.0
        assert rfdvc_savings_vs_baseline(29, 100) == pytest.approx(71.0)
        assert rfdvc_savings_vs_baseline(_report(compressed_bytes=29), _report(compressed_bytes=100)) \
            == pytest.approx(71.0)

    def test_report_savings(self):
        assert _report(raw_bytes=100, compressed_bytes=30).savings_pct == pytest.approx(70.0)


class TestConstraints:
    def test_throughput_example(self):
        r = _report(compressed_bytes=62_500)  # 0.5 Mbit
        v = evaluate_constraints(r, ConstraintSpec(t_net=10e6, tau=0.1), [r])
        assert v["throughput"]

    def test_inclusive_delta_quality(self):
        r = _report(ssim_delta=0.9)
        assert evaluate_constraints(r, ConstraintSpec(q_min_delta=0.9), [r])["delta_quality"]

    def test_robustness_forall(self):
        good = _report("noon", ssim_delta=0.99)
        bad = _report("rain", ssim_delta=0.5)
        v = evaluate_constraints(good, ConstraintSpec(), [good, bad])
        assert v["delta_quality"] and not v["robustness"]

    def test_missing_condition(self):
        r = _report("noon")
        with pytest.raises(ValueError):
            evaluate_constraints(r, ConstraintSpec(), [_report("rain")])
        with pytest.raises(ValueError):
            evaluate_constraints(r, ConstraintSpec(), [r], conditions=["noon", "wet"])

    @pytest.mark.parametrize("kw", [dict(t_net=0), dict(tau=-1), dict(q_min_rec=1.5), dict(epsilon=2)])
    def test_spec_validation(self, kw):
        with pytest.raises(ValueError):
            ConstraintSpec(**kw)

    @given(st.data())
    def test_monotone_under_tightening(self, data):
        f = st.floats(0, 1)
        reports = [_report(c, compressed_bytes=data.draw(st.integers(1, 10 ** 6)),
                           ssim_delta=data.draw(f), ssim_rec=data.draw(f), realized_loss=data.draw(f))
                   for c in ("noon", "wet")]
        loose = ConstraintSpec(t_net=data.draw(st.floats(1e5, 1e8)), tau=data.draw(st.floats(0.01, 1)),
                               q_min_delta=data.draw(f), q_min_rec=data.draw(f), epsilon=data.draw(f))
        tight = ConstraintSpec(t_net=loose.t_net * data.draw(st.floats(0.1, 1)),
                               tau=loose.tau * data.draw(st.floats(0.1, 1)),
                               q_min_delta=data.draw(st.floats(loose.q_min_delta, 1)),
                               q_min_rec=data.draw(st.floats(loose.q_min_rec, 1)),
                               epsilon=data.draw(st.floats(0, loose.epsilon)))
        a = evaluate_constraints(reports[0], loose, reports)
        b = evaluate_constraints(reports[0], tight, reports)
        assert all(a[k] or not b[k] for k in a)


class TestCsv:
    def test_column_order(self):
        assert CSV_COLUMNS == [
            "variant", "condition", "traffic", "quant_step", "bler_target", "realized_loss", "raw_bytes",
            "compressed_bytes", "savings_pct", "psnr_rec_db", "ssim_rec", "ssim_delta", "c_throughput",
            "c_delta_quality", "c_rec_quality", "c_loss", "c_robustness",
        ]

    def test_row_format(self, tmp_path):
        r = _report()
        r.constraints = {"throughput": True, "loss": False}
        row = r.row()
        out = format_row(row)
        assert out[CSV_COLUMNS.index("c_throughput")] == "PASS"
        assert out[CSV_COLUMNS.index("c_loss")] == "FAIL"
        assert out[CSV_COLUMNS.index("c_robustness")] == ""
        assert out[CSV_COLUMNS.index("savings_pct")] == "70.000000"
        path = tmp_path / "r.csv"
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows([CSV_COLUMNS, out])
        assert list(csv.reader(open(path)))[1] == out
