import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from rfdvc.core import (
    CameraPose, Condition, ConditionTag, Frame, Mask, MaskSet, RF_CONDITION, Traffic,
    convert_pose_carla_to_ns, luma, mask_iou,
)

from conftest import random_frame


def _rot(axis, t):
    # written out independently of the library helpers
    c, s = np.cos(t), np.sin(t)
    m = np.eye(4)
    if axis == "x":
        m[1:3, 1:3] = [[c, -s], [s, c]]
    elif axis == "y":
        m[0, 0], m[0, 2], m[2, 0], m[2, 2] = c, s, -s, c
    else:
        m[0:2, 0:2] = [[c, -s], [s, c]]
    return m


def _matmul(a, b):
    out = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            out[i, j] = sum(a[i, k] * b[k, j] for k in range(4))
    return out


FIXED = _matmul(_matmul(_rot("z", np.pi / 2), _rot("x", -np.pi / 2)), _rot("y", np.pi))


class TestFrame:
    def test_dimensions_must_be_multiples_of_16(self):
        with pytest.raises(ValueError):
            Frame(np.zeros((17, 32, 3), np.uint8))
        with pytest.raises(ValueError):
            Frame(np.zeros((0, 16, 3), np.uint8))

    def test_pixel_buffer_length(self):
        f = Frame.filled(48, 32)
        assert f.pixels.size == 48 * 32 * 3 == f.nbytes
        assert (f.width, f.height) == (48, 32)

    def test_rejects_non_uint8(self):
        with pytest.raises(TypeError):
            Frame(np.zeros((16, 16, 3), np.float32))

    def test_pixels_read_only(self):
        f = Frame.filled(16, 16)
        with pytest.raises(ValueError):
            f.pixels[0, 0, 0] = 1

    def test_rf_condition_is_training_condition(self):
        assert RF_CONDITION == ConditionTag(Condition.MORNING, Traffic.EMPTY)
        assert ConditionTag.parse("wet", "dense") == ConditionTag(Condition.WET, Traffic.DENSE)


class TestLuma:
    def test_white_black_red(self):
        assert np.all(luma(Frame.filled(16, 16, (255, 255, 255))) == pytest.approx(255.0))
        assert np.all(luma(Frame.filled(16, 16)) == 0.0)
        assert luma(Frame.filled(16, 16, (255, 0, 0)))[0, 0] == pytest.approx(76.245)

    @given(st.tuples(*[st.integers(0, 255)] * 3), st.integers(0, 2), st.integers(1, 255))
    def test_monotone_per_channel(self, rgb, ch, bump):
        up = list(rgb)
        up[ch] = min(255, up[ch] + bump)
        a = luma(Frame.filled(16, 16, rgb))[0, 0]
        b = luma(Frame.filled(16, 16, tuple(up)))[0, 0]
        assert b >= a


class TestMask:
    def test_area_and_bbox_derived(self):
        bm = np.zeros((8, 8), bool)
        bm[2:4, 3:6] = True
        m = Mask(bm, 1)
        assert m.area == 6
        assert m.bbox == (3, 2, 5, 3)
        assert Mask(np.zeros((4, 4), bool), 2).bbox is None

    def test_label_zero_reserved(self):
        with pytest.raises(ValueError):
            Mask(np.ones((2, 2), bool), 0)

    def test_unique_labels(self):
        m = Mask(np.ones((2, 2), bool), 1)
        with pytest.raises(ValueError):
            MaskSet((m, m))

    def test_packed_popcount(self):
        bm = np.random.default_rng(0).random((16, 16)) > 0.5
        m = Mask(bm, 3)
        assert sum(bin(b).count("1") for b in m.packed()) == m.area


def _sq(x, y, shape=(6, 6)):
    bm = np.zeros(shape, bool)
    bm[y:y + 2, x:x + 2] = True
    return Mask(bm, 1)


class TestIoU:
    def test_examples(self):
        a = _sq(0, 0)
        assert mask_iou(a, a) == 1.0
        assert mask_iou(a, _sq(3, 3)) == 0.0
        assert mask_iou(a, _sq(1, 0)) == pytest.approx(2 / 6)

    def test_empty_pair_is_zero(self):
        e = Mask(np.zeros((4, 4), bool), 1)
        assert mask_iou(e, e) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mask_iou(_sq(0, 0), _sq(0, 0, (7, 6)))

    @given(hnp.arrays(bool, (6, 7)), hnp.arrays(bool, (6, 7)))
    def test_symmetric_and_self(self, a, b):
        ma, mb = Mask(a, 1), Mask(b, 2)
        assert mask_iou(ma, mb) == mask_iou(mb, ma)
        if a.any():
            assert mask_iou(ma, ma) == 1.0


class TestPose:
    def test_validation(self):
        m = np.eye(4)
        m[3, 0] = 1
        with pytest.raises(ValueError):
            CameraPose(m)
        m = np.eye(4)
        m[0, 0] = 2
        with pytest.raises(ValueError):
            CameraPose(m)

    def test_bytes_round_trip(self):
        p = CameraPose(_rot("z", 0.3) @ CameraPose.translation(1.5, -2, 7).matrix)
        assert CameraPose.from_bytes(p.to_bytes()) == p
        assert len(p.to_bytes()) == 96

    def test_identity_gives_fixed_product(self):
        out = convert_pose_carla_to_ns(CameraPose.identity())
        np.testing.assert_allclose(out.matrix, FIXED, atol=1e-12)

    def test_translation_keeps_fixed_rotation(self):
        out = convert_pose_carla_to_ns(CameraPose.translation(3, 4, 5))
        np.testing.assert_allclose(out.matrix[:3, :3], FIXED[:3, :3], atol=1e-12)

    def test_axis_permutation(self):
        perm = np.eye(4)[[1, 0, 2, 3]]
        perm[0] *= -1
        out = convert_pose_carla_to_ns(CameraPose.identity(), perm)
        np.testing.assert_allclose(out.matrix, _matmul(FIXED, perm), atol=1e-12)

    def test_singular_t_trans(self):
        with pytest.raises(ValueError):
            convert_pose_carla_to_ns(CameraPose.identity(), np.zeros((4, 4)))

    @given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi),
           st.tuples(*[st.floats(-100, 100)] * 3))
    def test_orthonormality_preserved(self, a, b, c, t):
        m = _rot("x", a) @ _rot("y", b) @ _rot("z", c)
        m[:3, 3] = t
        r = convert_pose_carla_to_ns(CameraPose(m)).matrix[:3, :3]
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-6)


def test_frame_equality_and_replace(rng):
    f = random_frame(rng)
    assert f.replace() == f
    assert f.replace(frame_index=3) != f
