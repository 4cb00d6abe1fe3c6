import numpy as np
import pytest

from rfdvc.core import Mask
from rfdvc.netpbm import (
    align16, read_frame, read_mask_pgm, read_pgm, read_ppm_array, write_frame, write_mask_pgm, write_pgm, write_ppm,
)

from conftest import random_frame


def test_ppm_round_trip(tmp_path, rng):
    f = random_frame(rng, 48, 32)
    write_frame(tmp_path / "a.ppm", f)
    raw = (tmp_path / "a.ppm").read_bytes()
    assert raw.startswith(b"P6\n48 32\n255\n")
    assert len(raw) == len(b"P6\n48 32\n255\n") + 48 * 32 * 3
    assert np.array_equal(read_frame(tmp_path / "a.ppm").pixels, f.pixels)


def test_ppm_header_comments(tmp_path):
    body = bytes(range(12))
    (tmp_path / "c.ppm").write_bytes(b"P6 # made by hand\n2 2\n255\n" + body)
    assert read_ppm_array(tmp_path / "c.ppm").tobytes() == body


def test_ppm_16bit_scaled(tmp_path):
    arr = np.array([[[0, 65535, 32768]]], dtype=">u2")
    (tmp_path / "w.ppm").write_bytes(b"P6\n1 1\n65535\n" + arr.tobytes())
    assert read_ppm_array(tmp_path / "w.ppm").tolist() == [[[0, 255, 128]]]


def test_wrong_magic(tmp_path):
    write_pgm(tmp_path / "g.pgm", np.zeros((2, 2), int))
    with pytest.raises(ValueError):
        read_ppm_array(tmp_path / "g.pgm")


def test_odd_sizes_padded_black(tmp_path, rng):
    px = rng.integers(1, 256, size=(20, 30, 3), dtype=np.uint8)
    write_ppm(tmp_path / "o.ppm", px)
    f = read_frame(tmp_path / "o.ppm")
    assert f.shape == (32, 32)
    assert np.array_equal(f.pixels[:20, :30], px)
    assert not f.pixels[20:].any() and not f.pixels[:, 30:].any()
    assert align16(np.zeros((16, 16, 3), np.uint8)).shape == (16, 16, 3)


def test_mask_pgm_label_as_gray(tmp_path):
    bm = np.zeros((16, 16), bool)
    bm[3:7, 2:9] = True
    write_mask_pgm(tmp_path / "m.pgm", Mask(bm, 37))
    gray = read_pgm(tmp_path / "m.pgm")
    assert set(np.unique(gray).tolist()) == {0, 37}
    back = read_mask_pgm(tmp_path / "m.pgm")
    assert back.label == 37 and np.array_equal(back.bitmap, bm)


def test_wide_labels_use_16_bit(tmp_path):
    bm = np.ones((2, 2), bool)
    write_mask_pgm(tmp_path / "m.pgm", Mask(bm, 300))
    assert b"65535" in (tmp_path / "m.pgm").read_bytes()[:20]
    assert read_mask_pgm(tmp_path / "m.pgm").label == 300
