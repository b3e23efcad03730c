import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from transmatch.imagecore import (ImageFormatError, MatchResult, brute_force_match,
                                  constant_windows, load_image, running_sum, save_image,
                                  window_stats, zncc)

from conftest import naive_window_sums, naive_zncc


def _write_pgm(path, w, h, payload):
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + bytes(payload))


def test_load_constant_pgm(tmp_path):
    p = tmp_path / "c.pgm"
    _write_pgm(p, 4, 4, [128] * 16)
    img = load_image(p)
    assert img.shape == (4, 4)
    assert img.dtype == np.float64
    assert np.all(img == 128.0)


def test_load_single_pixel(tmp_path):
    p = tmp_path / "one.pgm"
    _write_pgm(p, 1, 1, [0])
    img = load_image(p)
    assert img.shape == (1, 1) and img[0, 0] == 0.0


def test_truncated_payload_is_malformed(tmp_path):
    p = tmp_path / "bad.pgm"
    _write_pgm(p, 4, 4, [1] * 7)
    with pytest.raises(ImageFormatError, match="malformed image"):
        load_image(p)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.pgm")


@pytest.mark.parametrize("ext", [".pgm", ".png"])
def test_save_load_roundtrip(tmp_path, rng, ext):
    img = rng.integers(0, 256, size=(9, 13)).astype(np.float64)
    save_image(tmp_path / f"x{ext}", img)
    np.testing.assert_array_equal(load_image(tmp_path / f"x{ext}"), img)


def test_running_sum_constant():
    s = running_sum(np.ones((4, 4)), 2, 2)
    assert s.shape == (3, 3)
    assert np.all(s == 4.0)


def test_running_sum_unit_window(rng):
    a = rng.normal(size=(6, 7))
    np.testing.assert_allclose(running_sum(a, 1, 1), a, rtol=0, atol=1e-12)


def test_running_sum_matches_naive(rng):
    a = rng.normal(size=(8, 8))
    np.testing.assert_allclose(running_sum(a, 3, 5), naive_window_sums(a, 3, 5), rtol=1e-9)


def test_running_sum_rejects_big_window():
    with pytest.raises(ValueError):
        running_sum(np.zeros((3, 3)), 4, 1)


def test_window_stats_constant():
    ws = window_stats(np.full((6, 6), 42.0), 3, 3)
    assert np.all(ws.mean == 42.0)
    assert np.all(ws.sigma == 0.0)
    assert ws.flat.all()


def test_window_stats_hand_value():
    ws = window_stats(np.array([[0.0, 0.0], [255.0, 255.0]]), 2, 2)
    assert ws.mean[0, 0] == pytest.approx(127.5)
    assert ws.sigma[0, 0] == pytest.approx(255.0, rel=1e-12)


def test_window_stats_matches_naive(rng):
    img = rng.integers(0, 256, size=(20, 17)).astype(np.float64)
    ws = window_stats(img, 4, 6)
    for x in range(0, 17, 3):
        for y in range(0, 12, 2):
            win = img[x:x + 4, y:y + 6]
            assert ws.mean[x, y] == pytest.approx(win.mean(), rel=1e-9)
            ref = np.sqrt(((win - win.mean()) ** 2).sum())
            assert ws.sigma[x, y] == pytest.approx(ref, rel=1e-6)


def test_flat_detection_is_exact():
    img = np.zeros((10, 10))
    img[5, 5] = 1e-3
    ws = window_stats(img, 3, 3)
    np.testing.assert_array_equal(ws.flat, ~(naive_window_sums(img != 0, 3, 3) > 0))
    np.testing.assert_array_equal(constant_windows(img, 3, 3), ws.flat)


def test_zncc_self_affine_and_flip(rng):
    t = rng.normal(size=(5, 7))
    assert zncc(t, t) == pytest.approx(1.0, abs=1e-12)
    assert zncc(t, 3.5 * t + 10) == pytest.approx(1.0, abs=1e-12)
    z = t - t.mean()
    assert zncc(z, -z) == pytest.approx(-1.0, abs=1e-12)


def test_zncc_flat_is_zero(rng):
    assert zncc(np.ones((3, 3)), rng.normal(size=(3, 3))) == 0.0


def test_zncc_shape_mismatch():
    with pytest.raises(ValueError):
        zncc(np.ones((2, 3)), np.ones((3, 2)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3)))
def test_zncc_range_and_symmetry(a, b):
    r = zncc(a, b)
    assert -1.0 <= r <= 1.0
    assert r == zncc(b, a)
    ref = naive_zncc(a, b)
    if ref != 0.0:
        assert abs(r - ref) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_running_sum_property(m, n, seed):
    a = np.random.default_rng(seed).normal(size=(10, 11)) * 100
    ref = naive_window_sums(a, m, n)
    np.testing.assert_allclose(running_sum(a, m, n), ref, rtol=1e-9, atol=1e-9)


def test_brute_force_finds_planted(smooth_image):
    t = smooth_image[17:17 + 11, 23:23 + 9]
    res = brute_force_match(t, smooth_image)
    assert isinstance(res, MatchResult)
    assert res.location == (17, 23)
    assert res.rho == pytest.approx(1.0, abs=1e-12)
    assert res.stats.ops == res.stats.extent == res.stats.centers
    assert res.stats.elim_pct == 0.0


def test_brute_force_constant_image_tie_break():
    res = brute_force_match(np.array([[5.0]]), np.full((6, 6), 3.0))
    assert res.location == (0, 0)
    assert res.rho == 0.0


def test_brute_force_deterministic(rng):
    img = rng.normal(size=(40, 40))
    t = rng.normal(size=(7, 7))
    a = brute_force_match(t, img, keep_surface=True)
    b = brute_force_match(t, img, keep_surface=True)
    assert a.location == b.location and a.rho == b.rho
    np.testing.assert_array_equal(a.surface, b.surface)
    flat = a.surface.ravel()
    assert a.rho == flat.max()
    assert np.ravel_multi_index(a.location, a.surface.shape) == int(np.argmax(flat))


def test_brute_surface_matches_direct(rng):
    img = rng.integers(0, 256, size=(25, 30)).astype(np.float64)
    t = rng.integers(0, 256, size=(6, 5)).astype(np.float64)
    res = brute_force_match(t, img, keep_surface=True)
    for x, y in [(0, 0), (3, 11), (19, 25), (10, 7)]:
        assert res.surface[x, y] == pytest.approx(naive_zncc(t, img[x:x + 6, y:y + 5]), abs=1e-12)


def test_flat_template_scores_zero(rng):
    res = brute_force_match(np.ones((3, 3)), rng.normal(size=(10, 10)), keep_surface=True)
    assert np.all(res.surface == 0.0)
    assert res.location == (0, 0)


def test_template_too_large():
    with pytest.raises(ValueError):
        brute_force_match(np.eye(5), np.eye(4))


def test_match_result_json_shape(smooth_image):
    d = brute_force_match(smooth_image[:9, :9], smooth_image).to_dict()
    assert d["mode"] == "brute"
    assert set(d["best"]) == {"row", "col", "rho"}
    assert set(d["stats"]) >= {"centers", "eliminated", "retained", "elim_pct", "ops", "ms"}
