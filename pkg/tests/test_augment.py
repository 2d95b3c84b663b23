import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdsyn.augment import (
    WarpConfig,
    perturbed_corner_homography,
    rescale_homography,
    resize_long_side,
    resize_pad_square,
    sample_homography,
    warp_image,
)
from mdsyn.errors import DegenerateSample
from mdsyn.geometry import Homography, apply_homography, apply_homography_points
from mdsyn.metrics import psnr
from mdsyn.synthdata import textured_image

ZERO_CFG = WarpConfig(perturbation=0.0, rotation_deg=0.0, scale_range=(1.0, 1.0),
                      translation=0.0, seed=0)


class TestSampleHomography:
    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_all_ranges_zero_is_identity(self, seed):
        h = sample_homography(WarpConfig(0.0, 0.0, (1.0, 1.0), 0.0, seed), 640, 480)
        assert np.array_equal(h.H, Homography.identity().H)

    def test_fixed_seed_identical(self):
        cfg = WarpConfig(seed=42)
        a = sample_homography(cfg, 640, 480)
        b = sample_homography(cfg, 640, 480)
        assert np.array_equal(a.H, b.H)

    def test_corner_displacement_bound(self):
        # pure perturbation 0.1 on 640x480: every displacement <= 0.1*480
        cfg = WarpConfig(perturbation=0.1, rotation_deg=0.0, scale_range=(1.0, 1.0),
                         translation=0.0, seed=0)
        rng = np.random.default_rng(0)
        corners = np.array([[0.0, 0.0], [639.0, 0.0], [639.0, 479.0], [0.0, 479.0]])
        for _ in range(1000):
            h = sample_homography(cfg, 640, 480, rng=rng)
            moved = np.array([apply_homography(h, c) for c in corners])
            assert np.linalg.norm(moved - corners, axis=1).max() <= 0.1 * 480 + 1e-6

    def test_invertible(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            h = sample_homography(WarpConfig(seed=0), 320, 240, rng=rng)
            assert abs(np.linalg.det(h.H)) > 1e-12

    def test_config_validation(self):
        with pytest.raises(ValueError):
            WarpConfig(perturbation=0.6)
        with pytest.raises(ValueError):
            WarpConfig(rotation_deg=-1.0)
        with pytest.raises(ValueError):
            WarpConfig(scale_range=(1.2, 0.8))

    def test_nonconvex_offsets_rejected(self):
        # fold one corner across the frame: quadrilateral flips orientation
        offsets = np.array([[500.0, 400.0], [0, 0], [0, 0], [0, 0]])
        with pytest.raises(DegenerateSample):
            perturbed_corner_homography(100, 80, offsets)


class TestWarpImage:
    def test_identity_bit_exact(self):
        img = textured_image(50, 40, seed=0, color=False)
        assert np.array_equal(warp_image(img, Homography.identity()), img)

    def test_identity_bit_exact_color_float(self):
        img = textured_image(50, 40, seed=1).astype(np.float64)
        assert np.array_equal(warp_image(img, Homography.identity()), img)

    def test_integer_translation_matches_shift(self):
        img = textured_image(60, 40, seed=2, color=False)
        warped = warp_image(img, Homography.translation(5, 0))
        assert np.array_equal(warped[:, 5:], img[:, :-5])
        assert np.all(warped[:, :5] == 0)

    def test_round_trip_psnr(self):
        # band-limited texture: interpolation accuracy is defined for content
        # below the resampling Nyquist rate, not for step edges
        from scipy.ndimage import gaussian_filter

        rng = np.random.default_rng(3)
        img = gaussian_filter(rng.uniform(0, 255, size=(120, 160)), 2.0)
        h = sample_homography(WarpConfig(perturbation=0.03, rotation_deg=3.0,
                                         scale_range=(0.98, 1.02), translation=0.01,
                                         seed=5), 160, 120)
        back = warp_image(warp_image(img, h), h.inverse())
        # interior 80% region avoids the zero-filled border
        y0, y1 = 12, 108
        x0, x1 = 16, 144
        score = psnr(img[y0:y1, x0:x1].astype(float), back[y0:y1, x0:x1].astype(float))
        assert score > 30.0

    def test_out_size(self):
        img = textured_image(60, 40, seed=4, color=False)
        out = warp_image(img, Homography.identity(), out_size=(30, 20))
        assert out.shape == (20, 30)


class TestResizeLongSide:
    def test_downscale_half(self):
        out, scale = resize_long_side(np.zeros((960, 1280), dtype=np.uint8), 640)
        assert out.shape == (480, 640)
        assert scale == 0.5

    def test_noop_at_target(self):
        img = textured_image(640, 480, seed=5, color=False)
        out, scale = resize_long_side(img, 640)
        assert scale == 1.0
        assert out is img

    def test_upscale_to_1600(self):
        out, scale = resize_long_side(np.zeros((600, 800), dtype=np.uint8), 1600)
        assert out.shape == (1200, 1600)
        assert scale == 2.0

    @given(st.integers(20, 900), st.integers(20, 900), st.sampled_from([64, 237, 640]))
    @settings(max_examples=50, deadline=None)
    def test_aspect_ratio_within_rounding(self, w, h, target):
        out, scale = resize_long_side(np.zeros((h, w), dtype=np.uint8), target)
        assert max(out.shape[:2]) == target
        assert abs(out.shape[0] - h * scale) <= 1
        assert abs(out.shape[1] - w * scale) <= 1

    def test_scale_rescales_correspondences_exactly(self):
        img = textured_image(200, 100, seed=6, color=False)
        _, scale = resize_long_side(img, 640)
        h = Homography.translation(10, 4)
        h_scaled = rescale_homography(h, scale, scale)
        p = np.array([20.0, 30.0])
        expected = apply_homography(h, p) * scale
        assert np.allclose(apply_homography(h_scaled, p * scale), expected, atol=1e-9)


class TestResizePadSquare:
    def test_wide_input(self):
        img = np.full((1024, 2048), 200, dtype=np.uint8)
        out = resize_pad_square(img, 1024)
        assert out.shape == (1024, 1024)
        assert np.all(out[:512] == 200)
        assert np.all(out[512:] == 0)

    def test_square_noop(self):
        img = textured_image(64, 64, seed=7, color=False)
        assert np.array_equal(resize_pad_square(img, 64), img)

    @given(st.integers(16, 300), st.integers(16, 300))
    @settings(max_examples=30, deadline=None)
    def test_padding_is_exactly_zero(self, w, h):
        img = np.full((h, w), 255, dtype=np.uint8)
        out = resize_pad_square(img, 128)
        assert out.shape == (128, 128)
        content_h = min(int(np.floor(h * 128 / max(h, w) + 0.5)), 128)
        content_w = min(int(np.floor(w * 128 / max(h, w) + 0.5)), 128)
        pad_total = out.sum() - out[:content_h, :content_w].sum()
        assert pad_total == 0
