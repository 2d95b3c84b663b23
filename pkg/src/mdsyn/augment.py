"""Synthetic homography sampling and the image preprocessing used by both the
generation and evaluation pipelines."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSample
from .geometry import Homography

_MAX_RESAMPLE = 100


@dataclass(frozen=True)
class WarpConfig:
    """Parameters of the synthetic deformation model.

    ``perturbation`` bounds each corner's Euclidean displacement as a fraction
    of min(H, W); the similarity part (rotation / scale / translation) is
    composed on top. All ranges may be zero.
    """

    perturbation: float = 0.15
    rotation_deg: float = 15.0
    scale_range: tuple = (0.85, 1.15)
    translation: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.perturbation < 0 or self.perturbation >= 0.5:
            raise ValueError("perturbation must lie in [0, 0.5)")
        if self.rotation_deg < 0 or self.translation < 0:
            raise ValueError("ranges must be non-negative")
        lo, hi = self.scale_range
        if lo <= 0 or hi < lo:
            raise ValueError("scale_range must be positive and ordered")


def _corners(width, height):
    # integer coordinates address pixel centers
    return np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )


def _is_convex(quad):
    d = np.roll(quad, -1, axis=0) - quad
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    return bool(np.all(cross > 0) or np.all(cross < 0))


def _solve_quad_homography(src, dst):
    """Exact 4-point DLT (no normalization; sources are well spread corners)."""
    a = np.zeros((8, 9))
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y, -v]
    _, s, vt = np.linalg.svd(a)
    if s[7] < 1e-12 * s[0]:
        raise DegenerateSample("corner configuration is rank deficient")
    return vt[-1].reshape(3, 3)


def perturbed_corner_homography(width, height, offsets):
    """Homography mapping the frame corners to corners + offsets (4x2 array).

    Raises DegenerateSample when the displaced quadrilateral is non-convex.
    """
    corners = _corners(width, height)
    moved = corners + np.asarray(offsets, dtype=np.float64)
    if not _is_convex(moved):
        raise DegenerateSample("displaced corner quadrilateral is non-convex")
    return Homography(_solve_quad_homography(corners, moved))


def sample_homography(cfg, width, height, rng=None):
    """Draw a random invertible homography for a width x height frame.

    Corner offsets are drawn uniformly in direction with radius up to
    perturbation * min(H, W), so each corner displacement of the perturbation
    part is bounded by that radius exactly. A random similarity (rotation
    about the image center, scale, translation) is composed on top.
    Deterministic under cfg.seed when no generator is passed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    corners = _corners(width, height)
    bound = cfg.perturbation * min(width, height)

    for _ in range(_MAX_RESAMPLE):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=4)
        radius = rng.uniform(0.0, bound, size=4) if bound > 0 else np.zeros(4)
        perturbed = corners + radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        if not _is_convex(perturbed):
            continue

        angle = np.deg2rad(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
        scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
        tx = rng.uniform(-cfg.translation, cfg.translation) * width
        ty = rng.uniform(-cfg.translation, cfg.translation) * height
        c, s = np.cos(angle), np.sin(angle)
        center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
        sim = np.eye(3)
        sim[:2, :2] = scale * np.array([[c, -s], [s, c]])
        sim[:2, 2] = center - sim[:2, :2] @ center + [tx, ty]

        base = np.eye(3) if bound == 0 else _solve_quad_homography(corners, perturbed)
        h = sim @ base
        if abs(np.linalg.det(h)) < 1e-12:
            continue
        return Homography(h)
    raise DegenerateSample(f"no convex corner sample after {_MAX_RESAMPLE} draws")


def _bilinear_sample(image, xs, ys):
    """Sample image at float coords with zero fill outside; image is 2-D or 3-D."""
    h, w = image.shape[:2]
    img = image.astype(np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    def tap(ix, iy):
        inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        vals = img[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
        return vals * inside[..., None]

    out = (
        tap(x0, y0) * (1 - fx) * (1 - fy)
        + tap(x0 + 1, y0) * fx * (1 - fy)
        + tap(x0, y0 + 1) * (1 - fx) * fy
        + tap(x0 + 1, y0 + 1) * fx * fy
    )
    return out[..., 0] if image.ndim == 2 else out


def warp_image(image, homography, out_size=None):
    """Warp so that output(p) = input(H^-1 p); bilinear, zero outside source.

    ``out_size`` is (width, height); defaults to the input size. uint8 inputs
    come back as uint8 (round-half-up), float inputs stay float64.
    """
    h_in, w_in = image.shape[:2]
    w_out, h_out = out_size if out_size is not None else (w_in, h_in)
    inv = np.linalg.inv(homography.H)
    # rescale so the exact-identity / exact-affine cases keep integer source
    # coordinates bit-exact (x/x divisions cancel)
    pivot = inv[2, 2] if abs(inv[2, 2]) > 1e-12 else inv.ravel()[np.argmax(np.abs(inv))]
    inv = inv / pivot
    xs, ys = np.meshgrid(np.arange(w_out, dtype=np.float64), np.arange(h_out, dtype=np.float64))
    denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    denom = np.where(np.abs(denom) < 1e-12, np.inf, denom)
    src_x = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
    src_y = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom
    out = _bilinear_sample(image, src_x, src_y)
    if image.dtype == np.uint8:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


def _resize_bilinear(image, w_out, h_out, scale):
    # geometric map is x_out = scale * x_in about pixel-center origin, so
    # correspondences and homographies rescale exactly by `scale`
    xs, ys = np.meshgrid(
        np.arange(w_out, dtype=np.float64) / scale, np.arange(h_out, dtype=np.float64) / scale
    )
    h_in, w_in = image.shape[:2]
    out = _bilinear_sample(image, np.clip(xs, 0, w_in - 1), np.clip(ys, 0, h_in - 1))
    if image.dtype == np.uint8:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


def resize_long_side(image, target):
    """Isotropically scale so max(H, W) == target. Returns (image, scale)."""
    if target <= 0:
        raise ValueError("target must be positive")
    h, w = image.shape[:2]
    long_side = max(h, w)
    if long_side == target:
        return image, 1.0
    scale = target / long_side
    w_out = int(np.floor(w * scale + 0.5))
    h_out = int(np.floor(h * scale + 0.5))
    return _resize_bilinear(image, w_out, h_out, scale), scale


def resize_pad_square(image, target):
    """Scale the long side to ``target`` and zero-pad the short side (pad
    appended after the content) to a target x target frame."""
    resized, _ = resize_long_side(image, target)
    h, w = resized.shape[:2]
    out_shape = (target, target) + resized.shape[2:]
    out = np.zeros(out_shape, dtype=resized.dtype)
    out[:h, :w] = resized
    return out


def rescale_homography(h_gt, scale_a, scale_b):
    """Homography in resized coordinates given the per-image resize scales."""
    s_a = np.diag([scale_a, scale_a, 1.0])
    s_b = np.diag([scale_b, scale_b, 1.0])
    return Homography(s_b @ h_gt.H @ np.linalg.inv(s_a))
