"""Projective-geometry types and ground-truth correspondence generation.

Conventions used throughout the package:

* poses are world-to-camera maps, ``x_cam = R @ x_world + t``;
* integer pixel coordinates address pixel centers, so the valid domain of a
  W x H image is ``[0, W-1] x [0, H-1]``;
* homographies are stored in a canonical scale (unit Frobenius norm,
  largest-magnitude entry positive) so equality is well defined.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDepth, PointAtInfinity

_ORTHO_TOL = 1e-9
_W_EPS = 1e-12


def _as_readonly(a, shape, name):
    a = np.asarray(a, dtype=np.float64)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def normalize(self, pts):
        """Pixel coordinates -> normalized camera coordinates, (N, 2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return np.column_stack(
            [(pts[:, 0] - self.cx) / self.fx, (pts[:, 1] - self.cy) / self.fy]
        )

    def denormalize(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return np.column_stack(
            [pts[:, 0] * self.fx + self.cx, pts[:, 1] * self.fy + self.cy]
        )


@dataclass(frozen=True)
class Pose:
    """Rigid SE(3) transform, x' = R x + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _as_readonly(self.R, (3, 3), "R"))
        object.__setattr__(self, "t", _as_readonly(self.t, (3,), "t"))
        if np.max(np.abs(self.R.T @ self.R - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > _ORTHO_TOL:
            raise ValueError("det(R) must be 1")

    @staticmethod
    def identity():
        return Pose(np.eye(3), np.zeros(3))

    def apply(self, pts):
        """Transform (N, 3) points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return pts @ self.R.T + self.t

    def inverse(self):
        return Pose(self.R.T, -self.R.T @ self.t)


@dataclass(frozen=True)
class DepthMap:
    """H x W depth grid in scene units; 0 encodes invalid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("depth values must be finite and non-negative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def at(self, x, y):
        """Depth at the integer pixel (x, y)."""
        return float(self.values[int(round(y)), int(round(x))])

    def sample_bilinear(self, x, y):
        """Bilinearly interpolated depth; None if any support pixel is invalid
        or the location leaves the grid."""
        h, w = self.values.shape
        if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
            return None
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
        corners = self.values[[y0, y0, y1, y1], [x0, x1, x0, x1]]
        if np.any(corners == 0.0):
            return None
        fx, fy = x - x0, y - y0
        top = corners[0] * (1 - fx) + corners[1] * fx
        bot = corners[2] * (1 - fx) + corners[3] * fx
        return float(top * (1 - fy) + bot * fy)


def canonicalize_homography(H):
    """Scale a 3x3 matrix to unit Frobenius norm with the largest-magnitude
    entry positive (canonical representative of the projective scale class)."""
    H = np.asarray(H, dtype=np.float64)
    n = np.linalg.norm(H)
    if n == 0 or not np.isfinite(n):
        raise ValueError("homography has zero or non-finite norm")
    H = H / n
    flat = H.ravel()
    lead = flat[np.argmax(np.abs(flat))]
    if lead < 0:
        H = -H
    return H


@dataclass(frozen=True)
class Homography:
    """Invertible 3x3 projective map stored in canonical scale."""

    H: np.ndarray

    def __post_init__(self):
        H = canonicalize_homography(self.H)
        if abs(np.linalg.det(H)) < 1e-15:
            raise ValueError("homography is singular")
        H = H.copy()
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @staticmethod
    def identity():
        return Homography(np.eye(3))

    @staticmethod
    def translation(tx, ty):
        H = np.eye(3)
        H[0, 2], H[1, 2] = tx, ty
        return Homography(H)

    def inverse(self):
        return Homography(np.linalg.inv(self.H))

    def compose(self, other):
        """self after other: (self.compose(other))(p) == self(other(p))."""
        return Homography(self.H @ other.H)


@dataclass(frozen=True)
class MatchSet:
    """Scored pixel correspondences between two images.

    ``pairs`` is an (N, 5) array of rows ``(xA, yA, xB, yB, score)`` with
    scores in [0, 1].
    """

    pairs: np.ndarray
    image_a: str = "A"
    image_b: str = "B"

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.float64)
        if p.size == 0:
            p = p.reshape(0, 5)
        if p.ndim != 2 or p.shape[1] != 5:
            raise ValueError("pairs must be (N, 5): xA yA xB yB score")
        if p.shape[0] and (np.min(p[:, 4]) < 0 or np.max(p[:, 4]) > 1):
            raise ValueError("scores must lie in [0, 1]")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pairs", p)

    def __len__(self):
        return self.pairs.shape[0]

    @property
    def points_a(self):
        return self.pairs[:, 0:2]

    @property
    def points_b(self):
        return self.pairs[:, 2:4]

    @property
    def scores(self):
        return self.pairs[:, 4]

    def check_bounds(self, size_a=None, size_b=None):
        """Raise ValueError if coordinates leave the given (width, height) bounds."""
        for pts, size, tag in ((self.points_a, size_a, "A"), (self.points_b, size_b, "B")):
            if size is None or len(self) == 0:
                continue
            w, h = size
            if (
                np.min(pts[:, 0]) < 0
                or np.max(pts[:, 0]) > w - 1
                or np.min(pts[:, 1]) < 0
                or np.max(pts[:, 1]) > h - 1
            ):
                raise ValueError(f"match coordinates leave image {tag} bounds")


def apply_homography(H, p):
    """Map a single (x, y) point through H, dehomogenizing the result.

    Raises PointAtInfinity when the homogeneous w-component falls below 1e-12
    in magnitude.
    """
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError("point must be finite")
    q = H.H @ np.array([x, y, 1.0])
    if abs(q[2]) < _W_EPS:
        raise PointAtInfinity(f"w = {q[2]:.3e} for point ({x}, {y})")
    return np.array([q[0] / q[2], q[1] / q[2]])


def apply_homography_points(H, pts):
    """Vectorized apply_homography for an (N, 2) array."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    q = np.column_stack([pts, np.ones(len(pts))]) @ H.H.T
    w = q[:, 2]
    if np.any(np.abs(w) < _W_EPS):
        raise PointAtInfinity("at least one point maps to infinity")
    return q[:, :2] / w[:, None]


def relative_pose(world_to_a, world_to_b):
    """Pose taking A-camera coordinates to B-camera coordinates."""
    R_ab = world_to_b.R @ world_to_a.R.T
    t_ab = world_to_b.t - R_ab @ world_to_a.t
    return Pose(R_ab, t_ab)


def gt_correspondence(depth_a, cam_a, cam_b, t_ab, depth_b, p, depth_tol=0.05):
    """Ground-truth correspondence of pixel ``p`` in A, or None when occluded
    or out of view.

    Back-projects with depth_a, transforms by the relative pose, projects into
    B, and keeps the result only if the bilinearly sampled depth_b agrees with
    the transformed depth within ``depth_tol`` relative error.
    """
    x, y = float(p[0]), float(p[1])
    if not (0 <= x <= cam_a.width - 1 and 0 <= y <= cam_a.height - 1):
        raise ValueError("query pixel lies outside image A")
    d = depth_a.at(x, y)
    if d == 0.0:
        raise InvalidDepth(f"depth at ({x:.1f}, {y:.1f}) is 0")

    ray = np.array([(x - cam_a.cx) / cam_a.fx, (y - cam_a.cy) / cam_a.fy, 1.0])
    point_b = t_ab.apply(ray * d)[0]
    z = point_b[2]
    if z <= 0:
        return None
    u = cam_b.fx * point_b[0] / z + cam_b.cx
    v = cam_b.fy * point_b[1] / z + cam_b.cy
    if not (0 <= u <= cam_b.width - 1 and 0 <= v <= cam_b.height - 1):
        return None
    observed = depth_b.sample_bilinear(u, v)
    if observed is None or abs(observed - z) / z > depth_tol:
        return None
    return np.array([u, v])
