"""Robust two-view model fitting and the geometric error measures derived
from it: normalized DLT, RANSAC over homographies and essential matrices,
pose decomposition with cheirality, and the per-pair error definitions."""

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    CheiralityAmbiguous,
    DegenerateConfiguration,
    EstimationFailed,
    PointAtInfinity,
)
from .geometry import (
    Homography,
    MatchSet,
    Pose,
    apply_homography_points,
    canonicalize_homography,
)

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class RansacConfig:
    """Threshold is in pixels for homographies and in normalized-coordinate
    units for essential matrices."""

    threshold: float
    max_iters: int = 2000
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0 < self.confidence < 1):
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class EstimateResult:
    model: Union[Homography, Pose]
    inlier_mask: np.ndarray
    iterations: int
    essential: np.ndarray = None  # set for pose estimates

    def __post_init__(self):
        m = np.asarray(self.inlier_mask, dtype=bool).copy()
        m.setflags(write=False)
        object.__setattr__(self, "inlier_mask", m)

    @property
    def num_inliers(self):
        return int(self.inlier_mask.sum())


def _hartley_normalization(pts):
    """Similarity T moving the centroid to the origin and the mean distance
    to sqrt(2); returns (normalized points, T)."""
    centroid = pts.mean(axis=0)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / max(dist, 1e-12)
    T = np.array(
        [[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return (pts - centroid) * scale, T


def _homography_design(src, dst):
    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    one = np.ones(n)
    a[0::2] = np.column_stack([x, y, one, 0 * x, 0 * x, 0 * x, -u * x, -u * y, -u])
    a[1::2] = np.column_stack([0 * x, 0 * x, 0 * x, x, y, one, -v * x, -v * y, -v])
    return a


def _dlt_raw(pts_a, pts_b):
    """DLT returning the raw 3x3 matrix (not canonicalized)."""
    src_n, t_a = _hartley_normalization(pts_a)
    dst_n, t_b = _hartley_normalization(pts_b)
    a = _homography_design(src_n, dst_n)
    _, s, vt = np.linalg.svd(a)
    if s[7] < _RANK_TOL * s[0]:
        raise DegenerateConfiguration("design matrix rank < 8")
    h = np.linalg.inv(t_b) @ vt[-1].reshape(3, 3) @ t_a
    if abs(np.linalg.det(h)) < 1e-15 * np.linalg.norm(h) ** 3:
        raise DegenerateConfiguration("recovered map is singular")
    return h


def estimate_homography_dlt(matches):
    """Hartley-normalized direct linear transform over all correspondences."""
    if len(matches) < 4:
        raise DegenerateConfiguration(f"need >= 4 correspondences, got {len(matches)}")
    try:
        return Homography(_dlt_raw(matches.points_a, matches.points_b))
    except ValueError as exc:
        raise DegenerateConfiguration(str(exc)) from exc


def _project_raw(h, pts):
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    w = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = q[:, :2] / w[:, None]
    out[np.abs(w) < 1e-12] = np.inf
    return out


def _transfer_errors_raw(h, pts_a, pts_b):
    try:
        h_inv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        return np.full(len(pts_a), np.inf)
    fwd = _project_raw(h, pts_a) - pts_b
    bwd = _project_raw(h_inv, pts_b) - pts_a
    with np.errstate(invalid="ignore"):
        err = np.sqrt((fwd**2).sum(axis=1) + (bwd**2).sum(axis=1))
    return np.where(np.isnan(err), np.inf, err)


def symmetric_transfer_error(h, pts_a, pts_b):
    """Per-match sqrt of forward plus backward squared transfer distances."""
    return _transfer_errors_raw(h.H, np.asarray(pts_a, dtype=np.float64),
                                np.asarray(pts_b, dtype=np.float64))


def _adaptive_iterations(inlier_ratio, sample_size, confidence):
    if inlier_ratio <= 0:
        return np.inf
    denom = np.log1p(-min(inlier_ratio**sample_size, 1 - 1e-12))
    if denom >= 0:
        return np.inf
    return int(np.ceil(np.log1p(-confidence) / denom))


def _normalization_batch(pts):
    """Batched Hartley normalization for (b, k, 2) point sets; returns the
    normalized points plus the similarity and its analytic inverse."""
    b = pts.shape[0]
    centroid = pts.mean(axis=1, keepdims=True)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=2)).mean(axis=1)
    scale = np.sqrt(2.0) / np.maximum(dist, 1e-12)
    normalized = (pts - centroid) * scale[:, None, None]
    t = np.zeros((b, 3, 3))
    t[:, 0, 0] = t[:, 1, 1] = scale
    t[:, :2, 2] = -centroid[:, 0, :] * scale[:, None]
    t[:, 2, 2] = 1.0
    t_inv = np.zeros((b, 3, 3))
    t_inv[:, 0, 0] = t_inv[:, 1, 1] = 1.0 / scale
    t_inv[:, :2, 2] = centroid[:, 0, :]
    t_inv[:, 2, 2] = 1.0
    return normalized, t, t_inv


def _dlt_batch(src, dst):
    """Minimal-sample DLT over a (b, 4, 2) batch; degenerate hypotheses come
    back as all-NaN matrices."""
    b = src.shape[0]
    src_n, t_a, _ = _normalization_batch(src)
    dst_n, _, t_b_inv = _normalization_batch(dst)
    a = np.zeros((b, 8, 9))
    x, y = src_n[:, :, 0], src_n[:, :, 1]
    u, v = dst_n[:, :, 0], dst_n[:, :, 1]
    a[:, 0::2, 0] = x
    a[:, 0::2, 1] = y
    a[:, 0::2, 2] = 1.0
    a[:, 0::2, 6] = -u * x
    a[:, 0::2, 7] = -u * y
    a[:, 0::2, 8] = -u
    a[:, 1::2, 3] = x
    a[:, 1::2, 4] = y
    a[:, 1::2, 5] = 1.0
    a[:, 1::2, 6] = -v * x
    a[:, 1::2, 7] = -v * y
    a[:, 1::2, 8] = -v
    _, s, vt = np.linalg.svd(a)
    h = t_b_inv @ vt[:, -1].reshape(b, 3, 3) @ t_a
    bad = (s[:, 7] < _RANK_TOL * s[:, 0]) | (
        np.abs(np.linalg.det(h)) < 1e-15 * np.linalg.norm(h, axis=(1, 2)) ** 3
    )
    h[bad] = np.nan
    return h


def _transfer_errors_batch(hs, hom_a, hom_b):
    """Symmetric transfer errors for a (b, 3, 3) hypothesis batch against
    homogeneous (n, 3) points; invalid hypotheses yield +inf rows."""
    bad = ~np.isfinite(hs).all(axis=(1, 2))
    safe = np.where(bad[:, None, None], np.eye(3), hs)
    inv = np.linalg.inv(safe)
    with np.errstate(divide="ignore", invalid="ignore"):
        qf = hom_a @ safe.transpose(0, 2, 1)
        fwd = qf[:, :, :2] / qf[:, :, 2:3] - hom_b[None, :, :2]
        qb = hom_b @ inv.transpose(0, 2, 1)
        bwd = qb[:, :, :2] / qb[:, :, 2:3] - hom_a[None, :, :2]
        err = np.sqrt((fwd**2).sum(axis=2) + (bwd**2).sum(axis=2))
    err = np.where(np.isnan(err), np.inf, err)
    err[bad] = np.inf
    return err


def ransac_homography(matches, cfg, block=32):
    """Classic hypothesize-and-verify with 4-point samples, symmetric transfer
    error as the inlier test, adaptive iteration bound, and a final DLT refit
    on the winning inlier set.

    Hypotheses are evaluated in vectorized blocks; the sampling sequence is a
    pure function of cfg.seed, so results are deterministic."""
    n = len(matches)
    if n < 4:
        raise EstimationFailed(f"need >= 4 matches, got {n}")
    rng = np.random.default_rng(cfg.seed)
    pts_a, pts_b = matches.points_a, matches.points_b
    hom_a = np.column_stack([pts_a, np.ones(n)])
    hom_b = np.column_stack([pts_b, np.ones(n)])

    best_mask = None
    best_count = 0
    needed = cfg.max_iters
    it = 0
    while it < min(cfg.max_iters, needed):
        b = min(block, min(cfg.max_iters, needed) - it)
        it += b
        idx = np.argsort(rng.random((b, n)), axis=1)[:, :4]
        hs = _dlt_batch(pts_a[idx], pts_b[idx])
        masks = _transfer_errors_batch(hs, hom_a, hom_b) < cfg.threshold
        counts = masks.sum(axis=1)
        k = int(counts.argmax())
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_mask = masks[k]
            needed = min(needed, _adaptive_iterations(best_count / n, 4, cfg.confidence))

    if best_mask is None or best_count < 4:
        raise EstimationFailed("no hypothesis reached 4 inliers")
    refit = Homography(_dlt_raw(pts_a[best_mask], pts_b[best_mask]))
    final_mask = symmetric_transfer_error(refit, pts_a, pts_b) < cfg.threshold
    if final_mask.sum() < 4:
        final_mask = best_mask
    return EstimateResult(model=refit, inlier_mask=final_mask, iterations=it)


def _essential_design(x_a, x_b):
    # constraint rows for x_b^T E x_a = 0
    xa, ya = x_a[:, 0], x_a[:, 1]
    xb, yb = x_b[:, 0], x_b[:, 1]
    one = np.ones(len(xa))
    return np.column_stack(
        [xb * xa, xb * ya, xb, yb * xa, yb * ya, yb, xa, ya, one]
    )


def _project_to_essential(e):
    u, s, vt = np.linalg.svd(e)
    mean = (s[0] + s[1]) / 2.0
    return u @ np.diag([mean, mean, 0.0]) @ vt


def _eight_point_core(x_a, x_b):
    xa_n, t_a = _hartley_normalization(x_a)
    xb_n, t_b = _hartley_normalization(x_b)
    a = _essential_design(xa_n, xb_n)
    _, s, vt = np.linalg.svd(a)
    if s[7] < _RANK_TOL * s[0]:
        raise DegenerateConfiguration("essential design matrix rank < 8")
    f = vt[-1].reshape(3, 3)
    e = t_b.T @ f @ t_a
    e = _project_to_essential(e)
    return canonicalize_homography(e)  # unit-norm, sign-fixed representative


def estimate_essential_8pt(matches, cam_a, cam_b):
    """Normalized eight-point algorithm on camera-coordinate matches,
    projected onto the essential manifold (singular values (s, s, 0))."""
    if len(matches) < 8:
        raise DegenerateConfiguration(f"need >= 8 correspondences, got {len(matches)}")
    return _eight_point_core(cam_a.normalize(matches.points_a), cam_b.normalize(matches.points_b))


def _epipolar_errors(e, x_a, x_b):
    """Symmetric epipolar distance for homogeneous-free (N, 2) normalized
    coordinates: sqrt((xb^T E xa)^2 (1/||E xa||^2_12 + 1/||E^T xb||^2_12))."""
    ha = np.column_stack([x_a, np.ones(len(x_a))])
    hb = np.column_stack([x_b, np.ones(len(x_b))])
    lines_b = ha @ e.T  # E @ xa per row
    lines_a = hb @ e  # E^T @ xb per row
    num = (hb * lines_b).sum(axis=1) ** 2
    na = (lines_b[:, :2] ** 2).sum(axis=1)
    nb = (lines_a[:, :2] ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        err = num * (1.0 / na + 1.0 / nb)
    return np.sqrt(np.where(np.isfinite(err), err, np.inf))


def epipolar_error(e, match_a, match_b, cam_a, cam_b):
    """Symmetric epipolar distance of one pixel match in normalized units."""
    x_a = cam_a.normalize(np.atleast_2d(match_a))
    x_b = cam_b.normalize(np.atleast_2d(match_b))
    return float(_epipolar_errors(np.asarray(e), x_a, x_b)[0])


def _triangulate(x_a, x_b, r, t):
    """Linear triangulation against P_a = [I|0], P_b = [r|t]; returns
    (points in A coords, valid homogeneous flag)."""
    n = len(x_a)
    pts = np.zeros((n, 3))
    finite = np.zeros(n, dtype=bool)
    p_a = np.hstack([np.eye(3), np.zeros((3, 1))])
    p_b = np.hstack([r, t.reshape(3, 1)])
    for i in range(n):
        a = np.stack(
            [
                x_a[i, 0] * p_a[2] - p_a[0],
                x_a[i, 1] * p_a[2] - p_a[1],
                x_b[i, 0] * p_b[2] - p_b[0],
                x_b[i, 1] * p_b[2] - p_b[1],
            ]
        )
        _, _, vt = np.linalg.svd(a)
        hx = vt[-1]
        if abs(hx[3]) < 1e-9 * np.linalg.norm(hx[:3]):
            continue  # point at infinity: no usable depth sign
        pts[i] = hx[:3] / hx[3]
        finite[i] = True
    return pts, finite


def decompose_essential(e):
    """The four (R, t) candidates of an essential matrix; t has unit norm."""
    u, _, vt = np.linalg.svd(e)
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r1 = u @ w @ vt
    r2 = u @ w.T @ vt
    if np.linalg.det(r1) < 0:
        r1 = -r1
    if np.linalg.det(r2) < 0:
        r2 = -r2
    t = u[:, 2] / np.linalg.norm(u[:, 2])
    return [(r1, t), (r1, -t), (r2, t), (r2, -t)]


def _select_pose_by_cheirality(e, x_a, x_b, threshold):
    """Pick the decomposition placing the most points at finite positive depth
    in both views with a consistent reprojection; fail when no candidate
    convinces a majority."""
    best = None
    best_count = -1
    n = len(x_a)
    reproj_gate = max(10.0 * threshold, 1e-6)
    for r, t in decompose_essential(e):
        pts, finite = _triangulate(x_a, x_b, r, t)
        z_a = pts[:, 2]
        in_b = pts @ r.T + t
        z_b = in_b[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            proj_a = pts[:, :2] / z_a[:, None]
            proj_b = in_b[:, :2] / z_b[:, None]
        resid = np.maximum(
            np.linalg.norm(np.nan_to_num(proj_a - x_a, nan=np.inf), axis=1),
            np.linalg.norm(np.nan_to_num(proj_b - x_b, nan=np.inf), axis=1),
        )
        good = finite & (z_a > 0) & (z_b > 0) & (resid < reproj_gate)
        count = int(good.sum())
        if count > best_count:
            best_count = count
            best = (r, t)
    if best_count * 2 <= n:
        raise CheiralityAmbiguous(
            f"best candidate explains {best_count}/{n} points; baseline likely degenerate"
        )
    return Pose(best[0], best[1])


def ransac_essential(matches, cam_a, cam_b, cfg):
    """RANSAC over eight-point hypotheses with the symmetric epipolar distance
    (normalized coordinates) as the inlier metric; the winning essential matrix
    is decomposed and disambiguated by cheirality. Translation is unit-norm."""
    n = len(matches)
    if n < 8:
        raise EstimationFailed(f"need >= 8 matches, got {n}")
    rng = np.random.default_rng(cfg.seed)
    x_a = cam_a.normalize(matches.points_a)
    x_b = cam_b.normalize(matches.points_b)

    best_mask = None
    best_count = 0
    needed = cfg.max_iters
    it = 0
    while it < min(cfg.max_iters, needed):
        it += 1
        idx = rng.choice(n, size=8, replace=False)
        try:
            e = _eight_point_core(x_a[idx], x_b[idx])
        except DegenerateConfiguration:
            continue
        mask = _epipolar_errors(e, x_a, x_b) < cfg.threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            needed = min(needed, _adaptive_iterations(count / n, 8, cfg.confidence))

    if best_mask is None or best_count < 8:
        raise EstimationFailed("no hypothesis reached 8 inliers")
    refit = _eight_point_core(x_a[best_mask], x_b[best_mask])
    final_mask = _epipolar_errors(refit, x_a, x_b) < cfg.threshold
    if final_mask.sum() < 8:
        final_mask = best_mask
    pose = _select_pose_by_cheirality(
        refit, x_a[final_mask], x_b[final_mask], cfg.threshold
    )
    return EstimateResult(model=pose, inlier_mask=final_mask, iterations=it, essential=refit)


def rotation_error_deg(r_est, r_gt):
    cos = (np.trace(r_est.T @ r_gt) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def translation_error_deg(t_est, t_gt):
    """Angle between translation directions; 0 when either has zero norm
    (direction unobservable)."""
    n_est, n_gt = np.linalg.norm(t_est), np.linalg.norm(t_gt)
    if n_est == 0 or n_gt == 0:
        return 0.0
    cos = np.dot(t_est, t_gt) / (n_est * n_gt)
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def pose_error(estimated, ground_truth):
    """Max of angular rotation error and translation-direction error, degrees."""
    return max(
        rotation_error_deg(estimated.R, ground_truth.R),
        translation_error_deg(estimated.t, ground_truth.t),
    )


def corner_error(h_est, h_gt, width, height):
    """Mean displacement of the four image corners under the two maps."""
    corners = np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )
    d = apply_homography_points(h_est, corners) - apply_homography_points(h_gt, corners)
    return float(np.linalg.norm(d, axis=1).mean())
