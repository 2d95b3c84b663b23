"""Synthetic scenes with exact ground truth, for pipeline self-checks, demos,
and the test suite: block-textured images, two-view point rigs, planar depth
scenes, and a small on-disk toy dataset."""

import os

import numpy as np

from .augment import WarpConfig, sample_homography, warp_image
from .engine import (
    ImageEntry,
    PairEntry,
    PairManifest,
    save_manifest,
)
from .fileio import save_image
from .geometry import CameraModel, DepthMap, Homography, MatchSet, Pose, relative_pose


def textured_image(width, height, seed, n_shapes=60, color=True):
    """Random rotated-rectangle/disk collage. Diverse corner orientations
    keep local descriptors distinctive; axis-aligned-only textures collapse
    them into a handful of clusters."""
    rng = np.random.default_rng(seed)
    channels = 3 if color else 1
    img = np.full((height, width, channels), 128.0)
    ys, xs = np.mgrid[0:height, 0:width]
    for k in range(n_shapes):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        # alternate dark/light shades: every cross-class edge keeps a log
        # intensity step above the strongest event contrast threshold
        lo, hi = (20.0, 60.0) if k % 2 == 0 else (180.0, 235.0)
        shade = rng.uniform(lo, hi, size=channels)
        short = min(width, height)
        if rng.random() < 0.3:
            r = rng.uniform(max(3.0, short / 24.0), max(5.0, short / 8.0))
            mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        else:
            a = rng.uniform(max(3.0, width / 24.0), max(5.0, width / 6.0))
            b = rng.uniform(max(3.0, height / 24.0), max(5.0, height / 6.0))
            angle = rng.uniform(0.0, np.pi)
            c, s = np.cos(angle), np.sin(angle)
            dx, dy = xs - cx, ys - cy
            mask = (np.abs(dx * c + dy * s) <= a) & (np.abs(-dx * s + dy * c) <= b)
        img[mask] = shade
    out = np.clip(img, 0, 255).astype(np.uint8)
    return out if color else out[..., 0]


def _random_rotation(rng, max_deg):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(-max_deg, max_deg))
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def default_camera(width=640, height=480, focal=500.0):
    return CameraModel(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
                       width=width, height=height)


def two_view_rig(seed, n_points=100, rotation_deg=8.0, baseline_frac=0.2,
                 depth_range=(4.0, 8.0), noise_px=0.0, outlier_fraction=0.0):
    """Random 3-D points seen by two cameras with a substantial baseline.

    Returns (matches, gt_inlier_mask, cam_a, cam_b, pose_ab). The baseline is
    ``baseline_frac`` of the mean scene depth; outliers replace the B-side
    pixel with a uniform draw over the frame.
    """
    rng = np.random.default_rng(seed)
    cam = default_camera()
    r_b = _random_rotation(rng, rotation_deg)
    t_dir = rng.normal(size=3)
    t_dir /= np.linalg.norm(t_dir)
    baseline = baseline_frac * float(np.mean(depth_range))
    pose_b = Pose(r_b, -r_b @ (t_dir * baseline))  # camera B center at t_dir*baseline
    pose_ab = relative_pose(Pose.identity(), pose_b)

    rows = []
    while len(rows) < n_points:
        z = rng.uniform(*depth_range)
        x = rng.uniform(-0.55, 0.55) * z * cam.width / cam.fx
        y = rng.uniform(-0.55, 0.55) * z * cam.height / cam.fy
        p = np.array([x, y, z])
        pa = cam.denormalize((p[:2] / p[2])[None, :])[0]
        q = pose_ab.apply(p)[0]
        if q[2] <= 0.1:
            continue
        pb = cam.denormalize((q[:2] / q[2])[None, :])[0]
        if not (0 <= pa[0] <= cam.width - 1 and 0 <= pa[1] <= cam.height - 1):
            continue
        if not (0 <= pb[0] <= cam.width - 1 and 0 <= pb[1] <= cam.height - 1):
            continue
        rows.append([pa[0], pa[1], pb[0], pb[1], 1.0])
    pairs = np.array(rows)
    if noise_px > 0:
        pairs[:, 2:4] += rng.normal(scale=noise_px, size=(n_points, 2))
    inlier_mask = np.ones(n_points, dtype=bool)
    n_out = int(round(outlier_fraction * n_points))
    if n_out:
        idx = rng.choice(n_points, size=n_out, replace=False)
        pairs[idx, 2] = rng.uniform(0, cam.width - 1, size=n_out)
        pairs[idx, 3] = rng.uniform(0, cam.height - 1, size=n_out)
        inlier_mask[idx] = False
    return MatchSet(pairs), inlier_mask, cam, cam, pose_ab


def planar_scene(seed=0, size=(160, 120), plane_depth=5.0, rotation_deg=5.0,
                 baseline=0.4):
    """Fronto-parallel plane at ``plane_depth`` in front of camera A, seen by
    a second camera with a known relative pose.

    Returns a dict with both cameras, the relative pose, analytic depth maps,
    and the induced homography K_b (R - t n^T / d) K_a^{-1} for the plane
    parameterized as n^T X + d = 0 with n = (0, 0, -1), d = plane_depth.
    """
    rng = np.random.default_rng(seed)
    w, h = size
    cam_a = default_camera(w, h, focal=1.2 * w)
    cam_b = default_camera(w, h, focal=1.2 * w)
    r_b = _random_rotation(rng, rotation_deg)
    center = rng.normal(size=3)
    center = center / np.linalg.norm(center) * baseline
    pose_b = Pose(r_b, -r_b @ center)
    t_ab = relative_pose(Pose.identity(), pose_b)

    depth_a = DepthMap(np.full((h, w), plane_depth))

    # per-pixel ray / plane intersection seen from B, in A coordinates
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    rays = np.stack(
        [(us - cam_b.cx) / cam_b.fx, (vs - cam_b.cy) / cam_b.fy, np.ones_like(us)], axis=-1
    )
    dirs = rays @ pose_b.R  # R_b^T applied to each ray
    cam_center = -pose_b.R.T @ pose_b.t
    lam = (plane_depth - cam_center[2]) / dirs[..., 2]
    depth_b = DepthMap(np.where(lam > 0, lam, 0.0))

    n = np.array([0.0, 0.0, -1.0])
    h_mat = cam_b.matrix() @ (t_ab.R - np.outer(t_ab.t, n) / plane_depth) @ np.linalg.inv(
        cam_a.matrix()
    )
    return {
        "cam_a": cam_a,
        "cam_b": cam_b,
        "pose_ab": t_ab,
        "depth_a": depth_a,
        "depth_b": depth_b,
        "homography": Homography(h_mat),
    }


def toy_dataset(root, n_pairs=5, seed=0, size=(320, 240), split="test"):
    """Small on-disk dataset of textured RGB pairs related by known
    homographies; returns the manifest path."""
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    w, h = size
    warp_cfg = WarpConfig(perturbation=0.05, rotation_deg=4.0, scale_range=(0.95, 1.05),
                          translation=0.03, seed=seed)
    rng = np.random.default_rng(seed)
    scenes = ["alpha", "beta"]
    images = {}
    pairs = []
    for i in range(n_pairs):
        scene = scenes[0] if i < max(n_pairs - 1, 1) else scenes[1]
        img_a = textured_image(w, h, seed=int(rng.integers(0, 2**31)))
        hom = sample_homography(warp_cfg, w, h, rng=rng)
        img_b = warp_image(img_a, hom)
        id_a, id_b = f"pair{i}_a", f"pair{i}_b"
        for img_id, arr in ((id_a, img_a), (id_b, img_b)):
            rel = os.path.join("images", f"{img_id}.png")
            save_image(os.path.join(root, rel), arr)
            images[img_id] = ImageEntry(id=img_id, path=rel, modality="rgb", scene=scene)
        pairs.append(
            PairEntry(a=id_a, b=id_b, label="homography", split=split,
                      homography=tuple(tuple(float(v) for v in row) for row in hom.H))
        )
    manifest = PairManifest(scenes=scenes, images=images, pairs=pairs, root=root).validate()
    path = os.path.join(root, "manifest.json")
    save_manifest(path, manifest)
    return path
