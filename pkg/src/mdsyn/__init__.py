"""Pseudo-modality matching data engine and two-view evaluation harness."""

from .geometry import (
    CameraModel,
    DepthMap,
    Homography,
    MatchSet,
    Pose,
    apply_homography,
    gt_correspondence,
    relative_pose,
)
from .estimators import (
    EstimateResult,
    RansacConfig,
    corner_error,
    epipolar_error,
    estimate_essential_8pt,
    estimate_homography_dlt,
    pose_error,
    ransac_essential,
    ransac_homography,
)
from .metrics import auc, classify_matches, intensity_histogram, psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "DepthMap",
    "EstimateResult",
    "Homography",
    "MatchSet",
    "Pose",
    "RansacConfig",
    "apply_homography",
    "auc",
    "classify_matches",
    "corner_error",
    "epipolar_error",
    "estimate_essential_8pt",
    "estimate_homography_dlt",
    "gt_correspondence",
    "intensity_histogram",
    "pose_error",
    "psnr",
    "ransac_essential",
    "ransac_homography",
    "relative_pose",
    "ssim",
]
