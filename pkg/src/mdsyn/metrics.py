"""Aggregation of per-pair geometric errors into report quantities: recall
AUC tables, match-correctness counts, image-quality scores, and intensity
statistics."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import correlate

from .errors import EmptyInput, SizeMismatch
from .estimators import _epipolar_errors
from .geometry import Homography, Pose, apply_homography_points

# correctness cutoffs for drawing/classifying individual matches
CORRECT_EPIPOLAR = 5e-4
CORRECT_PROJECTION_PX = 3.0

# report thresholds
POSE_THRESHOLDS_DEG = (5.0, 10.0, 20.0)
HOMOGRAPHY_THRESHOLDS_PX = (3.0, 5.0, 10.0)

PSNR_CAP_DB = 99.0


def auc(errors, threshold):
    """Exact area under the empirical recall curve up to ``threshold``, as a
    percentage. Failed pairs enter as +inf and contribute zero area."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise EmptyInput("no errors to integrate")
    if np.any(np.isnan(e)):
        raise ValueError("errors must be finite or +inf")
    clipped = np.maximum(0.0, threshold - e)
    clipped[~np.isfinite(e)] = 0.0
    return float(100.0 * clipped.sum() / (e.size * threshold))


@dataclass(frozen=True)
class AucTable:
    thresholds: tuple
    values: tuple
    samples: int

    def __post_init__(self):
        if any(not (0.0 <= v <= 100.0) for v in self.values):
            raise ValueError("AUC values must lie in [0, 100]")


def auc_table(errors, thresholds):
    e = list(errors)
    return AucTable(
        thresholds=tuple(float(t) for t in thresholds),
        values=tuple(auc(e, t) for t in thresholds),
        samples=len(e),
    )


@dataclass(frozen=True)
class MatchStats:
    total: int
    correct: int
    precision: float
    errors: np.ndarray

    def __post_init__(self):
        if not (0 <= self.correct <= self.total):
            raise ValueError("correct count must lie in [0, total]")
        e = np.asarray(self.errors, dtype=np.float64).copy()
        e.setflags(write=False)
        object.__setattr__(self, "errors", e)


def classify_matches(matches, gt, cam_a=None, cam_b=None):
    """Split a MatchSet into correct/incorrect against the ground truth.

    ``gt`` is a Homography (projection error cutoff 3 px) or a relative Pose
    plus both intrinsics (symmetric epipolar error cutoff 5e-4).
    """
    n = len(matches)
    if isinstance(gt, Homography):
        if n == 0:
            errors = np.zeros(0)
        else:
            proj = apply_homography_points(gt, matches.points_a)
            errors = np.linalg.norm(proj - matches.points_b, axis=1)
        cutoff = CORRECT_PROJECTION_PX
    elif isinstance(gt, Pose):
        if cam_a is None or cam_b is None:
            raise ValueError("pose ground truth needs both camera models")
        e = essential_from_pose(gt)
        if n == 0:
            errors = np.zeros(0)
        else:
            errors = _epipolar_errors(
                e, cam_a.normalize(matches.points_a), cam_b.normalize(matches.points_b)
            )
        cutoff = CORRECT_EPIPOLAR
    else:
        raise TypeError("gt must be a Homography or a Pose")
    correct = int((errors < cutoff).sum())
    precision = correct / n if n else 0.0
    return MatchStats(total=n, correct=correct, precision=precision, errors=errors)


def essential_from_pose(pose):
    """E = [t]x R for a relative pose; zero matrix at zero baseline."""
    t = pose.t
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    return tx @ pose.R


def _check_same_shape(reference, candidate):
    if reference.shape != candidate.shape:
        raise SizeMismatch(f"shapes differ: {reference.shape} vs {candidate.shape}")


def psnr(reference, candidate):
    """Peak signal-to-noise ratio for 8-bit-range images, in dB; identical
    images return the 99 dB cap instead of infinity."""
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    _check_same_shape(ref, cand)
    mse = float(((ref - cand) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(255.0**2 / mse))


def _gaussian_kernel(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(reference, candidate, window=11, sigma=1.5, k1=0.01, k2=0.03, value_range=255.0):
    """Mean structural similarity over fully interior Gaussian windows."""
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    _check_same_shape(ref, cand)
    if ref.ndim != 2:
        raise ValueError("ssim expects grayscale images")
    if min(ref.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} window")
    kernel = _gaussian_kernel(window, sigma)

    def smooth(x):
        return correlate(x, kernel, mode="valid", method="direct")

    mu1, mu2 = smooth(ref), smooth(cand)
    var1 = smooth(ref * ref) - mu1 * mu1
    var2 = smooth(cand * cand) - mu2 * mu2
    cov = smooth(ref * cand) - mu1 * mu2
    c1 = (k1 * value_range) ** 2
    c2 = (k2 * value_range) ** 2
    score_map = ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) / (
        (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    )
    return float(score_map.mean())


def intensity_histogram(image, bins):
    """Probability mass of 8-bit intensities over ``bins`` equal-width bins."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    img = np.asarray(image, dtype=np.float64)
    counts, _ = np.histogram(img, bins=bins, range=(0.0, 256.0))
    total = counts.sum()
    if total == 0:
        raise EmptyInput("empty image")
    return counts / total


@dataclass(frozen=True)
class PairResult:
    """Geometric outcome of evaluating one image pair."""

    pair_id: str
    case: str  # modality-pair label, e.g. "rgb-event"
    error: float  # degrees (pose) or pixels (homography); +inf when failed
    match_total: int = 0
    match_correct: int = 0
    failed: bool = False
    runtime_ms: float = 0.0


@dataclass
class EvalReport:
    task: str  # "pose" | "homography"
    thresholds: tuple
    cases: dict  # case -> {"auc": AucTable, counts, precision, failures, runtime}
    metadata: dict = field(default_factory=dict)

    def to_dict(self, include_timing=True):
        cases = {}
        for name in sorted(self.cases):
            c = self.cases[name]
            entry = {
                "auc": {f"{t:g}": v for t, v in zip(c["auc"].thresholds, c["auc"].values)},
                "pairs": c["pairs"],
                "failures": c["failures"],
                "match_total": c["match_total"],
                "match_correct": c["match_correct"],
                "precision": c["precision"],
            }
            if include_timing:
                entry["mean_runtime_ms"] = c["mean_runtime_ms"]
            cases[name] = entry
        return {
            "task": self.task,
            "thresholds": list(self.thresholds),
            "cases": cases,
            "metadata": self.metadata,
        }

    def to_json(self, include_timing=True):
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


def aggregate_report(results, thresholds, task, metadata=None):
    """Fold per-pair results into per-case AUC tables and precision stats.

    Aggregation is associative over result lists; ordering of the input does
    not change the report.
    """
    results = list(results)
    if not results:
        raise EmptyInput("no pair results to aggregate")
    by_case = {}
    for r in results:
        by_case.setdefault(r.case, []).append(r)

    cases = {}
    for name in sorted(by_case):
        rs = sorted(by_case[name], key=lambda r: r.pair_id)
        errors = [np.inf if r.failed else r.error for r in rs]
        total = sum(r.match_total for r in rs)
        correct = sum(r.match_correct for r in rs)
        cases[name] = {
            "auc": auc_table(errors, thresholds),
            "pairs": len(rs),
            "failures": sum(1 for r in rs if r.failed),
            "match_total": total,
            "match_correct": correct,
            "precision": correct / total if total else 0.0,
            "mean_runtime_ms": float(np.mean([r.runtime_ms for r in rs])),
        }
    return EvalReport(task=task, thresholds=tuple(float(t) for t in thresholds),
                      cases=cases, metadata=dict(metadata or {}))


def write_report_csv(path, report):
    """Table mirroring the report: one row per case, one AUC column per
    threshold, plus counts."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        unit = "deg" if report.task == "pose" else "px"
        writer.writerow(
            ["case"]
            + [f"auc@{t:g}{unit}" for t in report.thresholds]
            + ["pairs", "failures", "precision"]
        )
        for name in sorted(report.cases):
            c = report.cases[name]
            writer.writerow(
                [name]
                + [f"{v:.2f}" for v in c["auc"].values]
                + [c["pairs"], c["failures"], f"{c['precision']:.4f}"]
            )


def write_report_svg(path, report, width=640, height=360):
    """Minimal grouped-bar chart of AUC per case and threshold."""
    names = sorted(report.cases)
    nt = len(report.thresholds)
    margin, axis_h = 40, 30
    plot_w, plot_h = width - 2 * margin, height - margin - axis_h
    group_w = plot_w / max(len(names), 1)
    bar_w = group_w / (nt + 1)
    shades = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"]

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        y = margin + plot_h * (1 - frac)
        parts.append(
            f'<line x1="{margin}" y1="{y:.1f}" x2="{width - margin}" y2="{y:.1f}" '
            'stroke="#cccccc" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin - 5}" y="{y + 4:.1f}" font-size="10" text-anchor="end">'
            f"{100 * frac:.0f}</text>"
        )
    for i, name in enumerate(names):
        vals = report.cases[name]["auc"].values
        x0 = margin + i * group_w
        for j, v in enumerate(vals):
            bh = plot_h * v / 100.0
            x = x0 + (j + 0.5) * bar_w
            y = margin + plot_h - bh
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{bh:.1f}" '
                f'fill="{shades[j % len(shades)]}"/>'
            )
        parts.append(
            f'<text x="{x0 + group_w / 2:.1f}" y="{height - 10}" font-size="10" '
            f'text-anchor="middle">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
