"""Baseline classical matcher and the ingestion path for external matchers.

The built-in detector/descriptor exists to exercise the pipeline end to end
without any learned model; real experiments feed correspondences in through
the versioned file format below.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BorderKeypoint, BoundsError, ParseError
from .geometry import MatchSet

MAX_KEYPOINTS = 2048
PATCH_SIZE = 16
PATCH_RADIUS = PATCH_SIZE // 2
DESCRIPTOR_DIM = 128
NMS_RADIUS = 4
MATCHES_HEADER = "MDSYN-MATCHES v1"


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    response: float


def _to_float_gray(image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    if np.issubdtype(np.asarray(image).dtype, np.integer):
        img = img / 255.0
    return img


def detect(image, max_kp=MAX_KEYPOINTS, border=PATCH_RADIUS):
    """Harris corners: top ``max_kp`` responses after non-maximum suppression
    (radius 4 px), ties broken by (y, x). Points closer than ``border`` to the
    frame are dropped so they stay describable."""
    img = _to_float_gray(image)
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(gx * gx, sigma=1.5, mode="nearest")
    syy = ndimage.gaussian_filter(gy * gy, sigma=1.5, mode="nearest")
    sxy = ndimage.gaussian_filter(gx * gy, sigma=1.5, mode="nearest")
    response = sxx * syy - sxy * sxy - 0.04 * (sxx + syy) ** 2

    peak = response.max(initial=0.0)
    if peak <= 0:
        return []
    threshold = 1e-4 * peak
    local_max = ndimage.maximum_filter(response, size=2 * NMS_RADIUS + 1, mode="nearest")
    mask = (response >= threshold) & (response == local_max)
    mask[:border, :] = mask[-border:, :] = False
    mask[:, :border] = mask[:, -border:] = False

    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return []
    order = np.lexsort((xs, ys, -response[ys, xs]))
    keep = order[:max_kp]
    return [Keypoint(int(xs[i]), int(ys[i]), float(response[ys[i], xs[i]])) for i in keep]


def _structure(img):
    """Smoothed binary edge-energy map: the patch source for descriptors.

    Edge energy marks the same structures in raw photographs and in derived
    modalities (edge-driven renderings), and binarizing at a relative gate
    makes the map exactly invariant to brightness shifts and contrast scale,
    which keeps descriptors comparable across modalities."""
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    g = np.sqrt(gx * gx + gy * gy)
    edges = (g > 2.0 * g.mean()).astype(np.float64)
    return ndimage.gaussian_filter(edges, sigma=2.0, mode="nearest")


def _describe_patch(structure, x, y):
    h, w = structure.shape
    if not (PATCH_RADIUS <= x <= w - PATCH_RADIUS and PATCH_RADIUS <= y <= h - PATCH_RADIUS):
        raise BorderKeypoint(f"({x}, {y}) closer than {PATCH_RADIUS} px to the border")
    patch = structure[y - PATCH_RADIUS : y + PATCH_RADIUS, x - PATCH_RADIUS : x + PATCH_RADIUS]
    patch = patch - patch.mean()
    std = patch.std()
    if std < 1e-12:
        raise BorderKeypoint(f"flat patch at ({x}, {y}) has no contrast to describe")
    patch = patch / std
    pooled = patch.reshape(PATCH_SIZE, PATCH_SIZE // 2, 2).mean(axis=2).ravel()
    return pooled / np.linalg.norm(pooled)


def describe(image, kp):
    """128-dim unit descriptor of the 16x16 gradient-energy patch around a
    keypoint: mean-subtracted, contrast-normalized, 2:1 pooled, L2-normalized."""
    return _describe_patch(_structure(_to_float_gray(image)), int(round(kp.x)), int(round(kp.y)))


def detect_and_describe(image, max_kp=MAX_KEYPOINTS):
    """Convenience wrapper returning (keypoints, descriptor matrix); drops
    keypoints whose patch cannot be described."""
    structure = _structure(_to_float_gray(image))
    kps, descs = [], []
    for kp in detect(image, max_kp):
        try:
            descs.append(_describe_patch(structure, kp.x, kp.y))
        except BorderKeypoint:
            continue
        kps.append(kp)
    d = np.stack(descs) if descs else np.zeros((0, DESCRIPTOR_DIM))
    return kps, d


def match_mutual_nn(kps_a, desc_a, kps_b, desc_b, ratio=0.9, image_a="A", image_b="B"):
    """Mutual nearest neighbors under Euclidean distance, filtered by a Lowe
    ratio test applied in both directions; score = 1 - distance / 2."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        return MatchSet(np.zeros((0, 5)), image_a, image_b)
    d2 = (
        (desc_a**2).sum(axis=1)[:, None]
        + (desc_b**2).sum(axis=1)[None, :]
        - 2.0 * desc_a @ desc_b.T
    )
    d = np.sqrt(np.maximum(d2, 0.0))

    nn_ab = d.argmin(axis=1)
    nn_ba = d.argmin(axis=0)

    def ratio_ok(dists, best_idx):
        if dists.size < 2:
            return True
        best = dists[best_idx]
        second = np.partition(dists, 1)[1]
        if second <= 0:
            return best <= 0
        return best / second < ratio

    rows = []
    for i, j in enumerate(nn_ab):
        if nn_ba[j] != i:
            continue
        if not ratio_ok(d[i], j) or not ratio_ok(d[:, j], i):
            continue
        score = max(0.0, min(1.0, 1.0 - d[i, j] / 2.0))
        rows.append([kps_a[i].x, kps_a[i].y, kps_b[j].x, kps_b[j].y, score])
    pairs = np.array(rows) if rows else np.zeros((0, 5))
    return MatchSet(pairs, image_a, image_b)


def match_images(image_a, image_b, max_kp=MAX_KEYPOINTS, ratio=0.9, ids=("A", "B")):
    """detect + describe + mutual-NN on a raw image pair."""
    kps_a, desc_a = detect_and_describe(image_a, max_kp)
    kps_b, desc_b = detect_and_describe(image_b, max_kp)
    return match_mutual_nn(kps_a, desc_a, kps_b, desc_b, ratio, ids[0], ids[1])


def write_matches(path, matches):
    """Correspondence file: `MDSYN-MATCHES v1 <idA> <idB>` header, then
    `xA yA xB yB score` per line."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{MATCHES_HEADER} {matches.image_a} {matches.image_b}\n")
        for row in matches.pairs:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def ingest_matches(path, size_a=None, size_b=None):
    """Parse a correspondence file, validating scores and (when image sizes
    are given) coordinate bounds."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file, expected header", line=1)
    head = lines[0].split()
    if len(head) != 4 or " ".join(head[:2]) != MATCHES_HEADER:
        raise ParseError(f"bad header {lines[0]!r}, expected '{MATCHES_HEADER} <idA> <idB>'", line=1)
    image_a, image_b = head[2], head[3]

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ParseError(f"expected 5 fields, got {len(fields)}", line=lineno)
        try:
            row = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if not all(np.isfinite(row)):
            raise ParseError("non-finite value", line=lineno)
        if not (0.0 <= row[4] <= 1.0):
            raise ParseError(f"score {row[4]} outside [0, 1]", line=lineno)
        rows.append(row)
    pairs = np.array(rows) if rows else np.zeros((0, 5))
    matches = MatchSet(pairs, image_a, image_b)
    try:
        matches.check_bounds(size_a, size_b)
    except ValueError as exc:
        raise BoundsError(str(exc)) from exc
    return matches
