"""Event-camera response simulation from frame pairs.

A pixel fires once its log-brightness change reaches the contrast threshold;
each emitted event advances the pixel's reference level by one threshold step,
so a change of ``dL`` yields ``floor(|dL| / C)`` events of polarity
``sign(dL)``. Timestamps interpolate linearly between the two frame times.
"""

from dataclasses import dataclass

import numpy as np

from .augment import perturbed_corner_homography, warp_image
from .errors import DegenerateSample, SizeMismatch
from .geometry import Homography

LOG_EPS = 1e-3
CONTRAST_RANGE = (0.05, 0.5)
DEFAULT_BASELINE = 128
DEFAULT_GAIN = 32


@dataclass(frozen=True)
class EventRecord:
    """One simulated event: pixel, time, polarity."""

    x: int
    y: int
    t: float
    p: int

    def __post_init__(self):
        if self.p not in (-1, 1):
            raise ValueError("polarity must be -1 or +1")


@dataclass(frozen=True)
class EventSimConfig:
    contrast: float = 0.25
    polarity_mode: str = "both"  # both | positive | negative
    motion_px: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.contrast <= 0:
            raise ValueError("contrast must be positive")
        if self.polarity_mode not in ("both", "positive", "negative"):
            raise ValueError("polarity_mode must be both/positive/negative")
        if self.motion_px < 0:
            raise ValueError("motion_px must be non-negative")

    @staticmethod
    def sample(seed, motion_px=2.0, polarity_mode="both"):
        """Config with the contrast drawn uniformly from [0.05, 0.5]."""
        rng = np.random.default_rng(seed)
        c = float(rng.uniform(*CONTRAST_RANGE))
        return EventSimConfig(contrast=c, polarity_mode=polarity_mode,
                              motion_px=motion_px, seed=seed)


@dataclass(frozen=True)
class EventFrame:
    """Signed per-pixel event counts plus the parameters used to render them."""

    counts: np.ndarray
    baseline: int = DEFAULT_BASELINE
    gain: int = DEFAULT_GAIN

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2:
            raise ValueError("counts must be 2-D")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def to_image(self):
        """Mid-gray baseline plus gain per signed count, clamped to [0, 255]."""
        vals = self.baseline + self.gain * self.counts
        return np.clip(vals, 0, 255).astype(np.uint8)


def to_grayscale(image):
    """Any uint8/float image -> float64 grayscale in [0, 1] (BT.601 luma)."""
    img = np.asarray(image, dtype=np.float64)
    if np.issubdtype(np.asarray(image).dtype, np.integer):
        img = img / 255.0
    if img.ndim == 3:
        img = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    return np.clip(img, 0.0, 1.0)


def log_brightness(image):
    """log(I + eps) of a unit-range grayscale image; finite everywhere."""
    img = np.asarray(image, dtype=np.float64)
    if img.min() < 0 or img.max() > 1:
        raise ValueError("intensities must lie in [0, 1]")
    return np.log(img + LOG_EPS)


def simulate_events(frame0, frame1, cfg, t0=0.0, t1=1.0):
    """Events triggered by the brightness change from frame0 to frame1.

    Frames are unit-range grayscale images of identical shape. Returned
    events are ordered row-major by pixel, then by time.
    """
    f0 = np.asarray(frame0, dtype=np.float64)
    f1 = np.asarray(frame1, dtype=np.float64)
    if f0.shape != f1.shape:
        raise SizeMismatch(f"frames differ in shape: {f0.shape} vs {f1.shape}")
    dl = log_brightness(f1) - log_brightness(f0)
    c = cfg.contrast
    counts = np.floor(np.abs(dl) / c).astype(np.int64)
    polarity = np.sign(dl).astype(np.int64)

    events = []
    span = t1 - t0
    for y, x in zip(*np.nonzero(counts)):
        n = counts[y, x]
        p = int(polarity[y, x])
        if cfg.polarity_mode == "positive" and p < 0:
            continue
        if cfg.polarity_mode == "negative" and p > 0:
            continue
        mag = abs(dl[y, x])
        for k in range(1, n + 1):
            events.append(EventRecord(int(x), int(y), t0 + span * (k * c / mag), p))
    return events


def synthesize_motion_pair(image, cfg, rng=None):
    """A slight-motion frame pair: (image, image warped by a random bounded
    homography, the homography itself as ground truth).

    Every corner displacement of the motion homography is at most
    cfg.motion_px. Deterministic under cfg.seed when no generator is passed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    h, w = image.shape[:2]
    if cfg.motion_px == 0:
        motion = Homography.identity()
    else:
        motion = None
        for _ in range(100):
            theta = rng.uniform(0.0, 2.0 * np.pi, size=4)
            radius = rng.uniform(0.0, cfg.motion_px, size=4)
            offsets = radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
            try:
                motion = perturbed_corner_homography(w, h, offsets)
                break
            except DegenerateSample:
                continue
        if motion is None:
            raise DegenerateSample("no convex motion sample; image too small for motion_px")
    frame1 = image if cfg.motion_px == 0 else warp_image(image, motion)
    return image, frame1, motion


def render_event_frame(events, size):
    """Accumulate signed counts on a (width, height) grid."""
    w, h = size
    counts = np.zeros((h, w), dtype=np.int64)
    for e in events:
        if not (0 <= e.x < w and 0 <= e.y < h):
            raise ValueError(f"event at ({e.x}, {e.y}) outside {w}x{h} frame")
        counts[e.y, e.x] += e.p
    return EventFrame(counts)


def write_events_csv(path, events):
    """Raw event stream as `x,y,t,p` lines."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for e in events:
            fh.write(f"{e.x},{e.y},{e.t!r},{e.p}\n")


def read_events_csv(path):
    events = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            x, y, t, p = line.strip().split(",")
            events.append(EventRecord(int(x), int(y), float(t), int(p)))
    return events
