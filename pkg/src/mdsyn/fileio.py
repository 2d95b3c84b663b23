"""Image and depth-map file formats.

Depth maps come either from 16-bit grayscale PNG (integer depths, 0 invalid)
or from a raw little-endian float32 grid with a 16-byte header:
magic ``DPTH``, u32 width, u32 height, u32 reserved.
"""

import struct

import numpy as np
from PIL import Image

from .geometry import DepthMap

DEPTH_MAGIC = b"DPTH"


def load_image(path):
    """PNG -> uint8 array, H x W (grayscale) or H x W x 3 (color)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8)


def save_image(path, image):
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.floor(np.asarray(arr, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def save_depth_png16(path, depth):
    values = np.asarray(depth.values if isinstance(depth, DepthMap) else depth)
    if values.min() < 0 or values.max() > 65535:
        raise ValueError("16-bit PNG depth must lie in [0, 65535]")
    Image.fromarray(values.astype(np.uint16)).save(path, format="PNG")


def save_depth_raw(path, depth):
    values = np.asarray(depth.values if isinstance(depth, DepthMap) else depth, dtype="<f4")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC + struct.pack("<III", w, h, 0))
        fh.write(values.tobytes(order="C"))


def load_depth(path):
    """Dispatch on content: raw DPTH grid or 16-bit PNG."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == DEPTH_MAGIC:
        with open(path, "rb") as fh:
            header = fh.read(16)
            w, h, _ = struct.unpack("<III", header[4:])
            data = np.frombuffer(fh.read(4 * w * h), dtype="<f4")
        if data.size != w * h:
            raise ValueError(f"depth file truncated: expected {w * h} values, got {data.size}")
        return DepthMap(data.reshape(h, w).astype(np.float64))
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("depth PNG must be single channel")
    return DepthMap(arr)
