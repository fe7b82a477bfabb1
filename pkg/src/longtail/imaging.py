"""Small image helpers shared by the generators, compositor, and trainer.

All images are numpy arrays, RGB channel order, uint8 unless stated
otherwise. cv2 is used for codecs and resampling; channel order is swapped
at the call boundary so the rest of the codebase never sees BGR.
"""

from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np

from .errors import ValidationError

# cv2 internal threading does not affect results for the ops used here, but
# pinning it avoids oversubscription next to BLAS threads.
cv2.setNumThreads(0)

NIGHT_SATURATION_THRESHOLD = 0.08


def read_rgb(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise ValidationError(f"unreadable image: {path}")
    return img[:, :, ::-1].copy()


def write_rgb(path: str | Path, rgb: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(path), rgb[:, :, ::-1])
    if not ok:
        raise ValidationError(f"could not write image: {path}")


def read_mask16(path: str | Path) -> np.ndarray:
    mask = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if mask is None:
        raise ValidationError(f"unreadable mask: {path}")
    return mask.astype(np.uint16)


def write_mask16(path: str | Path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(path), mask.astype(np.uint16))
    if not ok:
        raise ValidationError(f"could not write mask: {path}")


def read_rgba(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None or img.ndim != 3 or img.shape[2] != 4:
        raise ValidationError(f"not an RGBA image: {path}")
    return img[:, :, [2, 1, 0, 3]].copy()


def write_rgba(path: str | Path, rgba: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok = cv2.imwrite(str(path), rgba[:, :, [2, 1, 0, 3]])
    if not ok:
        raise ValidationError(f"could not write image: {path}")


def resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Resize with area averaging when shrinking, bilinear when growing."""
    h, w = img.shape[:2]
    interp = cv2.INTER_AREA if (width < w or height < h) else cv2.INTER_LINEAR
    return cv2.resize(img, (width, height), interpolation=interp)


def mean_saturation(rgb: np.ndarray) -> float:
    """Mean HSV saturation in [0, 1] of an RGB uint8 image."""
    hsv = cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)
    return float(hsv[:, :, 1].mean() / 255.0)


def infer_day_night(rgb: np.ndarray, threshold: float = NIGHT_SATURATION_THRESHOLD) -> str:
    """Classify an image as day or night from its color saturation.

    Camera-trap night frames (IR or white flash) are nearly monochrome, so a
    low mean saturation is a reliable night signal when no metadata flag is
    available. The threshold is configurable.
    """
    return "night" if mean_saturation(rgb) < threshold else "day"


def scale_saturation(rgb: np.ndarray, factor: float) -> np.ndarray:
    """Move colors toward their gray value; factor 1 is identity, 0 grayscale."""
    f = np.float32(rgb)
    gray = f @ np.asarray([0.299, 0.587, 0.114], dtype=np.float32)
    out = gray[:, :, None] + factor * (f - gray[:, :, None])
    return np.clip(out, 0, 255).astype(np.uint8)


def files_equal(a: str | Path, b: str | Path) -> bool:
    pa, pb = Path(a), Path(b)
    if os.path.getsize(pa) != os.path.getsize(pb):
        return False
    return pa.read_bytes() == pb.read_bytes()
