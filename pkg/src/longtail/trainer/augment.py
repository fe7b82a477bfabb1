"""Training-time image augmentation.

The recipe: random crop keeping at least a configured fraction of the image
area, horizontal flip, independent multiplicative color jitter (brightness,
contrast, saturation), and occasional Gaussian blur. All randomness comes
from the generator passed in, and the draw sequence is fixed, so equal
generator states give equal outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..errors import ValidationError
from ..imaging import resize

_LUMA = np.array([0.299, 0.587, 0.114], np.float32)


@dataclass(frozen=True)
class AugmentationConfig:
    min_crop_fraction: float = 0.65
    flip_probability: float = 0.5
    brightness_range: tuple[float, float] = (0.8, 1.25)
    contrast_range: tuple[float, float] = (0.8, 1.25)
    saturation_range: tuple[float, float] = (0.8, 1.25)
    blur_probability: float = 0.1
    blur_sigma_range: tuple[float, float] = (0.5, 1.5)
    aspect_jitter: tuple[float, float] = (0.9, 1.112)
    output_resolution: int = 64

    def __post_init__(self) -> None:
        if not 0 < self.min_crop_fraction <= 1:
            raise ValidationError(
                f"min_crop_fraction must be in (0, 1], got {self.min_crop_fraction}"
            )
        if self.output_resolution < 1:
            raise ValidationError("output_resolution must be positive")

    def identity(self) -> "AugmentationConfig":
        """Deterministic pass-through variant (resize only)."""
        return AugmentationConfig(
            min_crop_fraction=1.0,
            flip_probability=0.0,
            brightness_range=(1.0, 1.0),
            contrast_range=(1.0, 1.0),
            saturation_range=(1.0, 1.0),
            blur_probability=0.0,
            aspect_jitter=(1.0, 1.0),
            output_resolution=self.output_resolution,
        )


def _crop_window(h: int, w: int, cfg: AugmentationConfig, rng: np.random.Generator):
    frac = float(rng.uniform(cfg.min_crop_fraction, 1.0))
    ratio = float(rng.uniform(*cfg.aspect_jitter))
    area = frac * h * w
    cw = np.sqrt(area * ratio * w / h)
    ch = area / cw
    if cw > w or ch > h:
        # jittered aspect does not fit; keep the source aspect instead
        cw = w * np.sqrt(frac)
        ch = h * np.sqrt(frac)
    cw_i = min(w, int(np.ceil(cw)))
    ch_i = min(h, int(np.ceil(ch)))
    x0 = int(rng.integers(0, w - cw_i + 1))
    y0 = int(rng.integers(0, h - ch_i + 1))
    return x0, y0, cw_i, ch_i


def augment(image: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    """One augmentation draw; returns a square uint8 image at output size."""
    h, w = image.shape[:2]
    x0, y0, cw, ch = _crop_window(h, w, cfg, rng)
    out = resize(image[y0 : y0 + ch, x0 : x0 + cw], cfg.output_resolution, cfg.output_resolution)

    if rng.random() < cfg.flip_probability:
        out = out[:, ::-1]

    x = out.astype(np.float32)
    brightness = float(rng.uniform(*cfg.brightness_range))
    contrast = float(rng.uniform(*cfg.contrast_range))
    saturation = float(rng.uniform(*cfg.saturation_range))
    x = x * brightness
    mean = float((x @ _LUMA).mean())
    x = mean + (x - mean) * contrast
    gray = x @ _LUMA
    x = gray[:, :, None] + (x - gray[:, :, None]) * saturation

    blur_draw = rng.random()
    sigma = float(rng.uniform(*cfg.blur_sigma_range))
    if blur_draw < cfg.blur_probability:
        x = cv2.GaussianBlur(x, (0, 0), sigma)

    return np.clip(np.round(x), 0, 255).astype(np.uint8)


def eval_transform(image: np.ndarray, resolution: int) -> np.ndarray:
    """Deterministic evaluation path: plain resize to the model input size."""
    return resize(image, resolution, resolution)
