"""Crop loading for box-classification training.

Training operates on ground-truth box crops, not whole frames. The loader
decodes each source image once, crops the annotated box with a small
context margin, caches the crop at a fixed resolution, and hands uint8
arrays to the augmentation stage. Duplicated records (oversampling) share
cache entries through their common file path.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..annotations import ImageRecord
from ..errors import TrainingError
from ..imaging import read_rgb, resize


class CropLoader:
    def __init__(self, root: str | Path, cache_resolution: int = 48,
                 margin: float = 0.12):
        self.root = Path(root)
        self.cache_resolution = cache_resolution
        self.margin = margin
        self._cache: dict[tuple, np.ndarray] = {}

    def __call__(self, record: ImageRecord) -> np.ndarray:
        if not record.boxes:
            raise TrainingError(f"record {record.image_id} has no box to crop")
        box = max(record.boxes, key=lambda b: b.w * b.h)
        key = (record.file_path, box.x, box.y, box.w, box.h)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        path = self.root / record.file_path
        try:
            image = read_rgb(path)
        except Exception as exc:
            raise TrainingError(f"cannot read image for {record.image_id}: {exc}") from exc
        h, w = image.shape[:2]
        pad = self.margin * max(box.w, box.h)
        x0 = max(0, int(np.floor(box.x - pad)))
        y0 = max(0, int(np.floor(box.y - pad)))
        x1 = min(w, int(np.ceil(box.x + box.w + pad)))
        y1 = min(h, int(np.ceil(box.y + box.h + pad)))
        crop = image[y0:y1, x0:x1]
        crop = resize(crop, self.cache_resolution, self.cache_resolution)
        self._cache[key] = crop
        return crop

    def clear(self) -> None:
        self._cache.clear()
