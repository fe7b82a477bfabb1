"""Batch image generation with controllable variation axes.

Each image gets its own RNG streams derived from (seed, index), so the
output is independent of generation order and identical whether images are
produced sequentially or in parallel. The pose / lighting / model axes can
each be held at a reference value or resampled per image, mirroring the
fixed-vs-varied generation regimes.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..annotations import ImageRecord, save_annotations
from ..errors import RenderError, ValidationError
from ..imaging import write_mask16, write_rgb
from ..rng import derive_rng, is_night_index
from .assets import AssetLibrary
from .raster import RenderResult, render
from .scene import (
    GenConfig,
    LightingConfig,
    SceneSpec,
    generate_scene,
    make_animal_instance,
    sample_camera,
    sample_lighting,
)

FIXED = "fixed"
VARIED = "varied"


@dataclass(frozen=True)
class BatchVariation:
    pose: str = VARIED
    lighting: str = VARIED
    model: str = VARIED

    def __post_init__(self) -> None:
        for axis, value in (("pose", self.pose), ("lighting", self.lighting),
                            ("model", self.model)):
            if value not in (FIXED, VARIED):
                raise ValidationError(f"variation axis {axis} must be fixed|varied, got {value!r}")

    def tag(self) -> str:
        """fP/fL/fM-style label: which axes are held fixed."""
        fixed = "".join(
            ch for ch, v in (("P", self.pose), ("L", self.lighting), ("M", self.model))
            if v == FIXED
        )
        return f"f{fixed}" if fixed else "allvaried"


@dataclass(frozen=True)
class FixedRefs:
    """Reference values used for axes held fixed."""

    model_id: str | None = None  # default: first variant of the class family
    pose_id: str = "stand"
    pose_phase: float = 0.0
    lighting: LightingConfig = field(default_factory=lambda: LightingConfig(mode="day"))


def _synthetic_date(i: int) -> dt.date:
    return dt.date(2021, 6, 2 + 2 * (i % 14))  # always an even day


def generate_batch(
    n: int,
    variation: BatchVariation,
    night_fraction: float,
    class_label: str,
    library: AssetLibrary,
    seed: int,
    gen_config: GenConfig | None = None,
    source: str = "trapcam_unity",
    fixed_refs: FixedRefs | None = None,
    model_family: str | None = None,
    max_retries: int = 8,
) -> Iterator[tuple[RenderResult, ImageRecord]]:
    """Yield n rendered images of one class with their records.

    Night images land at the indices given by the prefix-exact quota rule,
    so every prefix of the batch carries the requested night fraction. When
    the lighting axis is fixed the reference config decides day vs night for
    the whole batch and ``night_fraction`` is ignored.

    ``model_family`` lets the rendered models come from a different family
    than the emitted class label (proxy-model generation for a class whose
    own models are unavailable); it defaults to the class label.
    """
    if n < 1:
        raise ValidationError(f"batch size must be >= 1, got {n}")
    gen_config = gen_config or GenConfig()
    refs = fixed_refs or FixedRefs()
    family = model_family or class_label
    family_models = library.family_models(family)
    fixed_model = refs.model_id or family_models[0]
    library.get_animal(fixed_model)  # fail fast if the reference is missing

    for i in range(n):
        result, record = _generate_one(
            i, n, variation, night_fraction, class_label, family, library, seed,
            gen_config, source, refs, fixed_model, max_retries,
        )
        yield result, record


def _generate_one(
    i: int,
    n: int,
    variation: BatchVariation,
    night_fraction: float,
    class_label: str,
    model_family: str,
    library: AssetLibrary,
    seed: int,
    gen_config: GenConfig,
    source: str,
    refs: FixedRefs,
    fixed_model: str,
    max_retries: int,
) -> tuple[RenderResult, ImageRecord]:
    if variation.lighting == FIXED:
        mode = refs.lighting.mode
    else:
        mode = "night" if is_night_index(i, night_fraction) else "day"

    last_error = None
    for attempt in range(max_retries):
        scene_rng = derive_rng(seed, "batch", i, "scene", attempt)
        cam_rng = derive_rng(seed, "batch", i, "camera", attempt)
        light_rng = derive_rng(seed, "batch", i, "light", attempt)
        animal_rng = derive_rng(seed, "batch", i, "animal", attempt)
        place_rng = derive_rng(seed, "batch", i, "place", attempt)

        camera = sample_camera(gen_config, cam_rng)
        if variation.lighting == FIXED:
            lighting = refs.lighting
        else:
            lighting = sample_lighting(
                mode, light_rng,
                day_elevation=gen_config.day_elevation,
                flash_range=gen_config.night_flash,
                saturation_range=gen_config.night_saturation,
            )
        if variation.model == FIXED:
            model_id = fixed_model
        else:
            model_id = family_choice(library, model_family, animal_rng)
        if variation.pose == FIXED:
            pose_id, phase = refs.pose_id, refs.pose_phase
        else:
            clips = library.get_animal(model_id).clip_ids()
            pose_id = clips[int(animal_rng.integers(len(clips)))]
            phase = float(animal_rng.uniform(0.0, 1.0))

        cam_xy = np.asarray(camera.position[:2])
        look_xy = np.asarray(camera.look_at[:2])
        facing = np.arctan2(look_xy[0] - cam_xy[0], look_xy[1] - cam_xy[1])
        half_wedge = np.radians(camera.fov_y_deg) * 0.5 * 0.7
        dist = float(place_rng.uniform(*gen_config.animal_distance))
        ang = facing + float(place_rng.uniform(-half_wedge, half_wedge))
        pos = cam_xy + dist * np.array([np.sin(ang), np.cos(ang)])
        pos = np.clip(pos, -gen_config.terrain_extent * 0.95, gen_config.terrain_extent * 0.95)
        instance = make_animal_instance(
            library,
            model_id=model_id,
            pose_id=pose_id,
            pose_phase=phase,
            position=(float(pos[0]), float(pos[1])),
            yaw=float(place_rng.uniform(0.0, 360.0)),
            scale=float(place_rng.uniform(*gen_config.animal_scale)),
        )

        spec = generate_scene(
            gen_config, library, scene_rng,
            lighting=lighting, animals=(instance,), camera=camera,
        )
        result = render(spec, library)
        if 1 in result.boxes:
            image_id = f"{class_label}-{source}-{seed & 0xFFFFFFFF:08x}-{i:06d}"
            record = ImageRecord(
                image_id=image_id,
                location_id=f"sim-{source}",
                date=_synthetic_date(i),
                class_label=class_label,
                boxes=(result.boxes[1],),
                day_night=mode,
                source=source,
                width=spec.camera.width,
                height=spec.camera.height,
                file_path=f"images/{image_id}.png",
            )
            return result, record
        last_error = f"animal invisible in image {i} (attempt {attempt})"
    raise RenderError(f"could not produce a visible animal: {last_error}")


def family_choice(library: AssetLibrary, family: str, rng) -> str:
    models = library.family_models(family)
    return models[int(rng.integers(len(models)))]


def write_batch(
    out_dir: str | Path,
    n: int,
    variation: BatchVariation,
    night_fraction: float,
    class_label: str,
    library: AssetLibrary,
    seed: int,
    gen_config: GenConfig | None = None,
    source: str = "trapcam_unity",
    fixed_refs: FixedRefs | None = None,
    model_family: str | None = None,
    save_masks: bool = False,
    manifest_name: str = "annotations.json",
) -> list[ImageRecord]:
    """Materialize a batch on disk: PNG images, optional masks, manifest."""
    out_dir = Path(out_dir)
    records = []
    for result, record in generate_batch(
        n, variation, night_fraction, class_label, library, seed,
        gen_config=gen_config, source=source, fixed_refs=fixed_refs,
        model_family=model_family,
    ):
        write_rgb(out_dir / record.file_path, result.rgb)
        if save_masks:
            write_mask16(out_dir / "masks" / f"{record.image_id}.png", result.instance_mask)
        records.append(record)
    save_annotations(out_dir / manifest_name, records)
    return records
