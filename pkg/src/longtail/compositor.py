"""Foreground/background compositing: Sim on Empty and Real on Empty.

Foreground sprites are either rendered animals (transparent-background
renders from the scene generator) or segmented crops of real images. The
overlay operation pastes a sprite onto an empty background photograph at a
uniform random position and scale, with straight alpha compositing and no
blending beyond the alpha edge, and reports the tight box of the pasted
pixels.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .annotations import BBox, ImageRecord, save_annotations
from .errors import PoolError, RenderError, ValidationError
from .imaging import resize, scale_saturation, write_rgb
from .rng import derive_rng
from .scenegen.assets import AssetLibrary
from .scenegen.raster import render
from .scenegen.scene import (
    CameraSpec,
    GenConfig,
    LightingConfig,
    SceneSpec,
    make_animal_instance,
    sample_lighting,
    sample_terrain,
)

OVERLAY_NIGHT_SATURATION = 0.125  # midpoint of the night saturation range


@dataclass
class ForegroundSprite:
    rgba: np.ndarray  # (H, W, 4) uint8, alpha channel = segmentation
    class_label: str
    source: str  # "rendered" | "segmented"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rgba.ndim != 3 or self.rgba.shape[2] != 4:
            raise ValidationError("sprite must be an RGBA array")
        if not (self.rgba[:, :, 3] > 0).any():
            raise ValidationError("sprite has no opaque pixels")


@dataclass
class EmptyBackground:
    rgb: np.ndarray
    location_id: str
    day_night: str


@dataclass
class OverlayConfig:
    scale_range: tuple[float, float] = (0.3, 0.9)  # sprite height / background height
    night_adapt: bool = True
    night_saturation_factor: float = OVERLAY_NIGHT_SATURATION


def render_foreground(
    instance,
    lighting: LightingConfig | None,
    library: AssetLibrary,
    rng: np.random.Generator,
    image_size: tuple[int, int] = (256, 256),
) -> ForegroundSprite:
    """Render one animal against a transparent background.

    When ``lighting`` is None a daytime config is drawn from the generator:
    sun azimuth uniform over the full circle, elevation over [20, 90].
    """
    if lighting is None:
        lighting = sample_lighting("day", rng)
    model = library.get_animal(instance.model_id)

    def attempt(camera: CameraSpec):
        spec = SceneSpec(
            master_seed=0,
            camera=camera,
            lighting=lighting,
            terrain=_sprite_terrain(),
            props=(),
            animals=(instance,),
        )
        return render(spec, library, scenery=False)

    distance = float(rng.uniform(2.8, 5.5))
    px, py = instance.position
    camera = CameraSpec(
        position=(px, py - distance, 1.0 + 0.4 * float(rng.random())),
        look_at=(px, py, 0.75 * instance.scale),
        fov_y_deg=50.0,
        width=image_size[0],
        height=image_size[1],
    )
    result = attempt(camera)
    if not (result.instance_mask > 0).any():
        camera = CameraSpec(
            position=(px, py - 4.0, 1.2),
            look_at=(px, py, 0.7 * instance.scale),
            fov_y_deg=50.0,
            width=image_size[0],
            height=image_size[1],
        )
        result = attempt(camera)
        if not (result.instance_mask > 0).any():
            raise RenderError(f"foreground render of {instance.model_id} has no opaque pixels")

    mask = result.instance_mask > 0
    ys, xs = np.nonzero(mask)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    rgba = np.zeros((y1 - y0, x1 - x0, 4), np.uint8)
    rgba[:, :, :3] = result.rgb[y0:y1, x0:x1]
    rgba[:, :, 3] = mask[y0:y1, x0:x1] * np.uint8(255)
    return ForegroundSprite(
        rgba=rgba,
        class_label=model.family,
        source="rendered",
        metadata={
            "model_id": instance.model_id,
            "pose_id": instance.pose_id,
            "pose_phase": instance.pose_phase,
            "yaw": instance.yaw,
            "lighting_mode": lighting.mode,
        },
    )


def _sprite_terrain():
    # never rasterized (scenery off); only the extent is used for validation
    return sample_terrain(GenConfig(terrain_extent=50.0), derive_rng(0, "sprite-terrain"), [])


def load_segmented_foregrounds(
    items: Sequence[tuple[np.ndarray, np.ndarray, str]],
    class_label: str,
) -> list[ForegroundSprite]:
    """Sprites from (image, mask, name) triples, cropped to the mask's box."""
    sprites = []
    for rgb, mask, name in items:
        if mask.shape[:2] != rgb.shape[:2]:
            raise ValidationError(
                f"mask size {mask.shape[:2]} does not match image {rgb.shape[:2]} for {name}"
            )
        if mask.ndim == 3:
            mask = mask[:, :, 0]
        opaque = mask > 0
        if not opaque.any():
            raise ValidationError(f"empty segmentation mask for {name}")
        ys, xs = np.nonzero(opaque)
        y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
        rgba = np.zeros((y1 - y0, x1 - x0, 4), np.uint8)
        rgba[:, :, :3] = rgb[y0:y1, x0:x1]
        alpha = mask[y0:y1, x0:x1]
        rgba[:, :, 3] = (alpha > 0) * np.uint8(255) if alpha.max() <= 1 else alpha
        sprites.append(
            ForegroundSprite(rgba=rgba, class_label=class_label, source="segmented",
                             metadata={"name": name})
        )
    return sprites


def overlay(
    sprite: ForegroundSprite,
    background: EmptyBackground,
    rng: np.random.Generator,
    cfg: OverlayConfig | None = None,
) -> tuple[np.ndarray, BBox]:
    """Paste a sprite at a uniform random position and scale.

    The output differs from the background only under the sprite's opaque
    support; the returned box tightly bounds that support.
    """
    cfg = cfg or OverlayConfig()
    bg = background.rgb
    bg_h, bg_w = bg.shape[:2]
    sp_h, sp_w = sprite.rgba.shape[:2]
    aspect = sp_w / sp_h

    s_lo, s_hi = cfg.scale_range
    s_fit = min(s_hi, (bg_w - 1) / (aspect * bg_h), (bg_h - 1) / bg_h)
    if s_fit < s_lo:
        raise ValidationError(
            f"sprite {sp_w}x{sp_h} cannot fit background {bg_w}x{bg_h} at minimum scale {s_lo}"
        )
    s = float(rng.uniform(s_lo, s_fit))
    new_h = min(bg_h, max(1, int(round(s * bg_h))))
    new_w = min(bg_w, max(1, int(round(aspect * new_h))))
    scaled = resize(sprite.rgba, new_w, new_h)

    rgb = scaled[:, :, :3].astype(np.float64)
    alpha = scaled[:, :, 3].astype(np.float64) / 255.0
    if cfg.night_adapt and background.day_night == "night":
        rgb = scale_saturation(rgb.astype(np.uint8), cfg.night_saturation_factor).astype(np.float64)

    x0 = int(rng.integers(0, bg_w - new_w + 1))
    y0 = int(rng.integers(0, bg_h - new_h + 1))

    out = bg.copy()
    region = out[y0 : y0 + new_h, x0 : x0 + new_w].astype(np.float64)
    blended = np.round(region * (1.0 - alpha[:, :, None]) + rgb * alpha[:, :, None])
    support = alpha > 0
    region[support] = blended[support]
    out[y0 : y0 + new_h, x0 : x0 + new_w] = region.astype(np.uint8)

    ys, xs = np.nonzero(support)
    box = BBox(
        x=float(x0 + xs.min()),
        y=float(y0 + ys.min()),
        w=float(xs.max() - xs.min() + 1),
        h=float(ys.max() - ys.min() + 1),
    )
    return out, box


def build_overlay_set(
    sprites: Sequence[ForegroundSprite] | None,
    backgrounds: Sequence[EmptyBackground],
    n: int,
    method: str,
    seed: int,
    library: AssetLibrary | None = None,
    class_label: str | None = None,
    cfg: OverlayConfig | None = None,
    night_fraction: float | None = None,
) -> Iterator[tuple[np.ndarray, ImageRecord]]:
    """Generate n composited images with records.

    sim_on_empty renders a fresh foreground per image (requires ``library``
    and ``class_label``); real_on_empty draws uniformly from the fixed
    segmented sprite pool. Backgrounds are sampled with replacement from the
    whole provided pool; scoping the pool to cis, trans, or both is the
    caller's experimental lever. With ``night_fraction`` set, backgrounds
    are drawn from the matching day/night sub-pool at the exact quota so the
    output mix is controlled rather than binomial.
    """
    if method not in ("sim_on_empty", "real_on_empty"):
        raise ValidationError(f"unknown overlay method {method!r}")
    if not backgrounds:
        raise PoolError("background pool is empty")
    if method == "real_on_empty":
        if not sprites:
            raise PoolError("sprite pool is empty")
        label = class_label or sprites[0].class_label
    else:
        if library is None or class_label is None:
            raise ValidationError("sim_on_empty requires a library and class_label")
        label = class_label

    by_mode = {
        "night": [b for b in backgrounds if b.day_night == "night"],
        "day": [b for b in backgrounds if b.day_night != "night"],
    }
    if night_fraction is not None:
        from .rng import is_night_index, night_quota

        want_night = night_quota(n, night_fraction)
        if want_night > 0 and not by_mode["night"]:
            raise PoolError("no night backgrounds available for the requested mix")
        if n - want_night > 0 and not by_mode["day"]:
            raise PoolError("no day backgrounds available for the requested mix")

    for i in range(n):
        rng = derive_rng(seed, "overlay", i)
        if night_fraction is None:
            background = backgrounds[int(rng.integers(len(backgrounds)))]
        else:
            mode = "night" if is_night_index(i, night_fraction) else "day"
            subset = by_mode[mode]
            background = subset[int(rng.integers(len(subset)))]
        if method == "real_on_empty":
            sprite = sprites[int(rng.integers(len(sprites)))]
        else:
            models = library.family_models(class_label)
            model_id = models[int(rng.integers(len(models)))]
            model = library.get_animal(model_id)
            clips = model.clip_ids()
            instance = make_animal_instance(
                library,
                model_id=model_id,
                pose_id=clips[int(rng.integers(len(clips)))],
                pose_phase=float(rng.uniform(0.0, 1.0)),
                position=(0.0, 0.0),
                yaw=float(rng.uniform(0.0, 360.0)),
                scale=1.0,
            )
            sprite = render_foreground(instance, None, library, rng)
        image, box = overlay(sprite, background, rng, cfg)
        image_id = f"{label}-{method}-{seed & 0xFFFFFFFF:08x}-{i:06d}"
        record = ImageRecord(
            image_id=image_id,
            location_id=background.location_id,
            date=dt.date(2021, 6, 2 + 2 * (i % 14)),
            class_label=label,
            boxes=(box,),
            day_night=background.day_night,
            source=method,
            width=image.shape[1],
            height=image.shape[0],
            file_path=f"images/{image_id}.png",
        )
        yield image, record


def write_overlay_set(
    out_dir: str | Path,
    sprites: Sequence[ForegroundSprite] | None,
    backgrounds: Sequence[EmptyBackground],
    n: int,
    method: str,
    seed: int,
    library: AssetLibrary | None = None,
    class_label: str | None = None,
    cfg: OverlayConfig | None = None,
    night_fraction: float | None = None,
    manifest_name: str = "annotations.json",
) -> list[ImageRecord]:
    out_dir = Path(out_dir)
    records = []
    for image, record in build_overlay_set(
        sprites, backgrounds, n, method, seed,
        library=library, class_label=class_label, cfg=cfg,
        night_fraction=night_fraction,
    ):
        write_rgb(out_dir / record.file_path, image)
        records.append(record)
    save_annotations(out_dir / manifest_name, records)
    return records
