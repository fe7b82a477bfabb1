from __future__ import annotations

import numpy as np
import pytest
from scipy import stats as sps

from longtail.compositor import (
    EmptyBackground,
    ForegroundSprite,
    OverlayConfig,
    build_overlay_set,
    load_segmented_foregrounds,
    overlay,
    render_foreground,
)
from longtail.errors import PoolError, ValidationError
from longtail.rng import derive_rng
from longtail.scenegen import GenConfig, LightingConfig, generate_scene, render
from longtail.scenegen.scene import make_animal_instance


def _instance(library, model="cervid-0", pos=(0.0, 0.0)):
    return make_animal_instance(library, model, "stand", 0.0, pos, 210.0, 1.0)


def _background(seed=0, night=False, size=200, location="bg0"):
    rng = np.random.default_rng(seed)
    rgb = (rng.random((size, size, 3)) * 120 + 40).astype(np.uint8)
    return EmptyBackground(rgb=rgb, location_id=location,
                           day_night="night" if night else "day")


class TestRenderForeground:
    def test_deterministic_bytes(self, library):
        inst = _instance(library)
        light = LightingConfig(mode="day", sun_azimuth=100.0, sun_elevation=45.0)
        a = render_foreground(inst, light, library, derive_rng(0, "fg"))
        b = render_foreground(inst, light, library, derive_rng(0, "fg"))
        assert np.array_equal(a.rgba, b.rgba)

    def test_alpha_support_nonempty(self, library):
        for i in range(5):
            sprite = render_foreground(_instance(library), None, library,
                                       derive_rng(i, "fg2"))
            assert (sprite.rgba[:, :, 3] > 0).any()

    def test_sprite_matches_full_scene_mask(self, library):
        # cross-render oracle: the sprite's support equals the animal's mask
        # pixels in an equivalent scene render, cropped to its tight box
        inst = _instance(library, pos=(0.0, -9.0))
        light = LightingConfig(mode="day", sun_azimuth=90.0, sun_elevation=60.0)
        rng = derive_rng(7, "cross")
        distance = float(rng.uniform(2.8, 5.5))
        from longtail.scenegen.scene import CameraSpec, SceneSpec, sample_terrain

        camera = CameraSpec(
            position=(inst.position[0], inst.position[1] - distance,
                      1.0 + 0.4 * float(rng.random())),
            look_at=(inst.position[0], inst.position[1], 0.75),
            fov_y_deg=50.0, width=256, height=256,
        )
        sprite = render_foreground(inst, light, library, derive_rng(7, "cross"))
        cfg = GenConfig(densities={f: (0, 0) for f in ("tree", "rock", "log", "bush", "grass")})
        full = generate_scene(cfg, library, derive_rng(99, "full"),
                              lighting=light, animals=(inst,), camera=camera)
        mask = render(full, library).instance_mask == 1
        ys, xs = np.nonzero(mask)
        cropped = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
        assert np.array_equal(sprite.rgba[:, :, 3] > 0, cropped)


class TestLoadSegmented:
    def test_full_frame_mask(self):
        rgb = np.full((20, 30, 3), 99, np.uint8)
        mask = np.full((20, 30), 255, np.uint8)
        (sprite,) = load_segmented_foregrounds([(rgb, mask, "full")], "cervid")
        assert sprite.rgba.shape == (20, 30, 4)
        assert (sprite.rgba[:, :, 3] == 255).all()
        assert np.array_equal(sprite.rgba[:, :, :3], rgb)

    def test_blob_tight_box(self):
        rgb = np.zeros((40, 40, 3), np.uint8)
        mask = np.zeros((40, 40), np.uint8)
        mask[10:13, 20:25] = 255
        (sprite,) = load_segmented_foregrounds([(rgb, mask, "blob")], "x")
        assert sprite.rgba.shape == (3, 5, 4)

    def test_reconstruction_at_offset(self):
        rng = np.random.default_rng(1)
        rgb = (rng.random((32, 32, 3)) * 255).astype(np.uint8)
        mask = np.zeros((32, 32), np.uint8)
        mask[8:20, 5:15] = 255
        mask[12, 7] = 0  # hole
        (sprite,) = load_segmented_foregrounds([(rgb, mask, "rec")], "x")
        canvas = np.zeros_like(rgb)
        region = canvas[8:20, 5:15]
        alpha = sprite.rgba[:, :, 3] > 0
        region[alpha] = sprite.rgba[:, :, :3][alpha]
        expected = np.where((mask > 0)[:, :, None], rgb, 0)
        assert np.array_equal(canvas, expected)

    def test_empty_mask_named(self):
        rgb = np.zeros((10, 10, 3), np.uint8)
        with pytest.raises(ValidationError, match="badfile"):
            load_segmented_foregrounds([(rgb, np.zeros((10, 10), np.uint8), "badfile")], "x")

    def test_size_mismatch(self):
        rgb = np.zeros((10, 10, 3), np.uint8)
        with pytest.raises(ValidationError, match="mismatch|match"):
            load_segmented_foregrounds([(rgb, np.ones((8, 8), np.uint8), "m")], "x")


class TestOverlay:
    def _sprite(self, h=20, w=16, value=200):
        rgba = np.zeros((h, w, 4), np.uint8)
        rgba[:, :, :3] = value
        rgba[:, :, 3] = 255
        return ForegroundSprite(rgba=rgba, class_label="x", source="segmented")

    def test_single_pixel_sprite(self):
        rgba = np.zeros((1, 1, 4), np.uint8)
        rgba[0, 0] = (250, 10, 10, 255)
        sprite = ForegroundSprite(rgba=rgba, class_label="x", source="segmented")
        bg = _background(3)
        out, box = overlay(sprite, bg, derive_rng(0, "ov"),
                           OverlayConfig(scale_range=(0.005, 0.005)))
        diff = np.nonzero((out != bg.rgb).any(axis=2))
        assert len(diff[0]) == 1
        assert (box.w, box.h) == (1.0, 1.0)
        assert box.x == float(diff[1][0]) and box.y == float(diff[0][0])

    def test_untouched_outside_box(self):
        sprite = self._sprite()
        bg = _background(5)
        out, box = overlay(sprite, bg, derive_rng(4, "ov"), OverlayConfig())
        x0, y0, x1, y1 = int(box.x), int(box.y), int(box.x + box.w), int(box.y + box.h)
        untouched = out.copy()
        untouched[y0:y1, x0:x1] = bg.rgb[y0:y1, x0:x1]
        assert np.array_equal(untouched, bg.rgb)

    def test_determinism(self):
        sprite = self._sprite()
        bg = _background(6)
        a, box_a = overlay(sprite, bg, derive_rng(9, "ov"),
                           OverlayConfig(scale_range=(0.5, 0.5)))
        b, box_b = overlay(sprite, bg, derive_rng(9, "ov"),
                           OverlayConfig(scale_range=(0.5, 0.5)))
        assert np.array_equal(a, b) and box_a == box_b

    def test_night_adaptation_desaturates(self):
        sprite = self._sprite()
        sprite.rgba[:, :, 0] = 240
        sprite.rgba[:, :, 1] = 60
        sprite.rgba[:, :, 2] = 40
        day_bg = _background(7, night=False)
        night_bg = EmptyBackground(rgb=day_bg.rgb.copy(), location_id="bg0",
                                   day_night="night")
        day_out, day_box = overlay(sprite, day_bg, derive_rng(3, "ov"), OverlayConfig())
        night_out, night_box = overlay(sprite, night_bg, derive_rng(3, "ov"), OverlayConfig())
        from longtail.imaging import mean_saturation

        dx, dy = int(day_box.x), int(day_box.y)
        day_patch = day_out[dy : dy + int(day_box.h), dx : dx + int(day_box.w)]
        nx, ny = int(night_box.x), int(night_box.y)
        night_patch = night_out[ny : ny + int(night_box.h), nx : nx + int(night_box.w)]
        assert mean_saturation(night_patch) < mean_saturation(day_patch)

    def test_oversized_sprite_rejected(self):
        sprite = self._sprite(h=100, w=400)
        bg = _background(8, size=100)
        with pytest.raises(ValidationError):
            overlay(sprite, bg, derive_rng(0, "ov"), OverlayConfig(scale_range=(0.9, 0.9)))


class TestBuildOverlaySet:
    def test_zero_output(self):
        items = list(
            build_overlay_set([self_sprite()], [_background(0)], 0, "real_on_empty", 1)
        )
        assert items == []

    def test_single_sprite_five_placements(self):
        sprite = self_sprite()
        bgs = [_background(i, location=f"L{i}") for i in range(3)]
        out = list(build_overlay_set([sprite], bgs, 5, "real_on_empty", seed=2))
        assert len(out) == 5
        assert {rec.class_label for _, rec in out} == {"x"}
        boxes = {(rec.boxes[0].x, rec.boxes[0].y) for _, rec in out}
        assert len(boxes) > 1

    def test_empty_pools_rejected(self):
        with pytest.raises(PoolError):
            list(build_overlay_set([], [_background(0)], 1, "real_on_empty", 0))
        with pytest.raises(PoolError):
            list(build_overlay_set([self_sprite()], [], 1, "real_on_empty", 0))

    def test_location_distribution_matches_pool(self):
        sprite = self_sprite()
        bgs = [_background(i, location=f"L{i % 4}") for i in range(8)]
        out = list(build_overlay_set([sprite], bgs, 1000, "real_on_empty", seed=5))
        counts = {}
        for _, rec in out:
            counts[rec.location_id] = counts.get(rec.location_id, 0) + 1
        observed = [counts.get(f"L{k}", 0) for k in range(4)]
        assert sps.chisquare(observed).pvalue > 0.01

    def test_sim_on_empty_renders_fresh(self, library):
        bgs = [_background(i) for i in range(2)]
        out = list(
            build_overlay_set(None, bgs, 3, "sim_on_empty", seed=8,
                              library=library, class_label="cervid")
        )
        assert len(out) == 3
        assert {rec.source for _, rec in out} == {"sim_on_empty"}

    def test_night_fraction_quota(self):
        sprite = self_sprite()
        bgs = [_background(i, night=(i % 2 == 0)) for i in range(6)]
        out = list(build_overlay_set([sprite], bgs, 10, "real_on_empty", seed=3,
                                     night_fraction=0.5))
        assert sum(1 for _, rec in out if rec.day_night == "night") == 5


def self_sprite(h=24, w=18):
    rng = np.random.default_rng(12)
    rgba = np.zeros((h, w, 4), np.uint8)
    rgba[:, :, :3] = (rng.random((h, w, 3)) * 255).astype(np.uint8)
    rgba[2:-2, 2:-2, 3] = 255
    return ForegroundSprite(rgba=rgba, class_label="x", source="segmented")
