"""Procedural scene generation: assets, seeded scenes, software renderer."""

from .assets import AnimalModel, AssetLibrary, PropShape, builtin_library
from .batch import BatchVariation, FixedRefs, generate_batch, write_batch
from .raster import RenderResult, extract_bboxes, render, render_instances
from .scene import (
    AnimalInstance,
    CameraSpec,
    GenConfig,
    LightingConfig,
    PropPlacement,
    SceneSpec,
    TerrainSpec,
    airsim_gen_config,
    generate_scene,
    sample_lighting,
    unity_gen_config,
)

__all__ = [
    "AnimalInstance",
    "AnimalModel",
    "AssetLibrary",
    "BatchVariation",
    "CameraSpec",
    "FixedRefs",
    "GenConfig",
    "LightingConfig",
    "PropPlacement",
    "PropShape",
    "RenderResult",
    "SceneSpec",
    "TerrainSpec",
    "airsim_gen_config",
    "builtin_library",
    "extract_bboxes",
    "generate_batch",
    "generate_scene",
    "render",
    "render_instances",
    "sample_lighting",
    "unity_gen_config",
    "write_batch",
]
