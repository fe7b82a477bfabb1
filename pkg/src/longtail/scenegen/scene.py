"""Scene specification types and seeded scene generation.

A SceneSpec is a complete, serializable description of one image: camera,
lighting, terrain look, prop placements, and posed animal instances.
Together with an AssetLibrary it determines the rendered pixels exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import RenderError, ValidationError
from ..rng import derive_rng
from . import mesh as gm
from .assets import AssetLibrary

DAY_ELEVATION_RANGE = (20.0, 90.0)
NIGHT_FLASH_RANGE = (2.2, 4.2)
NIGHT_SATURATION_RANGE = (0.05, 0.2)


@dataclass(frozen=True)
class LightingConfig:
    mode: str  # "day" | "night"
    sun_azimuth: float = 135.0
    sun_elevation: float = 55.0
    flash_intensity: float = 0.0
    saturation_factor: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("day", "night"):
            raise ValidationError(f"lighting mode must be day or night, got {self.mode!r}")
        if not 0 <= self.sun_azimuth < 360:
            raise ValidationError(f"sun azimuth out of [0, 360): {self.sun_azimuth}")
        if not 20 <= self.sun_elevation <= 90:
            raise ValidationError(f"sun elevation out of [20, 90]: {self.sun_elevation}")
        if self.mode == "day":
            if self.flash_intensity != 0 or self.saturation_factor != 1.0:
                raise ValidationError("day lighting must have no flash and full saturation")
        else:
            if self.flash_intensity <= 0:
                raise ValidationError("night lighting requires positive flash intensity")
            if not 0 <= self.saturation_factor <= 1:
                raise ValidationError("saturation factor must lie in [0, 1]")


def sample_lighting(
    mode: str,
    rng: np.random.Generator,
    day_elevation: tuple[float, float] = DAY_ELEVATION_RANGE,
    flash_range: tuple[float, float] = NIGHT_FLASH_RANGE,
    saturation_range: tuple[float, float] = NIGHT_SATURATION_RANGE,
) -> LightingConfig:
    """Random lighting draw: uniform sun by day, flash plus low saturation by night."""
    if mode == "day":
        return LightingConfig(
            mode="day",
            sun_azimuth=float(rng.uniform(0.0, 360.0)),
            sun_elevation=float(rng.uniform(*day_elevation)),
            flash_intensity=0.0,
            saturation_factor=1.0,
        )
    if mode == "night":
        return LightingConfig(
            mode="night",
            sun_azimuth=0.0,
            sun_elevation=20.0,
            flash_intensity=float(rng.uniform(*flash_range)),
            saturation_factor=float(rng.uniform(*saturation_range)),
        )
    raise ValidationError(f"unknown lighting mode {mode!r}")


@dataclass(frozen=True)
class CameraSpec:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    fov_y_deg: float
    width: int
    height: int


@dataclass(frozen=True)
class TerrainSpec:
    extent: float  # half-size of the square ground plane, meters
    ground_color: tuple[float, float, float]
    backdrop_color: tuple[float, float, float]
    sky_color: tuple[float, float, float]
    palette: dict[str, tuple[float, float, float]]
    detail_seed: int


@dataclass(frozen=True)
class PropPlacement:
    shape_id: str
    position: tuple[float, float]
    scale: float
    yaw: float


@dataclass(frozen=True)
class AnimalInstance:
    model_id: str
    pose_id: str
    pose_phase: float
    position: tuple[float, float]
    yaw: float
    scale: float
    eye_points: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValidationError(f"animal scale must be positive, got {self.scale}")
        if not 0 <= self.pose_phase < 1:
            raise ValidationError(f"pose phase must lie in [0, 1), got {self.pose_phase}")


@dataclass(frozen=True)
class SceneSpec:
    master_seed: int
    camera: CameraSpec
    lighting: LightingConfig
    terrain: TerrainSpec
    props: tuple[PropPlacement, ...]
    animals: tuple[AnimalInstance, ...]
    underfilled: bool = False

    def validate(self, library: AssetLibrary) -> None:
        e = self.terrain.extent
        for prop in self.props:
            library.get_prop(prop.shape_id)
        for inst in self.animals:
            model = library.get_animal(inst.model_id)
            model.pose_at(inst.pose_id, inst.pose_phase)
            if abs(inst.position[0]) > e or abs(inst.position[1]) > e:
                raise RenderError(
                    f"animal at {inst.position} outside terrain extent {e}"
                )


@dataclass
class GenConfig:
    """Knobs for seeded scene sampling; presets mimic the two sim environments."""

    terrain_extent: float = 16.0
    image_size: tuple[int, int] = (256, 256)
    densities: dict[str, tuple[int, int]] | None = None  # override library ranges
    density_scale: float = 1.0
    animal_count: tuple[int, int] = (1, 1)
    animal_distance: tuple[float, float] = (3.0, 13.0)
    animal_scale: tuple[float, float] = (0.9, 1.1)
    animal_families: list[str] | None = None
    camera_height: tuple[float, float] = (1.1, 2.1)
    fov_y: tuple[float, float] = (46.0, 60.0)
    overlap_tolerance: float = 0.10
    max_attempts: int = 40
    anchor_count: int = 24
    camera_keepout: float = 2.5
    base_ground: tuple[float, float, float] = (0.46, 0.40, 0.30)
    base_backdrop: tuple[float, float, float] = (0.36, 0.38, 0.33)
    base_sky: tuple[float, float, float] = (0.60, 0.72, 0.88)
    palette_spread: float = 0.30
    day_elevation: tuple[float, float] = DAY_ELEVATION_RANGE
    night_flash: tuple[float, float] = NIGHT_FLASH_RANGE
    night_saturation: tuple[float, float] = NIGHT_SATURATION_RANGE


def unity_gen_config() -> GenConfig:
    """Large fixed forest environment, greener palette, deeper prop cover."""
    return GenConfig(
        terrain_extent=17.0,
        density_scale=1.15,
        base_ground=(0.38, 0.40, 0.26),
        base_backdrop=(0.30, 0.38, 0.28),
        base_sky=(0.55, 0.70, 0.82),
        palette_spread=0.25,
    )


def airsim_gen_config() -> GenConfig:
    """Small modular biome: wider density swings from open plain to dense brush."""
    return GenConfig(
        terrain_extent=11.0,
        density_scale=1.0,
        animal_distance=(2.5, 9.5),
        palette_spread=0.45,
        camera_height=(0.9, 2.3),
        base_ground=(0.50, 0.42, 0.30),
        base_backdrop=(0.42, 0.40, 0.32),
    )


def sample_terrain(cfg: GenConfig, rng: np.random.Generator,
                   prop_families: list[str]) -> TerrainSpec:
    def vary(base, spread):
        c = np.asarray(base) * (1.0 + spread * (rng.random(3) * 2 - 1))
        return tuple(float(v) for v in np.clip(c, 0.02, 1.0))

    palette = {
        fam: vary((1.0, 1.0, 1.0), cfg.palette_spread * 0.6) for fam in sorted(prop_families)
    }
    return TerrainSpec(
        extent=cfg.terrain_extent,
        ground_color=vary(cfg.base_ground, cfg.palette_spread),
        backdrop_color=vary(cfg.base_backdrop, cfg.palette_spread),
        sky_color=vary(cfg.base_sky, cfg.palette_spread * 0.5),
        palette=palette,
        detail_seed=int(rng.integers(2**31)),
    )


def sample_camera(cfg: GenConfig, rng: np.random.Generator) -> CameraSpec:
    e = cfg.terrain_extent
    jx = float(rng.uniform(-0.12, 0.12)) * e
    height = float(rng.uniform(*cfg.camera_height))
    return CameraSpec(
        position=(jx, -e * 0.85, height),
        look_at=(jx * 0.5, e * 0.3, 0.65),
        fov_y_deg=float(rng.uniform(*cfg.fov_y)),
        width=cfg.image_size[0],
        height=cfg.image_size[1],
    )


def make_animal_instance(
    library: AssetLibrary,
    model_id: str,
    pose_id: str,
    pose_phase: float,
    position: tuple[float, float],
    yaw: float,
    scale: float,
) -> AnimalInstance:
    """Instance with world-space eye points resolved from the posed model."""
    model = library.get_animal(model_id)
    pose = model.pose_at(pose_id, pose_phase)
    transforms = model._chain_transforms(pose)
    rot, trans = transforms.get("head", (np.eye(3), np.zeros(3)))
    eyes_model = model.eye_points @ rot.T + trans
    world = (eyes_model * scale) @ gm.rot_z(yaw).T
    world[:, 0] += position[0]
    world[:, 1] += position[1]
    return AnimalInstance(
        model_id=model_id,
        pose_id=pose_id,
        pose_phase=pose_phase,
        position=position,
        yaw=yaw,
        scale=scale,
        eye_points=tuple(tuple(float(v) for v in p) for p in world),
    )


def _sample_props(cfg: GenConfig, library: AssetLibrary, rng: np.random.Generator,
                  cam_xy: np.ndarray) -> tuple[tuple[PropPlacement, ...], bool]:
    e = cfg.terrain_extent
    placed: list[tuple[float, float, float]] = []  # x, y, footprint radius
    out: list[PropPlacement] = []
    underfilled = False
    for rule in library.placement:
        lo, hi = (cfg.densities or {}).get(rule.family, rule.count_range)
        count = int(rng.integers(lo, hi + 1) * cfg.density_scale)
        shape_ids = library.prop_family_shapes(rule.family)
        for _ in range(count):
            shape_id = shape_ids[int(rng.integers(len(shape_ids)))]
            shape = library.get_prop(shape_id)
            ok = False
            for _attempt in range(cfg.max_attempts):
                pos = rng.uniform(-e * 0.97, e * 0.97, 2)
                scale = float(rng.uniform(0.8, 1.25))
                yaw = float(rng.uniform(0.0, 360.0))
                radius = shape.footprint_radius * scale
                if np.hypot(*(pos - cam_xy)) < cfg.camera_keepout + radius:
                    continue
                clear = True
                for px, py, pr in placed:
                    limit = (1.0 - cfg.overlap_tolerance) * (pr + radius)
                    if np.hypot(pos[0] - px, pos[1] - py) < limit:
                        clear = False
                        break
                if clear:
                    ok = True
                    break
            if not ok:
                underfilled = True  # keep the scene, just with fewer props
                continue
            placed.append((float(pos[0]), float(pos[1]), radius))
            out.append(
                PropPlacement(
                    shape_id=shape_id,
                    position=(float(pos[0]), float(pos[1])),
                    scale=scale,
                    yaw=yaw,
                )
            )
    return tuple(out), underfilled


def _sample_animals(cfg: GenConfig, library: AssetLibrary, rng: np.random.Generator,
                    camera: CameraSpec) -> tuple[AnimalInstance, ...]:
    lo, hi = cfg.animal_count
    count = int(rng.integers(lo, hi + 1))
    if count == 0:
        return ()
    families = cfg.animal_families or library.animal_families()
    cam_xy = np.asarray(camera.position[:2])
    look_xy = np.asarray(camera.look_at[:2])
    facing = np.arctan2(look_xy[0] - cam_xy[0], look_xy[1] - cam_xy[1])
    half_wedge = np.radians(camera.fov_y_deg) * 0.5 * 0.75

    anchors = []
    for _ in range(cfg.anchor_count):
        dist = float(rng.uniform(*cfg.animal_distance))
        ang = facing + float(rng.uniform(-half_wedge, half_wedge))
        anchors.append(cam_xy + dist * np.array([np.sin(ang), np.cos(ang)]))
    chosen = rng.choice(cfg.anchor_count, size=min(count, cfg.anchor_count), replace=False)

    e = cfg.terrain_extent
    out = []
    for a in chosen:
        pos = anchors[int(a)] + rng.uniform(-0.6, 0.6, 2)
        pos = np.clip(pos, -e * 0.95, e * 0.95)
        family = families[int(rng.integers(len(families)))]
        models = library.family_models(family)
        model_id = models[int(rng.integers(len(models)))]
        model = library.get_animal(model_id)
        clips = model.clip_ids()
        out.append(
            make_animal_instance(
                library,
                model_id=model_id,
                pose_id=clips[int(rng.integers(len(clips)))],
                pose_phase=float(rng.uniform(0.0, 1.0)),
                position=(float(pos[0]), float(pos[1])),
                yaw=float(rng.uniform(0.0, 360.0)),
                scale=float(rng.uniform(*cfg.animal_scale)),
            )
        )
    return tuple(out)


def generate_scene(
    gen_config: GenConfig,
    library: AssetLibrary,
    rng: np.random.Generator,
    mode: str = "day",
    lighting: LightingConfig | None = None,
    animals: tuple[AnimalInstance, ...] | None = None,
    terrain: TerrainSpec | None = None,
    camera: CameraSpec | None = None,
) -> SceneSpec:
    """Sample a fully seeded scene; equal generator state gives equal specs.

    Draw order is fixed (terrain, camera, lighting, props, animals) so a
    caller may pin any prefix of that sequence by passing it in explicitly.
    """
    master_seed = int(rng.integers(2**63))
    if terrain is None:
        prop_families = sorted({s.family for s in library.props.values()})
        terrain = sample_terrain(gen_config, rng, prop_families)
    if camera is None:
        camera = sample_camera(gen_config, rng)
    if lighting is None:
        lighting = sample_lighting(
            mode, rng,
            day_elevation=gen_config.day_elevation,
            flash_range=gen_config.night_flash,
            saturation_range=gen_config.night_saturation,
        )
    cam_xy = np.asarray(camera.position[:2])
    props, underfilled = _sample_props(gen_config, library, rng, cam_xy)
    if animals is None:
        animals = _sample_animals(gen_config, library, rng, camera)
    spec = SceneSpec(
        master_seed=master_seed,
        camera=camera,
        lighting=lighting,
        terrain=terrain,
        props=props,
        animals=tuple(animals),
        underfilled=underfilled,
    )
    spec.validate(library)
    return spec
