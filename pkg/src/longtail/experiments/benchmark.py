"""Surrogate benchmark generation.

Builds a fully synthetic camera-trap-style corpus: one fixed scene and
camera per location (images at a location share their background, which is
what makes cis-test data easy to memorize and trans locations hard), a
long-tailed class distribution with one rare class, per-class day/night
mixes, odd/even capture dates so the parity split applies, plus empty
background frames for the compositing methods.

The generated split is the standard cis/trans construction followed by a
deterministic train/cis-val repair step that pins exact per-class training
counts (the unstratified 5% validation draw would otherwise wobble the rare
count by a few images).
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..annotations import (
    DatasetSplit,
    ImageRecord,
    build_split,
    class_stats,
    save_annotations,
    save_split,
)
from ..errors import RenderError, ValidationError
from ..imaging import write_mask16, write_rgb
from ..rng import derive_rng, is_night_index
from ..scenegen import (
    AssetLibrary,
    BatchVariation,
    GenConfig,
    SceneSpec,
    builtin_library,
    generate_scene,
    render,
    sample_lighting,
    unity_gen_config,
    write_batch,
)
from ..scenegen.assets import FAMILIES
from ..scenegen.scene import make_animal_instance

DEFAULT_CLASSES = ("cervid", "canid", "felid", "ursid", "leporid", "suid", "bovid", "mustelid")
PROXY_FAMILIES = {"canid": "canid_proxy"}


@dataclass
class BenchmarkConfig:
    classes: tuple[str, ...] = DEFAULT_CLASSES
    rare_class: str = "cervid"
    rare_train_count: int = 44
    common_train_counts: tuple[int, ...] = (120, 105, 95, 85, 80, 70, 60)
    cis_test_per_class: int = 20
    trans_test_per_class: int = 40
    trans_val_per_class: int = 10
    n_locations: int = 20
    n_trans_locations: int = 10
    rare_cis_locations: int = 3
    night_fraction_rare: float = 0.49
    common_night_fractions: tuple[float, ...] = (0.35, 0.5, 0.3, 0.55, 0.4, 0.45, 0.25)
    test_night_fraction: float = 0.5
    empties_per_location: int = 3
    image_size: int = 256
    cis_val_fraction: float = 0.05
    n_model_variants: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rare_class not in self.classes:
            raise ValidationError(f"rare class {self.rare_class!r} not in class list")
        commons = [c for c in self.classes if c != self.rare_class]
        if len(self.common_train_counts) != len(commons):
            raise ValidationError(
                f"{len(commons)} common classes but {len(self.common_train_counts)} counts"
            )
        if len(self.common_night_fractions) != len(commons):
            raise ValidationError("one night fraction per common class required")
        if self.rare_train_count >= max(self.common_train_counts) / 2:
            raise ValidationError("rare count must be far below the largest common count")
        if self.n_trans_locations < 2 or self.n_trans_locations >= self.n_locations:
            raise ValidationError("need >= 2 trans locations and >= 1 cis location")
        unknown = set(self.classes) - set(FAMILIES)
        if unknown:
            raise ValidationError(f"classes without animal families: {sorted(unknown)}")

    def train_targets(self) -> dict[str, int]:
        commons = [c for c in self.classes if c != self.rare_class]
        targets = dict(zip(commons, self.common_train_counts))
        targets[self.rare_class] = self.rare_train_count
        return targets

    def night_fractions(self) -> dict[str, float]:
        commons = [c for c in self.classes if c != self.rare_class]
        fractions = dict(zip(commons, self.common_night_fractions))
        fractions[self.rare_class] = self.night_fraction_rare
        return fractions

    def cis_locations(self) -> list[str]:
        n_cis = self.n_locations - self.n_trans_locations
        return [f"c{k:02d}" for k in range(n_cis)]

    def trans_locations(self) -> list[str]:
        return [f"t{k:02d}" for k in range(self.n_trans_locations)]


def benchmark_gen_config(image_size: int) -> GenConfig:
    """Neutral-palette generator used for the 'real' corpus."""
    return GenConfig(image_size=(image_size, image_size))


def _location_scene(cfg: BenchmarkConfig, library: AssetLibrary, location: str) -> SceneSpec:
    """The fixed scene (terrain, props, camera) a location's camera watches."""
    rng = derive_rng(cfg.seed, "location", location)
    return generate_scene(
        benchmark_gen_config(cfg.image_size), library, rng,
        mode="day", animals=(),
    )


@dataclass
class _PlannedImage:
    image_id: str
    class_label: str | None  # None for empty backgrounds
    location: str
    role: str  # train_pool | cis_test | trans_val | trans_test | empty
    date: dt.date
    day_night: str


def _plan_images(cfg: BenchmarkConfig) -> list[_PlannedImage]:
    plan: list[_PlannedImage] = []
    cis = cfg.cis_locations()
    trans = cfg.trans_locations()
    trans_val_loc = sorted(trans)[0]
    trans_test_locs = [loc for loc in trans if loc != trans_val_loc]
    targets = cfg.train_targets()
    night = cfg.night_fractions()

    even_days = [2 + 2 * k for k in range(14)]
    odd_days = [1 + 2 * k for k in range(14)]

    for cls in cfg.classes:
        rng = derive_rng(cfg.seed, "plan", cls)
        # even-day cis pool feeding train and cis-val
        n_even = int(np.ceil(targets[cls] / (1.0 - cfg.cis_val_fraction))) + 1
        cls_cis = cis[: cfg.rare_cis_locations] if cls == cfg.rare_class else cis
        for k in range(n_even):
            loc = cls_cis[int(rng.integers(len(cls_cis)))]
            day = even_days[int(rng.integers(len(even_days)))]
            plan.append(
                _PlannedImage(
                    image_id=f"{cls}-{loc}-even{k:04d}",
                    class_label=cls,
                    location=loc,
                    role="train_pool",
                    date=dt.date(2021, 6, day),
                    day_night="night" if is_night_index(k, night[cls]) else "day",
                )
            )
        for k in range(cfg.cis_test_per_class):
            loc = cls_cis[int(rng.integers(len(cls_cis)))]
            day = odd_days[int(rng.integers(len(odd_days)))]
            plan.append(
                _PlannedImage(
                    image_id=f"{cls}-{loc}-odd{k:04d}",
                    class_label=cls,
                    location=loc,
                    role="cis_test",
                    date=dt.date(2021, 6, day),
                    day_night="night" if is_night_index(k, cfg.test_night_fraction) else "day",
                )
            )
        for k in range(cfg.trans_val_per_class):
            day = even_days[int(rng.integers(len(even_days)))]
            plan.append(
                _PlannedImage(
                    image_id=f"{cls}-{trans_val_loc}-tv{k:04d}",
                    class_label=cls,
                    location=trans_val_loc,
                    role="trans_val",
                    date=dt.date(2021, 6, day),
                    day_night="night" if is_night_index(k, cfg.test_night_fraction) else "day",
                )
            )
        for k in range(cfg.trans_test_per_class):
            loc = trans_test_locs[int(rng.integers(len(trans_test_locs)))]
            day = even_days[int(rng.integers(len(even_days)))] if k % 2 else \
                odd_days[int(rng.integers(len(odd_days)))]
            plan.append(
                _PlannedImage(
                    image_id=f"{cls}-{loc}-tt{k:04d}",
                    class_label=cls,
                    location=loc,
                    role="trans_test",
                    date=dt.date(2021, 6, day),
                    day_night="night" if is_night_index(k, cfg.test_night_fraction) else "day",
                )
            )

    for loc in cis + trans:
        for k in range(cfg.empties_per_location):
            plan.append(
                _PlannedImage(
                    image_id=f"empty-{loc}-{k:02d}",
                    class_label=None,
                    location=loc,
                    role="empty",
                    date=dt.date(2021, 6, 2),
                    day_night="night" if k % 2 else "day",
                )
            )
    return plan


def _render_planned(
    cfg: BenchmarkConfig,
    library: AssetLibrary,
    scene: SceneSpec,
    planned: _PlannedImage,
    gen: GenConfig,
) -> tuple:
    """Render one planned image at its location's fixed scene."""
    for attempt in range(8):
        rng = derive_rng(cfg.seed, "image", planned.image_id, attempt)
        lighting = sample_lighting(
            planned.day_night, rng,
            day_elevation=gen.day_elevation,
            flash_range=gen.night_flash,
            saturation_range=gen.night_saturation,
        )
        if planned.class_label is None:
            spec = dataclasses.replace(scene, lighting=lighting, animals=())
            return render(spec, library), None

        models = library.family_models(planned.class_label)
        model_id = models[int(rng.integers(len(models)))]
        model = library.get_animal(model_id)
        clips = model.clip_ids()

        camera = scene.camera
        cam_xy = np.asarray(camera.position[:2])
        look_xy = np.asarray(camera.look_at[:2])
        facing = np.arctan2(look_xy[0] - cam_xy[0], look_xy[1] - cam_xy[1])
        half_wedge = np.radians(camera.fov_y_deg) * 0.5 * 0.7
        dist = float(rng.uniform(*gen.animal_distance))
        ang = facing + float(rng.uniform(-half_wedge, half_wedge))
        pos = cam_xy + dist * np.array([np.sin(ang), np.cos(ang)])
        pos = np.clip(pos, -gen.terrain_extent * 0.95, gen.terrain_extent * 0.95)
        instance = make_animal_instance(
            library,
            model_id=model_id,
            pose_id=clips[int(rng.integers(len(clips)))],
            pose_phase=float(rng.uniform(0.0, 1.0)),
            position=(float(pos[0]), float(pos[1])),
            yaw=float(rng.uniform(0.0, 360.0)),
            scale=float(rng.uniform(*gen.animal_scale)),
        )
        spec = dataclasses.replace(scene, lighting=lighting, animals=(instance,))
        result = render(spec, library)
        if 1 in result.boxes:
            return result, result.boxes[1]
    raise RenderError(f"no visible animal for {planned.image_id} after retries")


def _repair_counts(
    split: DatasetSplit,
    records: list[ImageRecord],
    targets: dict[str, int],
    night_targets: dict[str, int],
    seed: int,
) -> DatasetSplit:
    """Move even-day cis images between train and cis-val until every class
    hits its exact training count, preferring moves that keep the per-class
    night counts on target. Only train/cis-val membership changes, so all
    split invariants are preserved."""
    index = {r.image_id: r for r in records}
    train = set(split.train)
    val = set(split.cis_val)
    rng = derive_rng(seed, "split-repair")

    def pick(ids: list[str], k: int) -> list[str]:
        ids = sorted(ids)
        if k >= len(ids):
            return ids
        chosen = rng.choice(len(ids), size=k, replace=False)
        return [ids[i] for i in sorted(int(c) for c in chosen)]

    for cls in sorted(targets):
        in_train = [i for i in train if index[i].class_label == cls]
        in_val = [i for i in val if index[i].class_label == cls]
        excess = len(in_train) - targets[cls]
        if excess > 0:
            night_now = sum(1 for i in in_train if index[i].day_night == "night")
            drop_night = min(max(night_now - night_targets[cls], 0), excess)
            night_ids = [i for i in in_train if index[i].day_night == "night"]
            day_ids = [i for i in in_train if index[i].day_night != "night"]
            moves = pick(night_ids, drop_night) + pick(day_ids, excess - drop_night)
            moves = moves[:excess]
            for image_id in moves:
                train.discard(image_id)
                val.add(image_id)
        elif excess < 0:
            need = -excess
            night_now = sum(1 for i in in_train if index[i].day_night == "night")
            want_night = min(max(night_targets[cls] - night_now, 0), need)
            night_ids = [i for i in in_val if index[i].day_night == "night"]
            day_ids = [i for i in in_val if index[i].day_night != "night"]
            moves = pick(night_ids, want_night) + pick(day_ids, need - want_night)
            if len(moves) < need:  # fall back to whatever mode is available
                rest = [i for i in sorted(in_val) if i not in set(moves)]
                moves += rest[: need - len(moves)]
            for image_id in moves[:need]:
                val.discard(image_id)
                train.add(image_id)
    return dataclasses.replace(split, train=frozenset(train), cis_val=frozenset(val))


def make_benchmark(cfg: BenchmarkConfig, out_dir: str | Path) -> tuple[list[ImageRecord], DatasetSplit]:
    """Generate corpus, backgrounds, asset library, manifest, and split."""
    out_dir = Path(out_dir)
    families = sorted(set(cfg.classes) | {PROXY_FAMILIES.get(c, c) for c in cfg.classes})
    library = builtin_library(families=families, n_variants=cfg.n_model_variants,
                              seed=cfg.seed)
    library.save(out_dir / "assets")
    library = AssetLibrary.load(out_dir / "assets")  # render from the persisted form

    gen = benchmark_gen_config(cfg.image_size)
    plan = _plan_images(cfg)
    scenes = {
        loc: _location_scene(cfg, library, loc)
        for loc in cfg.cis_locations() + cfg.trans_locations()
    }

    records: list[ImageRecord] = []
    empty_records: list[ImageRecord] = []
    for planned in plan:
        result, box = _render_planned(cfg, library, scenes[planned.location], planned, gen)
        if planned.class_label is None:
            rel = f"backgrounds/images/{planned.image_id}.png"
            write_rgb(out_dir / rel, result.rgb)
            empty_records.append(
                ImageRecord(
                    image_id=planned.image_id,
                    location_id=planned.location,
                    date=planned.date,
                    class_label="empty",
                    boxes=(),
                    day_night=planned.day_night,
                    source="real",
                    width=cfg.image_size,
                    height=cfg.image_size,
                    file_path=f"images/{planned.image_id}.png",
                )
            )
        else:
            rel = f"images/{planned.image_id}.png"
            write_rgb(out_dir / rel, result.rgb)
            write_mask16(out_dir / f"masks/{planned.image_id}.png", result.instance_mask)
            records.append(
                ImageRecord(
                    image_id=planned.image_id,
                    location_id=planned.location,
                    date=planned.date,
                    class_label=planned.class_label,
                    boxes=(box,),
                    day_night=planned.day_night,
                    source="real",
                    width=cfg.image_size,
                    height=cfg.image_size,
                    file_path=rel,
                )
            )

    save_annotations(out_dir / "annotations.json", records)
    save_annotations(out_dir / "backgrounds" / "annotations.json", empty_records)

    split = build_split(
        records,
        trans_locations=cfg.trans_locations(),
        excluded_classes=(),
        cis_val_fraction=cfg.cis_val_fraction,
        seed=cfg.seed,
    )
    targets = cfg.train_targets()
    fractions = cfg.night_fractions()
    night_targets = {
        cls: int(round(targets[cls] * fractions[cls])) for cls in targets
    }
    split = _repair_counts(split, records, targets, night_targets, cfg.seed)

    stats = class_stats(split, records)
    for cls, want in targets.items():
        got = stats.counts["train"].get(cls, 0)
        if got != want:
            raise ValidationError(f"train count for {cls}: wanted {want}, got {got}")

    save_split(out_dir / "split.json", split)
    meta = {
        "config": {
            "classes": list(cfg.classes),
            "rare_class": cfg.rare_class,
            "train_targets": targets,
            "night_fractions": fractions,
            "test_night_fraction": cfg.test_night_fraction,
            "n_locations": cfg.n_locations,
            "n_trans_locations": cfg.n_trans_locations,
            "image_size": cfg.image_size,
            "seed": cfg.seed,
        },
        "n_images": len(records),
        "n_backgrounds": len(empty_records),
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1),
                                       encoding="utf-8")
    return records, split


def generate_sim_pool(
    out_dir: str | Path,
    library: AssetLibrary,
    class_label: str,
    n: int,
    seed: int,
    night_fraction: float = 0.5,
    variation: BatchVariation | None = None,
    source: str = "trapcam_unity",
    gen_config: GenConfig | None = None,
    model_family: str | None = None,
    image_size: int = 256,
) -> list[ImageRecord]:
    """Render a pool of simulated images of one class to disk with manifest."""
    if gen_config is None:
        gen_config = unity_gen_config()
        gen_config.image_size = (image_size, image_size)
    records = write_batch(
        out_dir,
        n=n,
        variation=variation or BatchVariation(),
        night_fraction=night_fraction,
        class_label=class_label,
        library=library,
        seed=seed,
        gen_config=gen_config,
        source=source,
        model_family=model_family,
    )
    meta = {
        "class": class_label,
        "model_family": model_family or class_label,
        "n": n,
        "night_fraction": night_fraction,
        "variation": (variation or BatchVariation()).tag(),
        "source": source,
        "seed": seed,
    }
    (Path(out_dir) / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1),
                                             encoding="utf-8")
    return records
