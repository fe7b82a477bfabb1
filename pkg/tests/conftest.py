from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from longtail.annotations import BBox, ImageRecord
from longtail.scenegen import builtin_library


@pytest.fixture(scope="session")
def library():
    return builtin_library(
        families=["cervid", "canid", "felid", "ursid"], n_variants=2, prop_variants=2
    )


def tiny_benchmark_config(seed: int = 5):
    from longtail.experiments.benchmark import BenchmarkConfig

    return BenchmarkConfig(
        classes=("cervid", "canid", "felid", "ursid"),
        common_train_counts=(30, 26, 22),
        common_night_fractions=(0.35, 0.5, 0.3),
        rare_train_count=10,
        cis_test_per_class=6,
        trans_test_per_class=8,
        trans_val_per_class=4,
        n_locations=6,
        n_trans_locations=3,
        rare_cis_locations=2,
        empties_per_location=2,
        n_model_variants=2,
        seed=seed,
    )


@pytest.fixture(scope="session")
def tiny_workspace(tmp_path_factory):
    """A complete small workspace: benchmark, split, and one sim pool."""
    from longtail.experiments.benchmark import generate_sim_pool, make_benchmark
    from longtail.experiments.workspace import Workspace
    from longtail.scenegen import AssetLibrary

    root = tmp_path_factory.mktemp("tiny-ws")
    ws = Workspace(root)
    cfg = tiny_benchmark_config()
    records, split = make_benchmark(cfg, ws.benchmark_dir)
    lib = AssetLibrary.load(ws.assets_dir)
    generate_sim_pool(ws.pool_dir("unity"), lib, "cervid", n=60, seed=3,
                      night_fraction=0.5)
    return ws


def make_record(
    image_id: str,
    location: str = "c00",
    day: int = 2,
    cls: str = "cervid",
    night: bool = False,
    boxes: tuple = ((5.0, 7.0, 10.0, 4.0),),
    width: int = 256,
    height: int = 256,
    source: str = "real",
) -> ImageRecord:
    return ImageRecord(
        image_id=image_id,
        location_id=location,
        date=dt.date(2021, 6, day),
        class_label=cls,
        boxes=tuple(BBox(*b) for b in boxes),
        day_night="night" if night else "day",
        source=source,
        width=width,
        height=height,
        file_path=f"images/{image_id}.png",
    )


def surrogate_records(
    n: int, n_locations: int = 20, n_classes: int = 5, seed: int = 0
) -> tuple[list[ImageRecord], list[str]]:
    """Synthetic record corpus without pixels, for split/statistics tests."""
    rng = np.random.default_rng(seed)
    locations = [f"loc{k:02d}" for k in range(n_locations)]
    classes = [f"cls{k}" for k in range(n_classes)]
    records = []
    for i in range(n):
        records.append(
            make_record(
                f"img{i:05d}",
                location=locations[int(rng.integers(n_locations))],
                day=int(rng.integers(1, 29)),
                cls=classes[int(rng.integers(n_classes))],
                night=bool(rng.random() < 0.4),
            )
        )
    return records, locations


def check_split_invariants(split, records) -> list[str]:
    """Exhaustive scan oracle for every DatasetSplit invariant.

    Returns a list of violation descriptions (empty = all invariants hold).
    Implemented independently of build_split: plain loops over records.
    """
    violations = []
    index = {r.image_id: r for r in records}
    sets = split.sets()

    names = list(sets)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            overlap = sets[a] & sets[b]
            if overlap:
                violations.append(f"{a} and {b} share {len(overlap)} ids")

    for name in ("trans_val", "trans_test"):
        for image_id in sets[name]:
            if index[image_id].location_id not in split.trans_locations:
                violations.append(f"{name} image {image_id} at non-trans location")
    for name in ("train", "cis_val", "cis_test"):
        for image_id in sets[name]:
            if index[image_id].location_id in split.trans_locations:
                violations.append(f"{name} image {image_id} at trans location")

    for image_id in sets["cis_test"]:
        if index[image_id].date.day % 2 == 0:
            violations.append(f"cis_test image {image_id} on an even day")
    for name in ("train", "cis_val"):
        for image_id in sets[name]:
            if index[image_id].date.day % 2 == 1:
                violations.append(f"{name} image {image_id} on an odd day")

    for name, ids in sets.items():
        for image_id in ids:
            if index[image_id].class_label in split.excluded_classes:
                violations.append(f"excluded class in {name}: {image_id}")
    return violations
