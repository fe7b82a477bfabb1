"""COCO-style annotation handling and cis/trans dataset splitting.

The annotation JSON layout is the camera-trap flavor of COCO:

    {"images": [{"id", "file_name", "width", "height", "location",
                 "date_captured", "day_night"?}],
     "annotations": [{"id", "image_id", "category_id", "bbox": [x, y, w, h]}],
     "categories": [{"id", "name"}]}

Everything in this module is a pure function over immutable records; no
image pixels are touched here.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    AnnotationParseError,
    IntegrityError,
    PoolError,
    SplitError,
    ValidationError,
)
from .rng import derive_rng, is_night_index, night_quota

SOURCES = ("real", "trapcam_unity", "trapcam_airsim", "sim_on_empty", "real_on_empty")
DAY_NIGHT = ("day", "night")

SPLIT_NAMES = ("train", "cis_val", "cis_test", "trans_val", "trans_test")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel units, (x, y) = top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def validate(self, width: int, height: int, context: str = "") -> None:
        if self.w < 1 or self.h < 1:
            raise ValidationError(f"box smaller than one pixel {self} {context}")
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise ValidationError(f"box {self} outside image bounds {width}x{height} {context}")

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ImageRecord:
    """One annotated image and its provenance."""

    image_id: str
    location_id: str
    date: dt.date
    class_label: str
    boxes: tuple[BBox, ...]
    day_night: str | None
    source: str
    width: int
    height: int
    file_path: str
    dup_index: int = 0

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValidationError(f"unknown source {self.source!r} for image {self.image_id}")
        if self.day_night is not None and self.day_night not in DAY_NIGHT:
            raise ValidationError(f"bad day_night {self.day_night!r} for image {self.image_id}")
        for box in self.boxes:
            box.validate(self.width, self.height, context=f"(image {self.image_id})")

    @property
    def day_of_month_odd(self) -> bool:
        return self.date.day % 2 == 1


@dataclass(frozen=True)
class DatasetSplit:
    """Five-way cis/trans partition of image ids."""

    train: frozenset[str]
    cis_val: frozenset[str]
    cis_test: frozenset[str]
    trans_val: frozenset[str]
    trans_test: frozenset[str]
    trans_locations: frozenset[str]
    excluded_classes: frozenset[str]
    seed: int = 0

    def sets(self) -> dict[str, frozenset[str]]:
        return {name: getattr(self, name) for name in SPLIT_NAMES}

    def all_ids(self) -> frozenset[str]:
        out: set[str] = set()
        for ids in self.sets().values():
            out |= ids
        return frozenset(out)


@dataclass
class ClassStats:
    """Per-split class counts and night fractions.

    ``night_fractions[split][cls]`` is present only when at least one image
    of the class in that split carries a day/night flag.
    """

    counts: dict[str, dict[str, int]]
    night_fractions: dict[str, dict[str, float]]


# ---------------------------------------------------------------------------
# Parse / emit
# ---------------------------------------------------------------------------


def _parse_date(value: str, image_id: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value.split("T")[0].split(" ")[0])
    except ValueError as exc:
        raise ValidationError(f"bad date_captured {value!r} for image {image_id}") from exc


def parse_annotations(data: bytes) -> list[ImageRecord]:
    """Parse an annotation file into records.

    Raises:
        AnnotationParseError: malformed JSON (carries the byte offset).
        IntegrityError: duplicate image ids or dangling references.
        ValidationError: a box falls outside its image.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise AnnotationParseError("annotation file is not UTF-8", exc.start) from exc
    except json.JSONDecodeError as exc:
        raise AnnotationParseError(f"malformed JSON: {exc.msg}", exc.pos) from exc
    if not isinstance(doc, dict):
        raise AnnotationParseError("top-level JSON value must be an object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise AnnotationParseError(f"missing or non-list `{key}` array")

    categories: dict[int, str] = {}
    for cat in doc["categories"]:
        categories[int(cat["id"])] = str(cat["name"])

    boxes_by_image: dict[str, list[BBox]] = {}
    class_by_image: dict[str, str] = {}
    image_ids = {str(im["id"]) for im in doc["images"]}
    if len(image_ids) != len(doc["images"]):
        raise IntegrityError("duplicate image id in `images`")

    for ann in doc["annotations"]:
        image_id = str(ann["image_id"])
        if image_id not in image_ids:
            raise IntegrityError(f"annotation {ann.get('id')} references unknown image {image_id}")
        cat_id = int(ann["category_id"])
        if cat_id not in categories:
            raise IntegrityError(f"annotation {ann.get('id')} references unknown category {cat_id}")
        x, y, w, h = (float(v) for v in ann["bbox"])
        boxes_by_image.setdefault(image_id, []).append(BBox(x, y, w, h))
        label = categories[cat_id]
        previous = class_by_image.setdefault(image_id, label)
        if previous != label:
            raise IntegrityError(
                f"image {image_id} annotated with multiple classes ({previous}, {label})"
            )

    records = []
    for im in doc["images"]:
        image_id = str(im["id"])
        records.append(
            ImageRecord(
                image_id=image_id,
                location_id=str(im["location"]),
                date=_parse_date(str(im["date_captured"]), image_id),
                class_label=class_by_image.get(image_id, "empty"),
                boxes=tuple(boxes_by_image.get(image_id, ())),
                day_night=im.get("day_night"),
                source=im.get("source", "real"),
                width=int(im["width"]),
                height=int(im["height"]),
                file_path=str(im["file_name"]),
                dup_index=int(im.get("dup_index", 0)),
            )
        )
    return records


def emit_annotations(records: Sequence[ImageRecord]) -> bytes:
    """Serialize records to canonical annotation JSON bytes.

    Canonical means: object keys sorted, category ids assigned by sorted
    class name, annotation ids sequential in image order. Equal record lists
    produce identical bytes.
    """
    seen: set[str] = set()
    for rec in records:
        if rec.image_id in seen:
            raise IntegrityError(f"duplicate image id {rec.image_id}")
        seen.add(rec.image_id)

    class_names = sorted({r.class_label for r in records if r.boxes})
    cat_ids = {name: i + 1 for i, name in enumerate(class_names)}

    images = []
    annotations = []
    ann_id = 1
    for rec in records:
        entry: dict = {
            "id": rec.image_id,
            "file_name": rec.file_path,
            "width": rec.width,
            "height": rec.height,
            "location": rec.location_id,
            "date_captured": rec.date.isoformat(),
            "source": rec.source,
        }
        if rec.day_night is not None:
            entry["day_night"] = rec.day_night
        if rec.dup_index:
            entry["dup_index"] = rec.dup_index
        images.append(entry)
        for box in rec.boxes:
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": rec.image_id,
                    "category_id": cat_ids[rec.class_label],
                    "bbox": box.as_list(),
                }
            )
            ann_id += 1

    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": cat_ids[name], "name": name} for name in class_names],
    }
    return json.dumps(doc, sort_keys=True, indent=1).encode("utf-8")


def load_annotations(path: str | Path) -> list[ImageRecord]:
    return parse_annotations(Path(path).read_bytes())


def save_annotations(path: str | Path, records: Sequence[ImageRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(emit_annotations(records))


def record_index(records: Iterable[ImageRecord]) -> dict[str, ImageRecord]:
    out: dict[str, ImageRecord] = {}
    for rec in records:
        if rec.image_id in out:
            raise IntegrityError(f"duplicate image id {rec.image_id}")
        out[rec.image_id] = rec
    return out


# ---------------------------------------------------------------------------
# Split construction
# ---------------------------------------------------------------------------


def build_split(
    records: Sequence[ImageRecord],
    trans_locations: Iterable[str],
    excluded_classes: Iterable[str] = (),
    cis_val_fraction: float = 0.05,
    seed: int = 0,
    trans_val_locations: Iterable[str] | None = None,
    cis_locations: Iterable[str] | None = None,
) -> DatasetSplit:
    """Partition a corpus into train / cis_val / cis_test / trans_val / trans_test.

    Images at trans locations go to trans_test, except those at the
    designated validation locations (default: the lexicographically first
    trans location). Cis images split by day-of-month parity: odd days to
    cis_test, even days randomly (seeded) into train and cis_val. The
    default ``cis_val_fraction`` of 0.05 keeps 95% of even-day data for
    training.

    Args:
        cis_locations: optional explicit cis location set; overlap with
            ``trans_locations`` is an error. Defaults to the complement.
    """
    if not 0 < cis_val_fraction < 1:
        raise SplitError(f"cis_val_fraction must be in (0, 1), got {cis_val_fraction}")
    trans_locations = frozenset(trans_locations)
    excluded_classes = frozenset(excluded_classes)
    present = {rec.location_id for rec in records}
    missing = trans_locations - present
    if missing:
        raise SplitError(f"trans locations not present in corpus: {sorted(missing)}")
    if cis_locations is not None:
        overlap = frozenset(cis_locations) & trans_locations
        if overlap:
            raise SplitError(f"locations listed as both cis and trans: {sorted(overlap)}")

    if trans_val_locations is None:
        trans_val_locations = frozenset(sorted(trans_locations)[:1]) if trans_locations else frozenset()
    else:
        trans_val_locations = frozenset(trans_val_locations)
        if not trans_val_locations <= trans_locations:
            raise SplitError("trans_val_locations must be a subset of trans_locations")

    kept = [rec for rec in records if rec.class_label not in excluded_classes]
    trans_val: set[str] = set()
    trans_test: set[str] = set()
    even_cis: list[str] = []
    cis_test: set[str] = set()
    for rec in kept:
        if rec.location_id in trans_locations:
            if rec.location_id in trans_val_locations:
                trans_val.add(rec.image_id)
            else:
                trans_test.add(rec.image_id)
        elif rec.day_of_month_odd:
            cis_test.add(rec.image_id)
        else:
            even_cis.append(rec.image_id)

    rng = derive_rng(seed, "cis-val-split")
    n_val = int(round(len(even_cis) * cis_val_fraction))
    order = rng.permutation(len(even_cis))
    val_ids = {even_cis[i] for i in order[:n_val]}
    train = {i for i in even_cis if i not in val_ids}
    if not train:
        raise SplitError("split produced an empty training set")

    return DatasetSplit(
        train=frozenset(train),
        cis_val=frozenset(val_ids),
        cis_test=frozenset(cis_test),
        trans_val=frozenset(trans_val),
        trans_test=frozenset(trans_test),
        trans_locations=trans_locations,
        excluded_classes=excluded_classes,
        seed=seed,
    )


def save_split(path: str | Path, split: DatasetSplit) -> None:
    doc = {name: sorted(ids) for name, ids in split.sets().items()}
    doc["trans_locations"] = sorted(split.trans_locations)
    doc["excluded_classes"] = sorted(split.excluded_classes)
    doc["seed"] = split.seed
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1), encoding="utf-8")


def load_split(path: str | Path) -> DatasetSplit:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return DatasetSplit(
        train=frozenset(doc["train"]),
        cis_val=frozenset(doc["cis_val"]),
        cis_test=frozenset(doc["cis_test"]),
        trans_val=frozenset(doc["trans_val"]),
        trans_test=frozenset(doc["trans_test"]),
        trans_locations=frozenset(doc["trans_locations"]),
        excluded_classes=frozenset(doc["excluded_classes"]),
        seed=int(doc.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# Statistics and training-set composition
# ---------------------------------------------------------------------------


def class_stats(split: DatasetSplit, records: Sequence[ImageRecord]) -> ClassStats:
    """Exact per-class counts and night fractions for every split."""
    index = record_index(records)
    counts: dict[str, dict[str, int]] = {}
    night_fractions: dict[str, dict[str, float]] = {}
    for name, ids in split.sets().items():
        per_class: dict[str, int] = {}
        night: dict[str, list[int]] = {}
        for image_id in ids:
            rec = index.get(image_id)
            if rec is None:
                raise IntegrityError(f"split references unknown image {image_id}")
            per_class[rec.class_label] = per_class.get(rec.class_label, 0) + 1
            if rec.day_night is not None:
                known, n_night = night.get(rec.class_label, [0, 0])
                night[rec.class_label] = [known + 1, n_night + (rec.day_night == "night")]
        counts[name] = per_class
        night_fractions[name] = {
            cls: n_night / known for cls, (known, n_night) in night.items() if known
        }
    return ClassStats(counts=counts, night_fractions=night_fractions)


def draw_sim_records(
    sim_pool: Sequence[ImageRecord],
    n_sim: int,
    night_fraction: float = 0.5,
    seed: int = 0,
) -> list[ImageRecord]:
    """``n_sim`` seeded draws without replacement from a sim pool.

    Exactly ``round(n_sim * night_fraction)`` drawn records are night images
    (half-up rounding). The selection for a smaller ``n_sim`` under the same
    seed is a prefix of the selection for a larger one, so quantity sweeps
    nest instead of resampling.
    """
    if n_sim < 0:
        raise ValidationError(f"n_sim must be >= 0, got {n_sim}")
    if n_sim == 0:
        return []

    night_pool = [i for i, rec in enumerate(sim_pool) if rec.day_night == "night"]
    day_pool = [i for i, rec in enumerate(sim_pool) if rec.day_night != "night"]
    want_night = night_quota(n_sim, night_fraction)
    want_day = n_sim - want_night
    if want_night > len(night_pool):
        raise PoolError(
            f"sim pool has {len(night_pool)} night images, need {want_night} "
            f"(short {want_night - len(night_pool)} night)"
        )
    if want_day > len(day_pool):
        raise PoolError(
            f"sim pool has {len(day_pool)} day images, need {want_day} "
            f"(short {want_day - len(day_pool)} day)"
        )

    rng = derive_rng(seed, "compose-night")
    night_order = rng.permutation(len(night_pool))
    rng = derive_rng(seed, "compose-day")
    day_order = rng.permutation(len(day_pool))

    picked: list[ImageRecord] = []
    n_night = n_day = 0
    for i in range(n_sim):
        if is_night_index(i, night_fraction):
            picked.append(sim_pool[night_pool[night_order[n_night]]])
            n_night += 1
        else:
            picked.append(sim_pool[day_pool[day_order[n_day]]])
            n_day += 1
    return picked


def compose_training_set(
    split: DatasetSplit,
    records: Sequence[ImageRecord],
    sim_pool: Sequence[ImageRecord],
    n_sim: int,
    night_fraction: float = 0.5,
    seed: int = 0,
) -> list[ImageRecord]:
    """Real training records plus ``n_sim`` seeded draws from a sim pool.

    The real portion is never modified; see :func:`draw_sim_records` for the
    draw rules (exact night quota, nested selections across ``n_sim``).
    """
    index = record_index(records)
    train = [index[i] for i in sorted(split.train)]
    return train + draw_sim_records(sim_pool, n_sim, night_fraction, seed)


def oversample(
    train: Sequence[ImageRecord],
    class_label: str,
    target_count: int,
    seed: int = 0,
) -> list[ImageRecord]:
    """Duplicate rare-class records up to ``target_count``.

    Duplicates keep the original file path and get a ``#dup<k>`` id suffix;
    originals are cycled round-robin, with the remainder drawn seeded at
    random. No new pixels enter the training set, only a sampling prior.
    """
    originals = [rec for rec in train if rec.class_label == class_label]
    if not originals:
        raise ValidationError(f"class {class_label!r} absent from training set")
    current = len(originals)
    if target_count < current:
        raise ValidationError(
            f"target_count {target_count} below current count {current} for {class_label!r}"
        )
    extra = target_count - current
    full_rounds, remainder = divmod(extra, current)

    chosen: list[ImageRecord] = []
    for _ in range(full_rounds):
        chosen.extend(originals)
    if remainder:
        rng = derive_rng(seed, "oversample", class_label)
        for i in rng.choice(current, size=remainder, replace=False):
            chosen.append(originals[int(i)])

    dup_counter: dict[str, int] = {}
    appended = []
    for rec in chosen:
        k = dup_counter.get(rec.image_id, 0) + 1
        dup_counter[rec.image_id] = k
        appended.append(
            replace(rec, image_id=f"{rec.image_id}#dup{k}", dup_index=k)
        )
    return list(train) + appended
