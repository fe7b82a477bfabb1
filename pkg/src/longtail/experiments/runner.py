"""Sweep runner: compose training sets, train, evaluate, aggregate.

A sweep is a grid of (sweep value, seed) cells. Every cell trains one
model, evaluates it on the cis and trans test sets, and persists its full
provenance (composed training manifest, checkpoint, history, eval reports)
under the run directory, so every reported number can be recomputed from
stored artifacts. Cells are independent and internally deterministic.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..annotations import (
    DatasetSplit,
    ImageRecord,
    compose_training_set,
    draw_sim_records,
    load_annotations,
    load_split,
    oversample,
    record_index,
    save_annotations,
)
from ..errors import ConfigError, PoolError
from ..evaluation import EvalReport, evaluate
from ..trainer import (
    AugmentationConfig,
    CropLoader,
    ModelConfig,
    TrainConfig,
    predict_records,
    save_checkpoint,
    train,
)
from .workspace import Workspace

KINDS = ("quantity", "variation", "method", "day_night", "zero_real", "common_class")

METHOD_BASELINE = "baseline"
METHOD_OVERSAMPLE = "oversample"
METHOD_COMBINED = "combined"
METHOD_POOLS = ("trapcam_unity", "trapcam_airsim", "sim_on_empty", "real_on_empty")


@dataclass
class ExperimentConfig:
    kind: str
    sweep: list
    n_seeds: int = 1
    base_seed: int = 0
    name: str | None = None
    benchmark: str = "benchmark"
    split_file: str = "benchmark/split.json"
    pools: dict[str, str] = field(default_factory=dict)  # pool key -> workspace-relative dir
    rare_class: str = "cervid"
    n_sim: int = 1000  # for kinds whose sweep is not a count
    night_fraction: float = 0.5
    input_resolution: int = 32
    cache_resolution: int = 48
    channels: tuple[int, ...] = (16, 32, 64, 64)
    batch_size: int = 64
    max_epochs: int = 10
    patience: int = 3
    learning_rate: float = 0.001
    rmsprop_decay: float = 0.9
    momentum: float = 0.9
    epsilon: float = 1e-8
    use_class_weights: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.sweep:
            raise ConfigError("sweep must be non-empty")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")

    @property
    def run_name(self) -> str:
        return self.name or self.kind

    def seeds(self) -> list[int]:
        return [self.base_seed + k for k in range(self.n_seeds)]


@dataclass
class SweepReport:
    kind: str
    name: str
    rare_class: str
    cells: list[dict]
    aggregates: dict[str, dict[str, dict[str, float]]]  # value -> metric -> mean/std
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "rare_class": self.rare_class,
            "cells": self.cells,
            "aggregates": self.aggregates,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepReport":
        return cls(
            kind=doc["kind"],
            name=doc["name"],
            rare_class=doc["rare_class"],
            cells=list(doc["cells"]),
            aggregates=doc["aggregates"],
            metadata=doc["metadata"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SweepReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def mean(self, value, metric: str) -> float:
        return self.aggregates[str(value)][metric]["mean"]


def _rebase(records: list[ImageRecord], prefix: Path, root: Path) -> list[ImageRecord]:
    rel = prefix.relative_to(root)
    return [dataclasses.replace(r, file_path=str(rel / r.file_path)) for r in records]


def load_corpus(workspace: Workspace, subdir: str) -> list[ImageRecord]:
    """Corpus records with file paths rebased to the workspace root."""
    directory = workspace.root / subdir
    records = load_annotations(directory / "annotations.json")
    return _rebase(records, directory, workspace.root)


def _pool_key_for(cfg: ExperimentConfig, value) -> str:
    if cfg.kind == "quantity":
        return "trapcam_unity"
    if cfg.kind == "variation":
        return f"variation:{value}"
    if cfg.kind == "day_night":
        # one mixed pool serves every ratio: draws are per-mode
        return "trapcam_unity"
    if cfg.kind == "zero_real":
        return "trapcam_unity"
    if cfg.kind == "common_class":
        return "common_proxy"
    return str(value)


def required_pools(cfg: ExperimentConfig) -> set[str]:
    keys: set[str] = set()
    for value in cfg.sweep:
        if cfg.kind == "method":
            if value in (METHOD_BASELINE, METHOD_OVERSAMPLE):
                continue
            if value == METHOD_COMBINED:
                keys.add("trapcam_unity")
                keys.add("real_on_empty")
                continue
            keys.add(str(value))
        else:
            keys.add(_pool_key_for(cfg, value))
    return keys


def _summary_metrics(
    rare_class: str,
    cis_report: EvalReport,
    trans_report: EvalReport,
) -> dict[str, float]:
    def others(report: EvalReport) -> float:
        errs = [e for c, e in report.per_class_error.items() if c != rare_class]
        return float(np.mean(errs)) if errs else float("nan")

    return {
        "rare_cis_error": cis_report.per_class_error.get(rare_class, float("nan")),
        "rare_trans_error": trans_report.per_class_error.get(rare_class, float("nan")),
        "other_cis_error": others(cis_report),
        "other_trans_error": others(trans_report),
        "overall_cis_error": cis_report.overall_error,
        "overall_trans_error": trans_report.overall_error,
        "rare_trans_column_mass": float(trans_report.column_mass(rare_class)),
        "rare_cis_column_mass": float(cis_report.column_mass(rare_class)),
    }


def compose_for_cell(
    cfg: ExperimentConfig,
    value,
    seed: int,
    split: DatasetSplit,
    records: list[ImageRecord],
    pools: dict[str, list[ImageRecord]],
) -> list[ImageRecord]:
    """The training set for one sweep cell."""
    kind = cfg.kind
    if kind == "quantity":
        return compose_training_set(split, records, pools["trapcam_unity"],
                                    int(value), cfg.night_fraction, seed)
    if kind == "variation":
        pool = pools[f"variation:{value}"]
        night = _feasible_night_fraction(pool, cfg.n_sim, cfg.night_fraction)
        return compose_training_set(split, records, pool, cfg.n_sim, night, seed)
    if kind == "day_night":
        return compose_training_set(split, records, pools["trapcam_unity"],
                                    cfg.n_sim, float(value), seed)
    if kind == "zero_real":
        index = record_index(records)
        train = [index[i] for i in sorted(split.train)]
        if value == "without_real":
            train = [r for r in train if r.class_label != cfg.rare_class]
        return train + draw_sim_records(pools["trapcam_unity"], cfg.n_sim,
                                        cfg.night_fraction, seed)
    if kind == "common_class":
        return compose_training_set(split, records, pools["common_proxy"],
                                    int(value), cfg.night_fraction, seed)
    if kind == "method":
        index = record_index(records)
        train = [index[i] for i in sorted(split.train)]
        if value == METHOD_BASELINE:
            return train
        if value == METHOD_OVERSAMPLE:
            rare_count = sum(1 for r in train if r.class_label == cfg.rare_class)
            return oversample(train, cfg.rare_class, rare_count + cfg.n_sim, seed)
        if value == METHOD_COMBINED:
            half = cfg.n_sim // 2
            return (
                train
                + draw_sim_records(pools["trapcam_unity"], half,
                                   cfg.night_fraction, seed)
                + draw_sim_records(pools["real_on_empty"], cfg.n_sim - half,
                                   cfg.night_fraction, seed)
            )
        return compose_training_set(split, records, pools[str(value)],
                                    cfg.n_sim, cfg.night_fraction, seed)
    raise ConfigError(f"unknown kind {kind!r}")


def _feasible_night_fraction(pool: list[ImageRecord], n: int, wanted: float) -> float:
    """Cap the night fraction at what the pool can supply (fixed-lighting
    variation pools are day-only by construction)."""
    from ..rng import night_quota

    night_avail = sum(1 for r in pool if r.day_night == "night")
    if night_quota(n, wanted) <= night_avail:
        return wanted
    return night_avail / n if n else 0.0


def run_cell(
    cfg: ExperimentConfig,
    value,
    seed: int,
    split: DatasetSplit,
    records: list[ImageRecord],
    pools: dict[str, list[ImageRecord]],
    classes: tuple[str, ...],
    workspace: Workspace,
    loader: CropLoader | None = None,
) -> dict:
    train_set = compose_for_cell(cfg, value, seed, split, records, pools)
    index = record_index(records)
    val_set = [index[i] for i in sorted(split.trans_val)]
    cis_test = [index[i] for i in sorted(split.cis_test)]
    trans_test = [index[i] for i in sorted(split.trans_test)]

    loader = loader or CropLoader(workspace.root, cache_resolution=cfg.cache_resolution)
    model_cfg = ModelConfig(classes=classes, input_resolution=cfg.input_resolution,
                            channels=tuple(cfg.channels))
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        rmsprop_decay=cfg.rmsprop_decay,
        momentum=cfg.momentum,
        epsilon=cfg.epsilon,
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        early_stop_patience=cfg.patience,
        seed=seed,
    )
    aug_cfg = AugmentationConfig(output_resolution=cfg.input_resolution)
    model, history = train(model_cfg, train_set, val_set, train_cfg, loader, aug_cfg)

    reports = {}
    for name, subset in (("cis", cis_test), ("trans", trans_test)):
        scores, _ = predict_records(model, subset, loader)
        pred = [classes[i] for i in scores.argmax(axis=1)]
        truths = [r.class_label for r in subset]
        reports[name] = evaluate(pred, truths, classes=classes, scores=scores)

    cell_dir = workspace.run_dir(cfg.run_name) / _slug(value) / f"s{seed}"
    cell_dir.mkdir(parents=True, exist_ok=True)
    save_annotations(cell_dir / "train_manifest.json", train_set)
    save_checkpoint(model, cell_dir / "checkpoint.ckpt",
                    meta={"value": str(value), "seed": seed, "kind": cfg.kind})
    history.save(cell_dir / "history.json")
    reports["cis"].save(cell_dir / "eval_cis.json")
    reports["trans"].save(cell_dir / "eval_trans.json")

    metrics = _summary_metrics(cfg.rare_class, reports["cis"], reports["trans"])
    cell = {
        "value": value,
        "seed": seed,
        "n_train": len(train_set),
        "n_sim": sum(1 for r in train_set if r.source != "real"),
        "epochs_run": history.epochs_run,
        "selected_epoch": history.selected_epoch,
        "dir": workspace.rel(cell_dir),
        **metrics,
    }
    (cell_dir / "summary.json").write_text(
        json.dumps(cell, sort_keys=True, indent=1, default=str), encoding="utf-8"
    )
    return cell


def _slug(value) -> str:
    return str(value).replace(".", "p").replace("/", "-")


def run_experiment(cfg: ExperimentConfig, workspace: Workspace) -> SweepReport:
    """Run the full grid (sweep x seeds) and aggregate across seeds."""
    records = load_corpus(workspace, cfg.benchmark)
    split = load_split(workspace.root / cfg.split_file)
    classes = tuple(sorted({r.class_label for r in records}))

    pools: dict[str, list[ImageRecord]] = {}
    for key in sorted(required_pools(cfg)):
        rel = cfg.pools.get(key)
        if rel is None:
            raise PoolError(f"experiment {cfg.kind!r} needs pool {key!r}, none configured")
        pool_dir = workspace.root / rel
        if not (pool_dir / "annotations.json").exists():
            raise PoolError(f"pool {key!r} missing at {pool_dir}")
        pools[key] = load_corpus(workspace, rel)

    loader = CropLoader(workspace.root, cache_resolution=cfg.cache_resolution)
    cells = []
    for value in cfg.sweep:
        for seed in cfg.seeds():
            cells.append(
                run_cell(cfg, value, seed, split, records, pools, classes,
                         workspace, loader)
            )

    metric_names = [
        "rare_cis_error", "rare_trans_error", "other_cis_error", "other_trans_error",
        "overall_cis_error", "overall_trans_error", "rare_trans_column_mass",
        "rare_cis_column_mass",
    ]
    aggregates: dict[str, dict[str, dict[str, float]]] = {}
    for value in cfg.sweep:
        rows = [c for c in cells if c["value"] == value]
        aggregates[str(value)] = {
            m: {
                "mean": float(np.mean([r[m] for r in rows])),
                "std": float(np.std([r[m] for r in rows])),
            }
            for m in metric_names
        }

    report = SweepReport(
        kind=cfg.kind,
        name=cfg.run_name,
        rare_class=cfg.rare_class,
        cells=cells,
        aggregates=aggregates,
        metadata={
            "sweep": [str(v) for v in cfg.sweep],
            "seeds": cfg.seeds(),
            "n_sim": cfg.n_sim,
            "night_fraction": cfg.night_fraction,
            "benchmark": cfg.benchmark,
            "split_file": cfg.split_file,
            "pools": dict(sorted(cfg.pools.items())),
            "trainer": {
                "input_resolution": cfg.input_resolution,
                "cache_resolution": cfg.cache_resolution,
                "batch_size": cfg.batch_size,
                "max_epochs": cfg.max_epochs,
                "patience": cfg.patience,
                "learning_rate": cfg.learning_rate,
                "rmsprop_decay": cfg.rmsprop_decay,
                "momentum": cfg.momentum,
                "epsilon": cfg.epsilon,
            },
            "classes": list(classes),
        },
    )
    report.save(workspace.run_dir(cfg.run_name) / "report.json")
    return report
