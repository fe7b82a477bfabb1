"""Command-line interface.

Subcommands:
    benchmark make      build the surrogate benchmark corpus + split
    gen scenes          render a simulated image pool for one class
    gen overlay         build a Sim-on-Empty / Real-on-Empty pool
    split build         construct a cis/trans split from a manifest
    train               train one classifier from a split + sim manifest
    eval                evaluate a checkpoint on a split subset
    experiment run      run a full sweep (quantity, variation, ...)
    report emit         emit CSV/JSON/plot series for a finished sweep

All paths are relative to the workspace root (--workspace or the
LONGTAIL_WORKSPACE environment variable, default: current directory).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .annotations import (
    build_split,
    class_stats,
    load_annotations,
    load_split,
    record_index,
    save_split,
)
from .compositor import load_segmented_foregrounds, write_overlay_set
from .errors import ConfigError, LongtailError
from .evaluation import ProjectionConfig, evaluate, pr_curve_csv, project_embeddings, projection_csv
from .experiments.benchmark import BenchmarkConfig, generate_sim_pool, make_benchmark
from .experiments.configfile import ConfigView, load_config_file
from .experiments.report import emit_report
from .experiments.runner import ExperimentConfig, SweepReport, run_experiment
from .experiments.runner import load_corpus
from .experiments.workspace import Workspace
from .imaging import read_mask16, read_rgb
from .scenegen import AssetLibrary, BatchVariation, airsim_gen_config, unity_gen_config
from .trainer import (
    AugmentationConfig,
    CropLoader,
    ModelConfig,
    TrainConfig,
    load_checkpoint,
    predict_records,
    save_checkpoint,
    train,
)
from .trainer.loop import TrainHistory


def _view(path: str | None) -> ConfigView:
    return ConfigView(load_config_file(path) if path else {})


def _benchmark_config(view: ConfigView, seed_override: int | None) -> BenchmarkConfig:
    kwargs = {}
    v = view.values
    if "benchmark.classes" in v:
        kwargs["classes"] = tuple(view.get_list("benchmark.classes"))
    if "benchmark.common_train_counts" in v:
        kwargs["common_train_counts"] = tuple(
            int(x) for x in view.get_list("benchmark.common_train_counts")
        )
    if "benchmark.common_night_fractions" in v:
        kwargs["common_night_fractions"] = tuple(
            float(x) for x in view.get_list("benchmark.common_night_fractions")
        )
    for key, cast in [
        ("rare_class", str), ("rare_train_count", int), ("cis_test_per_class", int),
        ("trans_test_per_class", int), ("trans_val_per_class", int),
        ("n_locations", int), ("n_trans_locations", int), ("rare_cis_locations", int),
        ("night_fraction_rare", float), ("test_night_fraction", float),
        ("empties_per_location", int), ("image_size", int),
        ("cis_val_fraction", float), ("n_model_variants", int), ("seed", int),
    ]:
        full = f"benchmark.{key}"
        if full in v:
            kwargs[key] = cast(v[full])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return BenchmarkConfig(**kwargs)


def _experiment_config(view: ConfigView, kind: str | None, workspace: Workspace) -> ExperimentConfig:
    v = view.values
    kind = kind or view.get("kind")
    sweep_raw = view.get_list("sweep")
    if kind in ("quantity", "common_class"):
        sweep = [int(x) for x in sweep_raw]
    elif kind == "day_night":
        sweep = [float(x) for x in sweep_raw]
    else:
        sweep = sweep_raw
    pools = {
        key.split("pools.", 1)[1]: value
        for key, value in v.items()
        if key.startswith("pools.")
    }
    return ExperimentConfig(
        kind=kind,
        sweep=sweep,
        n_seeds=view.get_int("n_seeds", 1),
        base_seed=view.get_int("base_seed", 0),
        name=v.get("name"),
        benchmark=view.get("benchmark", "benchmark"),
        split_file=view.get("split", "benchmark/split.json"),
        pools=pools,
        rare_class=view.get("rare_class", "cervid"),
        n_sim=view.get_int("n_sim", 1000),
        night_fraction=view.get_float("night_fraction", 0.5),
        input_resolution=view.get_int("train.input_resolution", 32),
        cache_resolution=view.get_int("train.cache_resolution", 48),
        batch_size=view.get_int("train.batch_size", 64),
        max_epochs=view.get_int("train.max_epochs", 10),
        patience=view.get_int("train.patience", 3),
        learning_rate=view.get_float("train.learning_rate", 0.001),
        rmsprop_decay=view.get_float("train.rmsprop_decay", 0.9),
        momentum=view.get_float("train.momentum", 0.9),
        epsilon=view.get_float("train.epsilon", 1e-8),
        use_class_weights=view.get_bool("train.use_class_weights", False),
    )


def cmd_benchmark_make(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    cfg = _benchmark_config(_view(args.config), args.seed)
    records, split = make_benchmark(cfg, workspace.benchmark_dir)
    stats = class_stats(split, records)
    print(f"benchmark: {len(records)} images at {workspace.benchmark_dir}")
    for cls in sorted(stats.counts["train"]):
        print(f"  train {cls}: {stats.counts['train'][cls]}")
    return 0


def cmd_gen_scenes(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    library = AssetLibrary.load(workspace.assets_dir)
    gen = airsim_gen_config() if args.source == "trapcam_airsim" else unity_gen_config()
    gen.image_size = (args.image_size, args.image_size)
    variation = BatchVariation(
        pose="fixed" if "P" in args.fixed else "varied",
        lighting="fixed" if "L" in args.fixed else "varied",
        model="fixed" if "M" in args.fixed else "varied",
    )
    records = generate_sim_pool(
        workspace.pool_dir(args.pool),
        library,
        class_label=args.class_label,
        n=args.n,
        seed=args.seed,
        night_fraction=args.night_fraction,
        variation=variation,
        source=args.source,
        gen_config=gen,
        model_family=args.model_family,
        image_size=args.image_size,
    )
    print(f"pool {args.pool}: {len(records)} images ({variation.tag()})")
    return 0


def cmd_gen_overlay(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    from .compositor import EmptyBackground

    bg_dir = workspace.benchmark_dir / "backgrounds"
    bg_records = load_annotations(bg_dir / "annotations.json")
    backgrounds = [
        EmptyBackground(
            rgb=read_rgb(bg_dir / rec.file_path),
            location_id=rec.location_id,
            day_night=rec.day_night or "day",
        )
        for rec in bg_records
    ]
    sprites = None
    library = None
    if args.method == "real_on_empty":
        records = load_annotations(workspace.benchmark_dir / "annotations.json")
        split = load_split(workspace.benchmark_dir / "split.json")
        index = record_index(records)
        donors = [
            index[i] for i in sorted(split.train)
            if index[i].class_label == args.class_label
        ]
        items = [
            (
                read_rgb(workspace.benchmark_dir / rec.file_path),
                (read_mask16(workspace.benchmark_dir / "masks" / f"{rec.image_id}.png") > 0
                 ).astype("uint8") * 255,
                rec.image_id,
            )
            for rec in donors
        ]
        sprites = load_segmented_foregrounds(items, args.class_label)
        print(f"segmented {len(sprites)} training foregrounds")
    else:
        library = AssetLibrary.load(workspace.assets_dir)
    records = write_overlay_set(
        workspace.pool_dir(args.pool),
        sprites,
        backgrounds,
        n=args.n,
        method=args.method,
        seed=args.seed,
        library=library,
        class_label=args.class_label,
        night_fraction=args.night_fraction,
    )
    print(f"pool {args.pool}: {len(records)} composited images")
    return 0


def cmd_split_build(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    records = load_annotations(workspace.root / args.annotations)
    split = build_split(
        records,
        trans_locations=args.trans_locations.split(","),
        excluded_classes=args.excluded.split(",") if args.excluded else (),
        cis_val_fraction=args.cis_val_fraction,
        seed=args.seed,
        trans_val_locations=args.trans_val_locations.split(",")
        if args.trans_val_locations else None,
    )
    save_split(workspace.root / args.out, split)
    stats = class_stats(split, records)
    sizes = {name: sum(counts.values()) for name, counts in stats.counts.items()}
    print(f"split written to {args.out}: {sizes}")
    return 0


def cmd_train(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    view = _view(args.config)
    records = load_corpus(workspace, view.get("benchmark", "benchmark"))
    split = load_split(workspace.root / args.split)
    index = record_index(records)

    from .annotations import compose_training_set

    sim_pool = []
    if args.sim_manifest:
        pool_dir = (workspace.root / args.sim_manifest).parent
        sim_pool = load_corpus(workspace, str(pool_dir.relative_to(workspace.root)))
    train_set = compose_training_set(
        split, records, sim_pool, args.n_sim,
        night_fraction=view.get_float("night_fraction", 0.5),
        seed=args.seed,
    )
    val_set = [index[i] for i in sorted(split.trans_val)]
    classes = tuple(sorted({r.class_label for r in records}))
    resolution = view.get_int("train.input_resolution", 32)
    model_cfg = ModelConfig(classes=classes, input_resolution=resolution)
    train_cfg = TrainConfig(
        learning_rate=view.get_float("train.learning_rate", 0.0045),
        batch_size=view.get_int("train.batch_size", 64),
        max_epochs=view.get_int("train.max_epochs", 10),
        early_stop_patience=view.get_int("train.patience", 3),
        seed=args.seed,
    )
    loader = CropLoader(workspace.root,
                        cache_resolution=view.get_int("train.cache_resolution", 48))
    model, history = train(model_cfg, train_set, val_set, train_cfg, loader,
                           AugmentationConfig(output_resolution=resolution))
    out_dir = workspace.root / (args.out or "runs/manual")
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_dir / "checkpoint.ckpt",
                    meta={"n_sim": args.n_sim, "seed": args.seed})
    history.save(out_dir / "history.json")
    print(f"trained {history.epochs_run} epochs, best epoch {history.selected_epoch}, "
          f"val metric {history.val_metric[history.selected_epoch]:.4f}")
    print(f"checkpoint: {out_dir / 'checkpoint.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    model, _meta = load_checkpoint(workspace.root / args.checkpoint)
    records = load_corpus(workspace, args.benchmark)
    split = load_split(workspace.root / args.split)
    index = record_index(records)
    subset_ids = sorted(getattr(split, args.subset))
    subset = [index[i] for i in subset_ids]
    loader = CropLoader(workspace.root, cache_resolution=args.cache_resolution)
    scores, embeddings = predict_records(model, subset, loader)
    classes = model.classes
    pred = [classes[i] for i in scores.argmax(axis=1)]
    truths = [r.class_label for r in subset]
    report = evaluate(pred, truths, classes=classes, scores=scores)
    out_dir = workspace.root / (args.out or f"reports/eval-{args.subset}")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save(out_dir / "eval.json")
    print(f"overall error {report.overall_error:.4f}, macro {report.macro_error:.4f}")
    if args.pr_class:
        if args.pr_class not in report.pr_curves:
            raise ConfigError(f"no PR curve for class {args.pr_class!r}")
        pr_curve_csv(out_dir / f"pr_{args.pr_class}.csv", report.pr_curves[args.pr_class])
    if args.projection:
        coords = project_embeddings(
            embeddings,
            ProjectionConfig(perplexity=min(30.0, max(2.0, len(subset) / 4)),
                             iterations=args.tsne_iterations, seed=0),
        )
        correct = [p == t for p, t in zip(pred, truths)]
        projection_csv(out_dir / "projection.csv", coords, truths, correct)
    print(f"reports under {out_dir}")
    return 0


def cmd_experiment_run(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    cfg = _experiment_config(_view(args.config), args.kind, workspace)
    report = run_experiment(cfg, workspace)
    out = emit_report(report, workspace.reports_dir / report.name,
                      expected_cells=len(cfg.sweep) * cfg.n_seeds)
    print(f"experiment {report.name}: {len(report.cells)} cells")
    for name, path in out.items():
        print(f"  {name}: {path}")
    return 0


def cmd_report_emit(args) -> int:
    workspace = Workspace.resolve(args.workspace)
    report = SweepReport.load(workspace.run_dir(args.run) / "report.json")
    out = emit_report(report, workspace.reports_dir / report.name)
    for name, path in out.items():
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longtail", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_workspace(p):
        p.add_argument("--workspace", default=None,
                       help="workspace root (default: $LONGTAIL_WORKSPACE or cwd)")

    bench = sub.add_parser("benchmark", help="surrogate benchmark").add_subparsers(
        dest="action", required=True)
    p = bench.add_parser("make", help="generate corpus, backgrounds, and split")
    add_workspace(p)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_benchmark_make)

    gen = sub.add_parser("gen", help="image generation").add_subparsers(
        dest="action", required=True)
    p = gen.add_parser("scenes", help="render a simulated scene pool")
    add_workspace(p)
    p.add_argument("--pool", required=True, help="pool name under pools/")
    p.add_argument("--class", dest="class_label", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--night-fraction", type=float, default=0.5)
    p.add_argument("--fixed", default="", help="axes to hold fixed, e.g. PLM or L")
    p.add_argument("--source", choices=["trapcam_unity", "trapcam_airsim"],
                   default="trapcam_unity")
    p.add_argument("--model-family", default=None,
                   help="render models of this family instead of the class's own")
    p.add_argument("--image-size", type=int, default=256)
    p.set_defaults(func=cmd_gen_scenes)

    p = gen.add_parser("overlay", help="composite foregrounds onto empty backgrounds")
    add_workspace(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--method", choices=["sim_on_empty", "real_on_empty"], required=True)
    p.add_argument("--class", dest="class_label", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--night-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_overlay)

    split_cmd = sub.add_parser("split", help="dataset splits").add_subparsers(
        dest="action", required=True)
    p = split_cmd.add_parser("build", help="build a cis/trans split")
    add_workspace(p)
    p.add_argument("--annotations", default="benchmark/annotations.json")
    p.add_argument("--trans-locations", required=True, help="comma-separated location ids")
    p.add_argument("--trans-val-locations", default=None)
    p.add_argument("--excluded", default="", help="comma-separated class names to drop")
    p.add_argument("--cis-val-fraction", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="benchmark/split.json")
    p.set_defaults(func=cmd_split_build)

    p = sub.add_parser("train", help="train one classifier")
    add_workspace(p)
    p.add_argument("--split", default="benchmark/split.json")
    p.add_argument("--sim-manifest", default=None,
                   help="annotations.json of the sim pool to draw from")
    p.add_argument("--n-sim", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output dir (default runs/manual)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_workspace(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--benchmark", default="benchmark")
    p.add_argument("--split", default="benchmark/split.json")
    p.add_argument("--subset", choices=["train", "cis_val", "cis_test", "trans_val",
                                        "trans_test"], default="trans_test")
    p.add_argument("--cache-resolution", type=int, default=48)
    p.add_argument("--out", default=None)
    p.add_argument("--pr-class", default=None, help="write a PR curve CSV for this class")
    p.add_argument("--projection", action="store_true",
                   help="write a PCA+tSNE projection CSV of the embeddings")
    p.add_argument("--tsne-iterations", type=int, default=500)
    p.set_defaults(func=cmd_eval)

    exp = sub.add_parser("experiment", help="experiment sweeps").add_subparsers(
        dest="action", required=True)
    p = exp.add_parser("run", help="run a sweep from a config file")
    add_workspace(p)
    p.add_argument("--kind", choices=["quantity", "variation", "method", "day_night",
                                      "zero_real", "common_class"], default=None)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment_run)

    rep = sub.add_parser("report", help="report emission").add_subparsers(
        dest="action", required=True)
    p = rep.add_parser("emit", help="emit CSV/JSON/series for a finished run")
    add_workspace(p)
    p.add_argument("--run", required=True, help="run name under runs/")
    p.set_defaults(func=cmd_report_emit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LongtailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
