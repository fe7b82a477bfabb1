from __future__ import annotations

import json

import numpy as np
import pytest

from longtail.annotations import class_stats, load_annotations, load_split, record_index
from longtail.errors import ConfigError, PoolError, ValidationError
from longtail.experiments.benchmark import BenchmarkConfig, make_benchmark
from longtail.experiments.configfile import ConfigView, parse_config
from longtail.experiments.report import emit_report, parse_cells_csv
from longtail.experiments.runner import (
    ExperimentConfig,
    SweepReport,
    compose_for_cell,
    load_corpus,
    run_experiment,
)
from longtail.experiments.workspace import Workspace
from longtail.imaging import files_equal

from conftest import check_split_invariants, tiny_benchmark_config


class TestConfigFile:
    def test_parse_basics(self):
        text = "# comment\nkind = quantity\nsweep = 0, 60, 250\n\ntrain.batch_size = 32\n"
        values = parse_config(text)
        assert values == {"kind": "quantity", "sweep": "0, 60, 250",
                          "train.batch_size": "32"}
        view = ConfigView(values)
        assert view.get_list("sweep") == ["0", "60", "250"]
        assert view.get_int("train.batch_size") == 32

    def test_errors(self):
        with pytest.raises(ConfigError):
            parse_config("just a line")
        with pytest.raises(ConfigError):
            parse_config("a = 1\na = 2")
        view = ConfigView({"x": "abc"})
        with pytest.raises(ConfigError):
            view.get_int("x")
        with pytest.raises(ConfigError):
            view.get("missing")


class TestWorkspace:
    def test_env_var_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv("LONGTAIL_WORKSPACE", str(tmp_path))
        assert Workspace.resolve().root == tmp_path
        assert Workspace.resolve("/elsewhere").root.name == "elsewhere"


class TestMakeBenchmark:
    def test_small_grid_counts(self, tiny_workspace):
        records = load_annotations(tiny_workspace.benchmark_dir / "annotations.json")
        split = load_split(tiny_workspace.benchmark_dir / "split.json")
        stats = class_stats(split, records)
        cfg = tiny_benchmark_config()
        assert stats.counts["train"]["cervid"] == cfg.rare_train_count
        for cls, count in zip(("canid", "felid", "ursid"), cfg.common_train_counts):
            assert stats.counts["train"][cls] == count
        assert check_split_invariants(split, records) == []

    def test_manifest_parseable_and_images_exist(self, tiny_workspace):
        records = load_annotations(tiny_workspace.benchmark_dir / "annotations.json")
        for rec in records[:10]:
            assert (tiny_workspace.benchmark_dir / rec.file_path).exists()
            assert rec.boxes

    def test_backgrounds_have_no_boxes(self, tiny_workspace):
        empties = load_annotations(
            tiny_workspace.benchmark_dir / "backgrounds" / "annotations.json"
        )
        assert empties
        assert all(not rec.boxes for rec in empties)

    def test_deterministic_regeneration(self, tmp_path):
        cfg = tiny_benchmark_config(seed=9)
        a_records, a_split = make_benchmark(cfg, tmp_path / "a")
        b_records, b_split = make_benchmark(cfg, tmp_path / "b")
        assert a_records == b_records
        assert a_split == b_split
        assert files_equal(tmp_path / "a" / "annotations.json",
                           tmp_path / "b" / "annotations.json")
        for rec in a_records[:8]:
            assert files_equal(tmp_path / "a" / rec.file_path,
                               tmp_path / "b" / rec.file_path)

    def test_rare_count_validation(self):
        with pytest.raises(ValidationError):
            BenchmarkConfig(rare_train_count=200)


def _experiment(ws, **overrides) -> ExperimentConfig:
    base = dict(
        kind="quantity", sweep=[0, 20], n_seeds=1, base_seed=7,
        pools={"trapcam_unity": "pools/unity"},
        rare_class="cervid", max_epochs=2, patience=2,
        input_resolution=32, cache_resolution=40,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_quantity_sweep_artifacts(self, tiny_workspace):
        cfg = _experiment(tiny_workspace, name="q1")
        report = run_experiment(cfg, tiny_workspace)
        assert len(report.cells) == 2
        for cell in report.cells:
            cell_dir = tiny_workspace.root / cell["dir"]
            for artifact in ("checkpoint.ckpt", "history.json", "train_manifest.json",
                             "eval_cis.json", "eval_trans.json", "summary.json"):
                assert (cell_dir / artifact).exists()
        # manifest of the n_sim=20 cell holds exactly 20 sim records
        cell = next(c for c in report.cells if c["value"] == 20)
        manifest = load_annotations(
            tiny_workspace.root / cell["dir"] / "train_manifest.json"
        )
        assert sum(1 for r in manifest if r.source != "real") == 20

    def test_missing_pool_fails_before_training(self, tiny_workspace):
        cfg = _experiment(tiny_workspace, name="q2", pools={})
        with pytest.raises(PoolError):
            run_experiment(cfg, tiny_workspace)

    def test_nested_quantity_composition(self, tiny_workspace):
        records = load_corpus(tiny_workspace, "benchmark")
        split = load_split(tiny_workspace.root / "benchmark/split.json")
        pools = {"trapcam_unity": load_corpus(tiny_workspace, "pools/unity")}
        cfg = _experiment(tiny_workspace)
        ids = {}
        for n in (5, 20, 60):
            composed = compose_for_cell(cfg, n, seed=7, split=split, records=records,
                                        pools=pools)
            ids[n] = {r.image_id for r in composed}
        assert ids[5] <= ids[20] <= ids[60]

    def test_zero_real_composition(self, tiny_workspace):
        records = load_corpus(tiny_workspace, "benchmark")
        split = load_split(tiny_workspace.root / "benchmark/split.json")
        pools = {"trapcam_unity": load_corpus(tiny_workspace, "pools/unity")}
        cfg = _experiment(tiny_workspace, kind="zero_real",
                          sweep=["with_real", "without_real"], n_sim=15)
        for value in cfg.sweep:
            composed = compose_for_cell(cfg, value, seed=1, split=split,
                                        records=records, pools=pools)
            real_rare = [
                r for r in composed
                if r.class_label == "cervid" and r.source == "real"
            ]
            sim = [r for r in composed if r.source != "real"]
            assert len(sim) == 15
            if value == "without_real":
                assert real_rare == []
            else:
                assert len(real_rare) > 0

    def test_method_kind_compositions(self, tiny_workspace):
        records = load_corpus(tiny_workspace, "benchmark")
        split = load_split(tiny_workspace.root / "benchmark/split.json")
        pools = {
            "trapcam_unity": load_corpus(tiny_workspace, "pools/unity"),
            "real_on_empty": load_corpus(tiny_workspace, "pools/unity"),
        }
        cfg = _experiment(tiny_workspace, kind="method",
                          sweep=["baseline", "oversample", "combined"], n_sim=12)
        base = compose_for_cell(cfg, "baseline", 1, split, records, pools)
        assert all(r.source == "real" for r in base)
        over = compose_for_cell(cfg, "oversample", 1, split, records, pools)
        rare = [r for r in over if r.class_label == "cervid"]
        base_rare = [r for r in base if r.class_label == "cervid"]
        assert len(rare) == len(base_rare) + 12
        assert {r.file_path for r in rare} == {r.file_path for r in base_rare}
        comb = compose_for_cell(cfg, "combined", 1, split, records, pools)
        assert sum(1 for r in comb if r.source != "real") == 12

    def test_run_determinism(self, tiny_workspace):
        cfg_a = _experiment(tiny_workspace, name="det-a")
        cfg_b = _experiment(tiny_workspace, name="det-b")
        rep_a = run_experiment(cfg_a, tiny_workspace)
        rep_b = run_experiment(cfg_b, tiny_workspace)
        strip = lambda cells: [
            {k: v for k, v in c.items() if k != "dir"} for c in cells
        ]
        assert strip(rep_a.cells) == strip(rep_b.cells)
        for cell_a, cell_b in zip(rep_a.cells, rep_b.cells):
            assert files_equal(
                tiny_workspace.root / cell_a["dir"] / "checkpoint.ckpt",
                tiny_workspace.root / cell_b["dir"] / "checkpoint.ckpt",
            )


class TestEmitReport:
    def _tiny_report(self) -> SweepReport:
        cells = [
            {"value": 0, "seed": 1, "n_train": 88, "n_sim": 0, "epochs_run": 2,
             "selected_epoch": 1, "dir": "runs/x/0/s1",
             "rare_cis_error": 0.5, "rare_trans_error": 0.75,
             "other_cis_error": 0.25, "other_trans_error": 0.5,
             "overall_cis_error": 0.3, "overall_trans_error": 0.5,
             "rare_trans_column_mass": 3.0, "rare_cis_column_mass": 2.0},
        ]
        aggregates = {
            "0": {
                m: {"mean": cells[0][m], "std": 0.0}
                for m in ("rare_cis_error", "rare_trans_error", "other_cis_error",
                          "other_trans_error", "overall_cis_error",
                          "overall_trans_error", "rare_trans_column_mass",
                          "rare_cis_column_mass")
            }
        }
        return SweepReport(kind="quantity", name="x", rare_class="cervid",
                           cells=cells, aggregates=aggregates,
                           metadata={"sweep": ["0"], "seeds": [1]})

    def test_one_cell_one_row(self, tmp_path):
        paths = emit_report(self._tiny_report(), tmp_path, expected_cells=1)
        rows = parse_cells_csv(paths["cells"])
        assert len(rows) == 1
        assert rows[0]["rare_trans_error"] == 0.75

    def test_csv_round_trip_values(self, tmp_path):
        report = self._tiny_report()
        paths = emit_report(report, tmp_path)
        row = parse_cells_csv(paths["cells"])[0]
        for key in ("rare_cis_error", "rare_trans_error", "other_cis_error",
                    "other_trans_error"):
            assert row[key] == report.cells[0][key]

    def test_four_series_for_quantity(self, tmp_path):
        paths = emit_report(self._tiny_report(), tmp_path)
        lines = paths["series"].read_text().strip().splitlines()
        series = {line.split(",")[1] for line in lines[1:]}
        assert series == {"rare_cis", "rare_trans", "other_cis", "other_trans"}

    def test_incomplete_flag(self, tmp_path):
        paths = emit_report(self._tiny_report(), tmp_path, expected_cells=5)
        summary = json.loads(paths["summary"].read_text())
        assert summary["incomplete"] is True

    def test_sweep_report_round_trip(self, tmp_path):
        report = self._tiny_report()
        report.save(tmp_path / "report.json")
        loaded = SweepReport.load(tmp_path / "report.json")
        assert loaded.to_dict() == report.to_dict()


class TestExperimentConfigValidation:
    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="nonsense", sweep=[1])

    def test_empty_sweep(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="quantity", sweep=[])
