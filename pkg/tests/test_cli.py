from __future__ import annotations

import json

import numpy as np
import pytest

from longtail.annotations import load_annotations, load_split
from longtail.cli import main

from conftest import tiny_benchmark_config


def run_cli(*args) -> int:
    return main([str(a) for a in args])


class TestBenchmarkMake:
    def test_make_with_config(self, tmp_path, capsys):
        cfg = tiny_benchmark_config()
        config = tmp_path / "bench.cfg"
        config.write_text(
            "\n".join(
                [
                    "benchmark.classes = cervid, canid, felid, ursid",
                    "benchmark.common_train_counts = 12, 10, 8",
                    "benchmark.common_night_fractions = 0.4, 0.5, 0.3",
                    "benchmark.rare_train_count = 5",
                    "benchmark.cis_test_per_class = 3",
                    "benchmark.trans_test_per_class = 4",
                    "benchmark.trans_val_per_class = 2",
                    "benchmark.n_locations = 5",
                    "benchmark.n_trans_locations = 2",
                    "benchmark.rare_cis_locations = 2",
                    "benchmark.empties_per_location = 1",
                    "benchmark.n_model_variants = 2",
                ]
            )
        )
        assert run_cli("benchmark", "make", "--workspace", tmp_path,
                       "--config", config, "--seed", 3) == 0
        out = capsys.readouterr().out
        assert "train cervid: 5" in out
        assert (tmp_path / "benchmark" / "split.json").exists()


class TestPipelineCommands:
    def test_gen_train_eval_chain(self, tiny_workspace, capsys):
        ws = str(tiny_workspace.root)
        assert run_cli("gen", "scenes", "--workspace", ws, "--pool", "cli-pool",
                       "--class", "cervid", "--n", 8, "--seed", 4) == 0
        records = load_annotations(tiny_workspace.pool_dir("cli-pool") / "annotations.json")
        assert len(records) == 8

        config = tiny_workspace.root / "train.cfg"
        config.write_text(
            "train.max_epochs = 2\ntrain.patience = 2\ntrain.input_resolution = 32\n"
            "train.cache_resolution = 40\n"
        )
        assert run_cli(
            "train", "--workspace", ws, "--split", "benchmark/split.json",
            "--sim-manifest", "pools/cli-pool/annotations.json",
            "--n-sim", 6, "--config", config, "--out", "runs/cli-train",
        ) == 0
        assert (tiny_workspace.root / "runs/cli-train/checkpoint.ckpt").exists()

        assert run_cli(
            "eval", "--workspace", ws,
            "--checkpoint", "runs/cli-train/checkpoint.ckpt",
            "--subset", "trans_test", "--out", "reports/cli-eval",
            "--pr-class", "cervid", "--cache-resolution", 40,
        ) == 0
        report = json.loads(
            (tiny_workspace.root / "reports/cli-eval/eval.json").read_text()
        )
        assert 0.0 <= report["overall_error"] <= 1.0
        assert (tiny_workspace.root / "reports/cli-eval/pr_cervid.csv").exists()

    def test_gen_overlay_real_on_empty(self, tiny_workspace):
        ws = str(tiny_workspace.root)
        assert run_cli(
            "gen", "overlay", "--workspace", ws, "--pool", "cli-roe",
            "--method", "real_on_empty", "--class", "cervid", "--n", 5, "--seed", 2,
        ) == 0
        records = load_annotations(tiny_workspace.pool_dir("cli-roe") / "annotations.json")
        assert len(records) == 5
        assert {r.source for r in records} == {"real_on_empty"}

    def test_split_build(self, tiny_workspace):
        ws = str(tiny_workspace.root)
        assert run_cli(
            "split", "build", "--workspace", ws,
            "--annotations", "benchmark/annotations.json",
            "--trans-locations", "t00,t01,t02",
            "--seed", 17, "--out", "splits/alt.json",
        ) == 0
        split = load_split(tiny_workspace.root / "splits/alt.json")
        assert split.seed == 17
        assert split.trans_locations == {"t00", "t01", "t02"}

    def test_experiment_run_and_report_emit(self, tiny_workspace, capsys):
        ws = str(tiny_workspace.root)
        config = tiny_workspace.root / "exp.cfg"
        config.write_text(
            "\n".join(
                [
                    "kind = quantity",
                    "name = cli-exp",
                    "sweep = 0, 10",
                    "n_seeds = 1",
                    "base_seed = 3",
                    "pools.trapcam_unity = pools/unity",
                    "train.max_epochs = 2",
                    "train.patience = 2",
                    "train.cache_resolution = 40",
                ]
            )
        )
        assert run_cli("experiment", "run", "--workspace", ws, "--config", config) == 0
        report_path = tiny_workspace.run_dir("cli-exp") / "report.json"
        assert report_path.exists()
        assert run_cli("report", "emit", "--workspace", ws, "--run", "cli-exp") == 0
        series = (tiny_workspace.reports_dir / "cli-exp" / "series.csv").read_text()
        assert series.startswith("value,series,mean,std")

    def test_error_paths_return_nonzero(self, tiny_workspace):
        ws = str(tiny_workspace.root)
        assert run_cli(
            "split", "build", "--workspace", ws,
            "--annotations", "benchmark/annotations.json",
            "--trans-locations", "nowhere",
            "--out", "splits/bad.json",
        ) == 2
