"""Report emission: per-cell CSV, JSON summary, and plot-ready series."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ValidationError
from .runner import SweepReport

CELL_COLUMNS = [
    "kind", "value", "seed", "n_train", "n_sim",
    "rare_cis_error", "rare_trans_error", "other_cis_error", "other_trans_error",
    "overall_cis_error", "overall_trans_error",
    "rare_trans_column_mass", "rare_cis_column_mass",
    "epochs_run", "selected_epoch", "dir",
]

# Fig-4-style layout: error vs quantity, one series per (class group, regime)
PLOT_SERIES = ["rare_cis", "rare_trans", "other_cis", "other_trans"]
_SERIES_METRIC = {
    "rare_cis": "rare_cis_error",
    "rare_trans": "rare_trans_error",
    "other_cis": "other_cis_error",
    "other_trans": "other_trans_error",
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def emit_report(
    sweep: SweepReport,
    out_dir: str | Path,
    expected_cells: int | None = None,
) -> dict[str, Path]:
    """Write cells.csv, summary.json, and series.csv under ``out_dir``.

    A sweep with fewer cells than expected is still emitted, flagged
    ``incomplete`` in the summary.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    lines = [",".join(CELL_COLUMNS)]
    for cell in sweep.cells:
        row = {"kind": sweep.kind, **cell}
        lines.append(",".join(_fmt(row.get(col, "")) for col in CELL_COLUMNS))
    paths["cells"] = out_dir / "cells.csv"
    paths["cells"].write_text("\n".join(lines) + "\n", encoding="utf-8")

    incomplete = expected_cells is not None and len(sweep.cells) < expected_cells
    summary = {
        "kind": sweep.kind,
        "name": sweep.name,
        "rare_class": sweep.rare_class,
        "aggregates": sweep.aggregates,
        "metadata": sweep.metadata,
        "n_cells": len(sweep.cells),
        "incomplete": bool(incomplete),
    }
    paths["summary"] = out_dir / "summary.json"
    paths["summary"].write_text(json.dumps(summary, sort_keys=True, indent=1),
                                encoding="utf-8")

    series_lines = ["value,series,mean,std"]
    for value in sweep.metadata.get("sweep", []):
        agg = sweep.aggregates.get(str(value))
        if agg is None:
            continue
        for series in PLOT_SERIES:
            metric = agg[_SERIES_METRIC[series]]
            series_lines.append(
                f"{value},{series},{_fmt(metric['mean'])},{_fmt(metric['std'])}"
            )
    paths["series"] = out_dir / "series.csv"
    paths["series"].write_text("\n".join(series_lines) + "\n", encoding="utf-8")
    return paths


def parse_cells_csv(path: str | Path) -> list[dict]:
    """Read cells.csv back into dicts (numeric fields parsed)."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise ValidationError(f"empty report CSV {path}")
    header = lines[0].split(",")
    out = []
    numeric = {
        "seed", "n_train", "n_sim", "epochs_run", "selected_epoch",
        "rare_cis_error", "rare_trans_error", "other_cis_error", "other_trans_error",
        "overall_cis_error", "overall_trans_error",
        "rare_trans_column_mass", "rare_cis_column_mass",
    }
    for line in lines[1:]:
        fields = line.split(",")
        row: dict = dict(zip(header, fields))
        for key in numeric & set(header):
            if row[key] != "":
                row[key] = float(row[key]) if "." in row[key] or "e" in row[key] else int(row[key])
        out.append(row)
    return out
