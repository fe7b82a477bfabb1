"""Workspace layout: every artifact lives under one root directory."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

ENV_VAR = "LONGTAIL_WORKSPACE"


@dataclass(frozen=True)
class Workspace:
    root: Path

    @classmethod
    def resolve(cls, explicit: str | Path | None = None) -> "Workspace":
        """Priority: explicit argument, then $LONGTAIL_WORKSPACE, then cwd."""
        if explicit is not None:
            return cls(Path(explicit))
        env = os.environ.get(ENV_VAR)
        return cls(Path(env) if env else Path.cwd())

    @property
    def benchmark_dir(self) -> Path:
        return self.root / "benchmark"

    @property
    def assets_dir(self) -> Path:
        return self.benchmark_dir / "assets"

    def pool_dir(self, name: str) -> Path:
        return self.root / "pools" / name

    def run_dir(self, name: str) -> Path:
        return self.root / "runs" / name

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def rel(self, path: Path) -> str:
        return str(path.relative_to(self.root))
