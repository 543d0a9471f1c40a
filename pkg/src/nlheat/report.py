"""Verification reports: per-check records, JSON and CSV output."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InfrastructureError(RuntimeError):
    """A numerical building block (quadrature, resolution) could not deliver."""


def _clean(v):
    """JSON-safe, deterministic representation of numbers and containers."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return str(v) if v is not None and not isinstance(v, str) else v


@dataclass
class Check:
    name: str
    anchor: str                         # the property being verified
    passed: bool
    constants: dict = field(default_factory=dict)
    residual: float | None = None
    tolerance: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return _clean({"name": self.name, "anchor": self.anchor, "constants": self.constants,
                       "residual": self.residual, "tolerance": self.tolerance,
                       "pass": self.passed, "note": self.note})


@dataclass
class Report:
    suite: str
    spec: str
    grid: dict
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    seed: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "spec": self.spec, "grid": _clean(self.grid),
                "checks": [c.to_dict() for c in self.checks], "pass": self.passed,
                "seconds": round(self.seconds, 3), "seed": self.seed}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)

    def write_csv(self, directory) -> Path:
        """One row per (check, constant) pair; plot-ready."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.suite}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["suite", "check", "quantity", "value", "pass"])
            for c in self.checks:
                for k, v in sorted(_clean(c.constants).items()):
                    w.writerow([self.suite, c.name, k, json.dumps(v), c.passed])
                if c.residual is not None:
                    w.writerow([self.suite, c.name, "residual", _clean(c.residual), c.passed])
        return path


def merge(reports: list[Report], suite: str = "all") -> Report:
    r0 = reports[0]
    checks = [Check(f"{r.suite}/{c.name}", c.anchor, c.passed, c.constants, c.residual,
                    c.tolerance, c.note) for r in reports for c in r.checks]
    return Report(suite, r0.spec, r0.grid, checks, sum(r.seconds for r in reports), r0.seed)
