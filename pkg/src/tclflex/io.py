"""Serialization of traces, curves, snapshots, reports and run manifests.

Powers are written in kW, temperatures in degC and times in minutes. Floats
use the shortest round-trip representation so CSV and JSON outputs agree
exactly and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__
from .controller import TRACE_COLUMNS, ControlTrace
from .predict import ProbabilityPoint
from .vb import CSV_COLUMNS, VbSnapshot

CURVE_COLUMNS = ("x_kw", "p_hat", "lower", "upper", "successes", "trials")
MANIFEST_NAME = "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(fh, columns: Sequence[str], rows: Iterable[Mapping]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])


def write_rows(path, columns: Sequence[str], rows: Iterable[Mapping]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_csv(fh, columns, rows)
    return path


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_trace_csv(path, trace: ControlTrace, minutes_per_step: float | None = None) -> Path:
    """One row per step; ``minute`` is the step start time."""
    mps = trace.step_hours * 60.0 if minutes_per_step is None else minutes_per_step
    cols = ("minute",) + TRACE_COLUMNS

    def rows():
        for row in trace.rows():
            row["minute"] = row["step"] * mps
            yield row
    return write_rows(path, cols, rows())


def write_curve_csv(path, points: Sequence[ProbabilityPoint]) -> Path:
    return write_rows(path, CURVE_COLUMNS, (
        {"x_kw": p.power, "p_hat": p.estimate, "lower": p.lower, "upper": p.upper,
         "successes": p.successes, "trials": p.trials} for p in points))


def read_curve_csv(path) -> list[ProbabilityPoint]:
    return [ProbabilityPoint(float(r["x_kw"]), float(r["p_hat"]), float(r["lower"]),
                             float(r["upper"]), int(r["successes"]), int(r["trials"]))
            for r in read_rows(path)]


def write_snapshot_csv(path, snapshots: Sequence[VbSnapshot]) -> Path:
    return write_rows(path, CSV_COLUMNS, (s.to_row() for s in snapshots))


def read_snapshot_csv(path) -> list[VbSnapshot]:
    return [VbSnapshot.from_row(r) for r in read_rows(path)]


def _clean(obj):
    # json has no NaN/inf; null keeps documents standard
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _clean(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


@dataclass
class RunManifest:
    """Everything needed to reproduce a run's outputs."""

    command: str
    master_seed: int
    config: dict
    decisions: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "kind": "tclflex-run-manifest",
            "version": self.version,
            "command": self.command,
            "master_seed": self.master_seed,
            "options": self.options,
            "decisions": self.decisions,
            "config": self.config,
            "outputs": sorted(self.outputs),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunManifest":
        return cls(d["command"], int(d["master_seed"]), dict(d["config"]),
                   dict(d.get("decisions", {})), dict(d.get("options", {})),
                   list(d.get("outputs", [])), d.get("version", __version__))

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / MANIFEST_NAME, self.to_dict())


def read_manifest(path) -> RunManifest:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    return RunManifest.from_dict(read_json(p))


def relpath(path, start) -> str:
    return os.path.relpath(path, start).replace(os.sep, "/")
