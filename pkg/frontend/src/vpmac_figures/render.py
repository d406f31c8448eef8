"""Figure rendering for simulator CSV outputs.

Strictly a downstream consumer: every number drawn comes from the CSV or its
``.meta.json`` sidecar, never from recomputation.  Three figure kinds cover
the recurring experiment views:

* ``table-curves``: optimum, designed-equilibrium and baseline utilities as
  functions of the user count;
* ``convergence``: the utility moving average over time with dashed optimal
  and dash-dotted equilibrium reference lines;
* ``staged-convergence``: the mean transmission probability over time with
  per-stage reference lines and vertical markers at population changes.

Each render also emits a ``<output>.echo.json`` file stating exactly which
reference values were drawn, so correctness can be checked without pixel
inspection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

_FIGSIZE = (7.0, 4.5)
_DPI = 120
_PNG_METADATA = {"Software": "vpmac-figures"}

KINDS = ("table-curves", "convergence", "staged-convergence")


class RenderError(ValueError):
    """Anything that prevents drawing the requested figure."""


@dataclass(frozen=True)
class FigureJob:
    csv_paths: tuple[Path, ...]
    meta_path: Path
    output_path: Path
    kind: str | None = None  # inferred from the metadata when omitted

    def __post_init__(self) -> None:
        object.__setattr__(self, "csv_paths", tuple(Path(p) for p in self.csv_paths))
        object.__setattr__(self, "meta_path", Path(self.meta_path))
        object.__setattr__(self, "output_path", Path(self.output_path))
        if self.kind is not None and self.kind not in KINDS:
            raise RenderError(f"unknown figure kind: {self.kind!r}")
        if not self.csv_paths:
            raise RenderError("at least one input CSV is required")


def _read_csv(path: Path) -> dict[str, list[float]]:
    if not path.exists():
        raise RenderError(f"input CSV not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise RenderError(f"CSV has no header: {path}")
        columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in reader.fieldnames:
                columns[name].append(float(row[name]))
    if not next(iter(columns.values())):
        raise RenderError(f"CSV has no data rows: {path}")
    return columns


def _read_meta(path: Path) -> dict:
    if not path.exists():
        raise RenderError(f"metadata file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _need(columns: dict[str, list[float]], names: tuple[str, ...], path: Path) -> None:
    missing = [n for n in names if n not in columns]
    if missing:
        raise RenderError(f"CSV {path} lacks required columns: {missing}")


def infer_kind(meta: dict) -> str:
    if meta.get("kind") == "table":
        return "table-curves"
    stages = meta.get("stages", [])
    return "staged-convergence" if len(stages) > 1 else "convergence"


def render(job: FigureJob) -> dict:
    """Draw one figure and return (and write) the reference-value echo."""
    meta = _read_meta(job.meta_path)
    kind = job.kind or infer_kind(meta)

    if kind == "table-curves":
        echo = _render_table(job, meta)
    elif kind == "convergence":
        echo = _render_convergence(job, meta)
    else:
        echo = _render_staged(job, meta)

    echo_path = Path(str(job.output_path) + ".echo.json")
    echo_path.write_text(json.dumps(echo, indent=2) + "\n")
    return echo


def _render_table(job: FigureJob, meta: dict) -> dict:
    columns = _read_csv(job.csv_paths[0])
    _need(columns, ("K", "U_opt", "U_star", "U_baseline"), job.csv_paths[0])
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.plot(columns["K"], columns["U_opt"], "k--", label="optimal")
    ax.plot(columns["K"], columns["U_star"], "b-", label="designed equilibrium")
    ax.plot(columns["K"], columns["U_baseline"], "r-.", label="baseline")
    ax.set_xlabel("number of users")
    ax.set_ylabel("utility (packets/slot)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, job.output_path)
    return {
        "output": str(job.output_path),
        "kind": "table-curves",
        "series": ["U_opt", "U_star", "U_baseline"],
        "n_rows": len(columns["K"]),
        "baseline": meta.get("baseline"),
    }


def _single_stage(meta: dict) -> dict:
    stages = meta.get("stages", [])
    if not stages:
        raise RenderError("trace metadata carries no stage references")
    return stages[0]


def _render_convergence(job: FigureJob, meta: dict) -> dict:
    columns = _read_csv(job.csv_paths[0])
    _need(columns, ("slot", "utility_ema"), job.csv_paths[0])
    stage = _single_stage(meta)
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.plot(columns["slot"], columns["utility_ema"], "b-", label="measured utility (EMA)")
    ax.axhline(stage["u_opt"], color="k", linestyle="--", label="optimal utility")
    ax.axhline(stage["u_star"], color="g", linestyle="-.", label="utility at equilibrium")
    ax.set_xlabel("time slot")
    ax.set_ylabel("utility (packets/slot)")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    _save(fig, job.output_path)
    return {
        "output": str(job.output_path),
        "kind": "convergence",
        "series": ["utility_ema"],
        "reference_lines": {"u_opt": stage["u_opt"], "u_star": stage["u_star"]},
    }


def _render_staged(job: FigureJob, meta: dict) -> dict:
    columns = _read_csv(job.csv_paths[0])
    _need(columns, ("slot", "p_mean"), job.csv_paths[0])
    stages = meta.get("stages", [])
    if not stages:
        raise RenderError("trace metadata carries no stage references")
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.plot(columns["slot"], columns["p_mean"], "b-", label="mean transmission probability")
    markers = []
    for i, stage in enumerate(stages):
        span = (stage["start_slot"], stage["end_slot"])
        ax.hlines(
            stage["p_opt"], *span, colors="k", linestyles="--",
            label="optimal probability" if i == 0 else None,
        )
        ax.hlines(
            stage["p_star"], *span, colors="g", linestyles="-.",
            label="designed equilibrium" if i == 0 else None,
        )
        if i > 0:
            ax.axvline(stage["start_slot"], color="gray", alpha=0.6)
            markers.append(stage["start_slot"])
    ax.set_xlabel("time slot")
    ax.set_ylabel("transmission probability")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    _save(fig, job.output_path)
    return {
        "output": str(job.output_path),
        "kind": "staged-convergence",
        "series": ["p_mean"],
        "stages": [
            {
                "start_slot": s["start_slot"],
                "end_slot": s["end_slot"],
                "k": s["k"],
                "p_star": s["p_star"],
                "p_opt": s["p_opt"],
            }
            for s in stages
        ],
        "event_markers": markers,
    }


def _save(fig, path: Path) -> None:
    try:
        fig.savefig(path, metadata=_PNG_METADATA)
    finally:
        plt.close(fig)
