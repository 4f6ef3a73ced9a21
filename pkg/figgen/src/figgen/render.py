"""CSV loading and figure rendering.

Four figure kinds:

* ``overlay``      -- one closed-loop run (solid) over one averaged run
                      (dashed): three panels, x1, x2, and the cost y.
* ``ic_sweep_x1``  -- one curve per input run, x1 and x2 panels
                      (varying first seed component).
* ``ic_sweep_x2``  -- same layout, varying second seed component.
* ``gain_sweep``   -- same layout, one labeled curve per gain value.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("overlay", "ic_sweep_x1", "ic_sweep_x2", "gain_sweep")

#: Columns every input file must provide.
REQUIRED_COLUMNS = ("t", "x1", "x2", "y")


class SchemaError(ValueError):
    """An input CSV does not carry the expected columns."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list[Path]
    output: Path
    labels: Optional[list[str]] = None
    xlabel: str = "time"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise ValueError(f"{len(self.labels)} labels for {len(self.inputs)} inputs")


@dataclass
class RunSeries:
    """Columns of one trajectory CSV, possibly empty (header-only file)."""

    label: str
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def empty(self) -> bool:
        return self.columns["t"].size == 0


def load_run(path: Path, label: Optional[str] = None) -> RunSeries:
    """Read one trajectory CSV, checking the required columns by name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows) if rows else np.empty((0, len(header)))
    cols = {name: data[:, i] for i, name in enumerate(header)}
    return RunSeries(label=label or path.stem, columns=cols)


def _finish(fig, axes, output: Path) -> None:
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=150)
    plt.close(fig)


def _render_overlay(spec: FigureSpec) -> None:
    labels = spec.labels or ["closed loop", "averaged"]
    runs = [load_run(p, lb) for p, lb in zip(spec.inputs, labels)]
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 8.0), sharex=True)
    styles = ["-", "--"]
    for panel, column, yl in ((0, "x1", "x1"), (1, "x2", "x2"), (2, "y", "cost")):
        for run, style in zip(runs, styles):
            if run.empty:
                continue
            axes[panel].plot(run["t"], run[column], style, label=run.label)
        axes[panel].set_ylabel(yl)
        if not all(r.empty for r in runs):
            axes[panel].legend(loc="best", fontsize=8)
    axes[-1].set_xlabel(spec.xlabel)
    _finish(fig, axes, spec.output)


def _render_family(spec: FigureSpec) -> None:
    labels = spec.labels or [p.stem for p in spec.inputs]
    runs = [load_run(p, lb) for p, lb in zip(spec.inputs, labels)]
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    for panel, column in ((0, "x1"), (1, "x2")):
        for run in runs:
            if run.empty:
                continue
            axes[panel].plot(run["t"], run[column], "-", label=run.label)
        axes[panel].set_ylabel(column)
        if not all(r.empty for r in runs):
            axes[panel].legend(loc="best", fontsize=8)
    axes[-1].set_xlabel(spec.xlabel)
    _finish(fig, axes, spec.output)


def render(spec: FigureSpec) -> Path:
    """Render the figure described by ``spec``; returns the output path.

    Overlay figures draw the first input solid and the second dashed so
    the averaged trajectory reads as the reference curve.  Header-only
    inputs yield an axes-only figure rather than an error.
    """
    if spec.kind == "overlay":
        if len(spec.inputs) != 2:
            raise ValueError(f"overlay needs exactly 2 inputs, got {len(spec.inputs)}")
        _render_overlay(spec)
    else:
        _render_family(spec)
    return spec.output
