"""Render experiment CSVs into the standard static panels.

Input is the flat results schema produced by the experiment harness:

    family,method,seed,d,k,T,N,iteration,train_loss,estimation_error,
    balance_gap,dist_to_target,wall_ms,diverged

Per method, seed curves are aggregated to their mean with a min-max band;
rows from the synthetic ``theory`` method are drawn as a dashed reference
line.  The curriculum family renders comparison bars instead of curves.
Output files are written atomically (temp file + rename) and inputs are
never modified.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA = (
    "family", "method", "seed", "d", "k", "T", "N", "iteration",
    "train_loss", "estimation_error", "balance_gap", "dist_to_target",
    "wall_ms", "diverged",
)

_NUMERIC = {
    "seed", "d", "k", "T", "N", "iteration", "train_loss", "estimation_error",
    "balance_gap", "dist_to_target", "wall_ms", "diverged",
}

THEORY_METHOD = "theory"

# family -> (x column, y column, logx, logy)
FAMILY_AXES = {
    "iter_sweep": ("iteration", "estimation_error", False, True),
    "ablation": ("iteration", "estimation_error", False, True),
    "sample_sweep": ("N", "estimation_error", True, True),
    "transfer": ("N", "estimation_error", True, True),
    "rip_check": ("N", "estimation_error", True, False),
    "curriculum": ("method", "estimation_error", False, False),
}


class SchemaError(ValueError):
    """A referenced column is missing from the CSV header."""

    def __init__(self, column: str, path: str = ""):
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")
        self.column = column


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: inputs, grouping, axes, and the output path."""

    csv_paths: tuple[str, ...]
    family: str
    out: str
    x: str | None = None
    y: str | None = None
    group_by: str = "method"
    logx: bool | None = None
    logy: bool | None = None
    methods: tuple[str, ...] = ()  # empty selects every method present
    dpi: int = 150

    def axes(self) -> tuple[str, str, bool, bool]:
        default = FAMILY_AXES.get(self.family, ("iteration", "estimation_error", False, True))
        x = self.x or default[0]
        y = self.y or default[1]
        logx = default[2] if self.logx is None else self.logx
        logy = default[3] if self.logy is None else self.logy
        return x, y, logx, logy


def load_rows(csv_paths, columns=SCHEMA) -> list[dict]:
    """Read and type the rows, validating that referenced columns exist."""
    rows: list[dict] = []
    for path in csv_paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in columns:
                if col not in header:
                    raise SchemaError(col, str(path))
            for raw in reader:
                row = dict(raw)
                for col in _NUMERIC:
                    if col in row and row[col] is not None:
                        row[col] = float(row[col])
                rows.append(row)
    return rows


def aggregate_series(rows, x: str, y: str, group_by: str = "method"):
    """Per group: sorted x values with the seed mean and min-max band of y.

    Returns ``{group: (xs, mean, lo, hi)}`` as float arrays.
    """
    if rows:
        for col in (x, y, group_by):
            if col not in rows[0]:
                raise SchemaError(col)
    buckets: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        val = row[y]
        if not np.isfinite(val):
            continue
        buckets.setdefault(str(row[group_by]), {}).setdefault(float(row[x]), []).append(val)
    out = {}
    for group, series in buckets.items():
        xs = np.array(sorted(series))
        mean = np.array([np.mean(series[v]) for v in xs])
        lo = np.array([np.min(series[v]) for v in xs])
        hi = np.array([np.max(series[v]) for v in xs])
        out[group] = (xs, mean, lo, hi)
    return out


def _final_iteration_rows(rows):
    # keep each (method, seed, N)'s last checkpoint only
    latest: dict[tuple, dict] = {}
    for row in rows:
        key = (row["method"], row["seed"], row["N"])
        if key not in latest or row["iteration"] > latest[key]["iteration"]:
            latest[key] = row
    return list(latest.values())


def _select(rows, spec: FigureSpec):
    if spec.family:
        rows = [r for r in rows if r["family"] == spec.family]
    if spec.methods:
        keep = set(spec.methods) | {THEORY_METHOD}
        rows = [r for r in rows if r["method"] in keep]
    return rows


def _atomic_save(fig, out: str, dpi: int) -> None:
    out_dir = os.path.dirname(os.path.abspath(out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(suffix=".png", dir=out_dir)
    try:
        with os.fdopen(fd, "wb") as fh:
            fig.savefig(fh, format="png", dpi=dpi)
        os.chmod(tmp, 0o644)  # mkstemp defaults to 0600
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render(spec: FigureSpec):
    """Draw the figure described by ``spec``, write it, return the Figure."""
    rows = _select(load_rows(spec.csv_paths), spec)
    x, y, logx, logy = spec.axes()
    if spec.family == "curriculum" and spec.x is None:
        fig = _render_bars(rows, y, spec)
    else:
        fig = _render_curves(rows, x, y, logx, logy, spec)
    _atomic_save(fig, spec.out, spec.dpi)
    return fig


def _render_curves(rows, x, y, logx, logy, spec: FigureSpec):
    if spec.family in ("sample_sweep", "transfer", "rip_check") and x != "iteration":
        rows = _final_iteration_rows(rows)
    series = aggregate_series(rows, x, y, spec.group_by)
    fig, ax = plt.subplots(figsize=(6, 4))
    for group in sorted(series):
        xs, mean, lo, hi = series[group]
        if group == THEORY_METHOD:
            ax.plot(xs, mean, linestyle="--", color="black", label=group)
        else:
            line, = ax.plot(xs, mean, label=group)
            ax.fill_between(xs, lo, hi, alpha=0.2, color=line.get_color())
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(spec.family)
    if series:
        ax.legend()
    fig.tight_layout()
    return fig


def _render_bars(rows, y, spec: FigureSpec):
    # aggregate rows (iteration == 0) carry each method's headline number
    rows = [r for r in rows if r["iteration"] == 0] or rows
    by_method: dict[str, list[float]] = {}
    for row in rows:
        if np.isfinite(row[y]):
            by_method.setdefault(str(row["method"]), []).append(row[y])
    fig, ax = plt.subplots(figsize=(5, 4))
    methods = sorted(by_method)
    means = [float(np.mean(by_method[m])) for m in methods]
    los = [means[i] - float(np.min(by_method[m])) for i, m in enumerate(methods)]
    his = [float(np.max(by_method[m])) - means[i] for i, m in enumerate(methods)]
    ax.bar(methods, means, yerr=[los, his], capsize=4, color="tab:blue", alpha=0.8)
    ax.set_ylabel(y)
    ax.set_title(spec.family)
    fig.tight_layout()
    return fig
