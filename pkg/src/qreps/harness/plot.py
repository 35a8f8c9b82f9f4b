"""Mean curves with a one-standard-deviation band, rendered to SVG."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from .records import HEADER

__all__ = ["SchemaError", "load_curves", "plot_curves", "render_svg"]


class SchemaError(ValueError):
    pass


def load_curves(csv_path, group_by=("env", "algorithm"), prefix: str | None = None):
    """Group CSV rows into ``{label: (iterations, mean, std)}`` using population std over seeds."""
    path = Path(csv_path)
    text = path.read_text() if path.exists() else ""
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise SchemaError(f"{csv_path}: empty file")
    if tuple(rows[0]) != HEADER:
        raise SchemaError(f"{csv_path}: header must be {','.join(HEADER)}")
    if len(rows) == 1:
        raise SchemaError(f"{csv_path}: no data rows")
    col = {name: i for i, name in enumerate(HEADER)}
    series = defaultdict(lambda: defaultdict(list))
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(HEADER):
            raise SchemaError(f"{csv_path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
        try:
            it = int(row[col["iteration"]])
            value = float(row[col["return_normalized"]])
        except ValueError:
            raise SchemaError(f"{csv_path}:{lineno}: non-numeric iteration or return") from None
        label = " / ".join([prefix] * bool(prefix) + [row[col[g]] for g in group_by])
        series[label][it].append(value)
    out = {}
    for label, by_it in sorted(series.items()):
        its = np.array(sorted(by_it))
        vals = [np.asarray(by_it[i]) for i in its]
        out[label] = (its, np.array([v.mean() for v in vals]), np.array([v.std() for v in vals]))
    return out


def plot_curves(curves, out_path, title=None, xlabel="iteration", ylabel="normalized return", log=False) -> Path:
    """Draw ``{label: (x, mean, std)}`` as lines with shaded bands and save as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed salt so the generated element ids repeat between runs
    matplotlib.rcParams["svg.hashsalt"] = "qreps"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, (xs, mean, std) in curves.items():
        (line,) = ax.plot(xs, mean, label=label, linewidth=1.5, marker="o" if log else None)
        ax.fill_between(xs, mean - std, mean + std, color=line.get_color(), alpha=0.25, linewidth=0)
    if log:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the output byte-stable
    fig.savefig(out_path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return out_path


def render_svg(csv_path, out_path, title: str | None = None, ylabel: str = "normalized return", labels=None) -> Path:
    """Plot one CSV, or several with ``labels`` prefixed to their series names."""
    paths = [csv_path] if isinstance(csv_path, (str, Path)) else list(csv_path)
    labels = labels or [None] * len(paths)
    curves = {}
    for path, prefix in zip(paths, labels):
        curves.update(load_curves(path, prefix=prefix))
    return plot_curves(curves, out_path, title=title, ylabel=ylabel)
