"""File-to-file figure rendering.

Inputs are the CSV artifacts exported by the training package: decision
grids (`x,y,pred,p0`), training points (`f0,f1,label`), and sweep tables
(`eta,epsilon,alpha,gamma,seed,accuracy,error`). No metric is computed
here; every number plotted comes straight out of a CSV.
"""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SWEEP_PARAMS = ("eta", "epsilon", "alpha", "gamma")

# Fig.-1 palette: majority class blue, minority red, extras from tab10
CLASS_COLORS = ["#4878cf", "#d65f5f", "#6acc65", "#956cb4", "#c4ad66",
                "#77bedb", "#8c613c", "#dc7ec0", "#797979", "#d5bb67"]
BACKGROUND_ALPHA = 0.45


class SchemaError(Exception):
    """A CSV file does not match the expected schema."""


def _parse_float(text: str, path, lineno: int) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError as exc:
        raise SchemaError(f"{path}: line {lineno}: bad number {text!r}") from exc


def read_boundary_csv(path):
    """Returns (xs, ys, pred, p0) with pred/p0 shaped (len(xs), len(ys))."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "y", "pred", "p0"]:
            raise SchemaError(f"{path}: expected header x,y,pred,p0, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise SchemaError(f"{path}: line {lineno}: expected 4 fields")
            x = _parse_float(row[0], path, lineno)
            y = _parse_float(row[1], path, lineno)
            try:
                pred = int(row[2])
            except ValueError as exc:
                raise SchemaError(f"{path}: line {lineno}: bad class {row[2]!r}") from exc
            p0 = _parse_float(row[3], path, lineno)
            rows.append((x, y, pred, p0))
    if not rows:
        raise SchemaError(f"{path}: no grid rows")
    xs = np.unique([r[0] for r in rows])
    ys = np.unique([r[1] for r in rows])
    if len(rows) != xs.size * ys.size:
        raise SchemaError(
            f"{path}: {len(rows)} rows do not fill a {xs.size}x{ys.size} grid")
    pred = np.zeros((xs.size, ys.size), dtype=np.int64)
    p0 = np.zeros((xs.size, ys.size))
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    for x, y, cls, prob in rows:
        pred[xi[x], yi[y]] = cls
        p0[xi[x], yi[y]] = prob
    return xs, ys, pred, p0


def read_points_csv(path):
    """Returns (points Nx2, labels N); an empty file yields zero points."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
        if len(header) < 3 or header[-1] != "label" or header[0] != "f0":
            raise SchemaError(
                f"{path}: expected header f0,...,label, got {header}")
        pts, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: line {lineno}: ragged row")
            pts.append((_parse_float(row[0], path, lineno),
                        _parse_float(row[1], path, lineno)))
            try:
                labels.append(int(row[-1]))
            except ValueError as exc:
                raise SchemaError(f"{path}: line {lineno}: bad label {row[-1]!r}") from exc
    if not pts:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    return np.asarray(pts), np.asarray(labels, dtype=np.int64)


def read_sweep_csv(path):
    """Returns the sweep table as a list of dicts with numeric values."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in (*SWEEP_PARAMS, "accuracy")
                   if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing sweep columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            parsed = {name: _parse_float(row[name], path, lineno)
                      for name in (*SWEEP_PARAMS, "accuracy")}
            parsed["error"] = row.get("error", "") or ""
            rows.append(parsed)
    if not rows:
        raise SchemaError(f"{path}: no sweep rows")
    return rows


def _style(fixed_style: bool):
    return dict(figsize=(6.4, 4.8), dpi=100) if fixed_style else dict(figsize=(6.4, 4.8))


def _save(fig, out_image, fixed_style: bool) -> None:
    metadata = {"Software": None} if fixed_style else None
    fig.savefig(out_image, metadata=metadata)


def _format_value(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if value == int(value):
        return str(int(value))
    return f"{value:g}"


def render_boundary(grid_csv, points_csv, out_image, fixed_style: bool = False,
                    title: str | None = None):
    """Class-shaded background from the decision grid with the training
    scatter on top; returns the figure after saving it."""
    xs, ys, pred, _ = read_boundary_csv(grid_csv)
    points, labels = read_points_csv(points_csv)
    num_classes = max(int(pred.max()) + 1,
                      int(labels.max()) + 1 if labels.size else 1)
    colors = [CLASS_COLORS[k % len(CLASS_COLORS)] for k in range(num_classes)]

    fig, ax = plt.subplots(**_style(fixed_style))
    cmap = matplotlib.colors.ListedColormap(colors)
    ax.pcolormesh(xs, ys, pred.T, cmap=cmap, vmin=-0.5, vmax=num_classes - 0.5,
                  alpha=BACKGROUND_ALPHA, shading="nearest")
    for k in range(num_classes):
        mask = labels == k
        if mask.any():
            ax.scatter(points[mask, 0], points[mask, 1], marker="x", s=18,
                       linewidths=1.0, color=colors[k], label=f"class {k}")
    ax.set_xlim(xs[0], xs[-1])
    ax.set_ylim(ys[0], ys[-1])
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    if labels.size:
        ax.legend(loc="upper right", fontsize=8)
    _save(fig, out_image, fixed_style)
    return fig


def render_sweep(sweep_csv, x_axis: str, out_image, fixed_style: bool = False):
    """Accuracy against one swept parameter, one curve per combination of the
    other parameters that vary in the table; returns the figure."""
    if x_axis not in SWEEP_PARAMS:
        raise SchemaError(f"x axis must be one of {SWEEP_PARAMS}, got {x_axis!r}")
    rows = read_sweep_csv(sweep_csv)
    varying = [p for p in SWEEP_PARAMS if p != x_axis
               and len({row[p] for row in rows}) > 1]

    x_values = sorted({row[x_axis] for row in rows})
    positions = {v: i for i, v in enumerate(x_values)}
    categorical = any(math.isinf(v) for v in x_values)

    fig, ax = plt.subplots(**_style(fixed_style))
    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault(tuple(row[p] for p in varying), []).append(row)
    for key in sorted(groups):
        series = sorted(groups[key], key=lambda r: positions[r[x_axis]])
        xs = [positions[r[x_axis]] if categorical else r[x_axis] for r in series]
        accs = [r["accuracy"] for r in series]
        label = ", ".join(f"{p}={_format_value(v)}" for p, v in zip(varying, key))
        ax.plot(xs, accs, marker="o", label=label or None)
    if categorical:
        ax.set_xticks(range(len(x_values)))
        ax.set_xticklabels([_format_value(v) for v in x_values])
    ax.set_xlabel(x_axis)
    ax.set_ylabel("balanced accuracy")
    if varying:
        ax.legend(fontsize=8)
    _save(fig, out_image, fixed_style)
    return fig
