"""Top-1 / per-class / group metrics and decision-boundary grid export.

Group membership (Many/Medium/Few) is defined by TRAINING-set counts; pass
the training dataset's groups when evaluating on the balanced test set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset, Group
from .errors import ShapeError
from .model import DualBranchModel, plain_softmax

EVAL_MODES = ("fused", "conventional-branch", "rebalancing-branch")


@dataclass
class GroupedAccuracy:
    all: float
    many: float
    medium: float
    few: float
    per_class: np.ndarray

    def group_value(self, group: Group) -> float:
        return {Group.MANY: self.many, Group.MEDIUM: self.medium,
                Group.FEW: self.few}[group]


def _mode_logits(model, x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "fused":
        z, _ = model.infer(x)
        return z
    if mode not in EVAL_MODES:
        raise ShapeError(f"unknown evaluation mode {mode!r}")
    if not isinstance(model, DualBranchModel):
        raise ShapeError(f"mode {mode!r} requires a dual-branch model")
    branch = "head_c" if mode == "conventional-branch" else "head_r"
    return model.branch_logits(x, branch)


def evaluate(model, dataset_test: Dataset, mode: str = "fused",
             group_of_class: list[Group] | None = None) -> GroupedAccuracy:
    """Accuracy overall, per class, and per Many/Medium/Few group.

    ``group_of_class`` should come from the training dataset; it defaults to
    the test set's own (typically balanced) counts."""
    if model.num_classes != dataset_test.num_classes:
        raise ShapeError(
            f"model has {model.num_classes} classes, dataset has "
            f"{dataset_test.num_classes}")
    groups = group_of_class if group_of_class is not None else dataset_test.group_of_class
    if len(groups) != dataset_test.num_classes:
        raise ShapeError("group assignment length must equal num_classes")
    logits = _mode_logits(model, dataset_test.features, mode)
    pred = logits.argmax(axis=1)
    correct = pred == dataset_test.labels
    k = dataset_test.num_classes
    per_class = np.full(k, np.nan)
    for c in range(k):
        mask = dataset_test.labels == c
        if mask.any():
            per_class[c] = correct[mask].mean()

    def group_mean(group: Group) -> float:
        vals = [per_class[c] for c in range(k)
                if groups[c] is group and not np.isnan(per_class[c])]
        return float(np.mean(vals)) if vals else float("nan")

    return GroupedAccuracy(all=float(correct.mean()),
                           many=group_mean(Group.MANY),
                           medium=group_mean(Group.MEDIUM),
                           few=group_mean(Group.FEW),
                           per_class=per_class)


def save_grouped_accuracy_csv(acc: GroupedAccuracy, path) -> None:
    """One row per class plus summary rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "accuracy"])
        for c, v in enumerate(acc.per_class):
            writer.writerow([f"class_{c}", repr(float(v))])
        for name in ("all", "many", "medium", "few"):
            writer.writerow([name, repr(float(getattr(acc, name)))])


@dataclass
class BoundaryGrid:
    """Fused predictions over a regular grid spanning the data bounding box."""

    xs: np.ndarray           # resolution values along x
    ys: np.ndarray           # resolution values along y
    pred: np.ndarray         # (resolution, resolution) predicted class
    p0: np.ndarray           # (resolution, resolution) fused P(class 0)
    resolution: int
    margin: float


def export_boundary(model, dataset: Dataset, resolution: int,
                    margin: float = 0.5) -> BoundaryGrid:
    """Evaluate fused inference on a resolution x resolution grid covering
    the dataset bounding box expanded by ``margin`` on every side."""
    if dataset.dim != 2:
        raise ShapeError(
            f"boundary export needs 2-d features, got dim {dataset.dim}")
    if resolution < 2:
        raise ShapeError(f"resolution must be >= 2, got {resolution}")
    lo = dataset.features.min(axis=0) - margin
    hi = dataset.features.max(axis=0) + margin
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    z, probs = model.infer(pts)
    pred = z.argmax(axis=1).reshape(resolution, resolution)
    p0 = probs[:, 0].reshape(resolution, resolution)
    return BoundaryGrid(xs=xs, ys=ys, pred=pred, p0=p0,
                        resolution=resolution, margin=margin)


def save_boundary_csv(grid: BoundaryGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "pred", "p0"])
        for i, x in enumerate(grid.xs):
            for j, y in enumerate(grid.ys):
                writer.writerow([repr(float(x)), repr(float(y)),
                                 int(grid.pred[i, j]), repr(float(grid.p0[i, j]))])
