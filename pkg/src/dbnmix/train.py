"""End-to-end training: samplers -> mixup -> dual/single branch -> loss -> SGD.

Methods:
  erm      uniform sampling, plain cross-entropy, single branch
  mixup    classic mixup between two uniform batches, single branch
  sbn-mix  single branch fed the raw-lambda mix of a uniform and a
           re-balanced batch, temperature-scaled softmax in training
  dbn      dual branch on raw uniform/re-balanced batches; the
           bilateral_mixup and temperature_scaling toggles switch the two
           pipeline stages on independently
  dbn-mix  dbn with both toggles on

Every run is fully determined by (seed, config): the model init, both
samplers, and the mixup draws use independent streams derived from the seed.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .augment import MixupConfig, bilateral_mix, mixup_classic, sbn_mix
from .datasets import Dataset
from .errors import ConfigError, NumericError
from .evaluate import GroupedAccuracy, evaluate
from .model import (DualBranchModel, NetworkSpec, SingleBranchModel,
                    dbn_loss, sbn_forward_train, scaled_softmax, temperatures,
                    uniform_schedule)
from .numerics import SgdConfig
from .sampling import (BatchSpec, RebalancedSampler, RebalancedSamplerConfig,
                       UniformSampler)

METHODS = ("erm", "mixup", "sbn-mix", "dbn", "dbn-mix")
SWEEPABLE = ("eta", "epsilon", "alpha", "gamma")


@dataclass(frozen=True)
class TrainConfig:
    """Run configuration; defaults follow the small-image training recipe
    (batch 128, 200 epochs, SGD momentum 0.9, weight decay 2e-4, learning
    rate 0.1 decayed by 0.1 at epochs 120 and 160, gamma = inf, alpha = 1,
    eta = 3, epsilon = 0.6)."""

    method: str = "dbn-mix"
    epochs: int = 200
    batch_size: int = 128
    drop_last: bool = False
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 2e-4
    decay_epochs: tuple[int, ...] = (120, 160)
    decay_factor: float = 0.1
    alpha: float = 1.0
    gamma: float = math.inf
    eta: float = 3.0
    epsilon: float = 0.6
    hidden: tuple[int, ...] = (64, 64)
    head_hidden: tuple[int, ...] = ()
    per_example_lambda: bool = True
    seed: int = 0
    bilateral_mixup: bool | None = None
    temperature_scaling: bool | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        self.resolved_toggles()  # validates the combination
        # range checks for the optimizer happen in SgdConfig
        self.sgd_config()

    def resolved_toggles(self) -> tuple[bool, bool]:
        """(bilateral_mixup, temperature_scaling) after method defaults."""
        bm, ts = self.bilateral_mixup, self.temperature_scaling
        if self.method in ("erm", "mixup"):
            if bm is not None or ts is not None:
                raise ConfigError(
                    f"toggles are only meaningful for dbn/sbn methods, not "
                    f"{self.method!r}")
            return False, False
        if self.method == "dbn":
            return bool(bm), bool(ts)
        # sbn-mix and dbn-mix default to both stages on
        if self.method == "dbn-mix" and (bm is False or ts is False):
            raise ConfigError(
                "dbn-mix runs with both stages on; use method 'dbn' with "
                "explicit toggles for ablations")
        return (True if bm is None else bm), (True if ts is None else ts)

    def sgd_config(self) -> SgdConfig:
        return SgdConfig(learning_rate=self.learning_rate, momentum=self.momentum,
                         weight_decay=self.weight_decay,
                         decay_epochs=tuple(self.decay_epochs),
                         decay_factor=self.decay_factor)

    def echo(self) -> dict:
        """JSON-safe dict of the configuration (inf spelled 'inf')."""
        d = dataclasses.asdict(self)
        d["gamma"] = "inf" if math.isinf(self.gamma) else self.gamma
        d["decay_epochs"] = list(self.decay_epochs)
        d["hidden"] = list(self.hidden)
        d["head_hidden"] = list(self.head_hidden)
        bm, ts = self.resolved_toggles()
        d["bilateral_mixup"], d["temperature_scaling"] = bm, ts
        return d


@dataclass
class RunRecord:
    method: str
    seed: int
    config: dict
    train_loss: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    final: GroupedAccuracy | None = None
    wall_clock: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "test_accuracy"])
            for e, (tl, ta) in enumerate(zip(self.train_loss, self.test_accuracy)):
                writer.writerow([e, repr(tl), repr(ta)])

    def write_summary(self, path) -> None:
        summary = {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "wall_clock_seconds": self.wall_clock,
            "final": None if self.final is None else {
                "all": self.final.all,
                "many": self.final.many,
                "medium": self.final.medium,
                "few": self.final.few,
                "per_class": [float(v) for v in self.final.per_class],
            },
        }
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_seeds(seed: int) -> tuple[int, int, int, int]:
    """Independent (init, uniform-sampler, re-balanced-sampler, mixup) seeds."""
    state = np.random.SeedSequence(seed).generate_state(4)
    return tuple(int(s) for s in state)


def build_model(config: TrainConfig, dataset: Dataset):
    init_seed, _, _, _ = run_seeds(config.seed)
    spec = NetworkSpec(in_dim=dataset.dim, num_classes=dataset.num_classes,
                       hidden=tuple(config.hidden),
                       head_hidden=tuple(config.head_hidden))
    if config.method in ("dbn", "dbn-mix"):
        return DualBranchModel(spec, seed=init_seed)
    return SingleBranchModel(spec, seed=init_seed)


def _notify(observer, epoch, step, stage, payload) -> None:
    if observer is not None:
        observer(epoch, step, stage, payload)


def train_run(config: TrainConfig, dataset_train: Dataset, dataset_test: Dataset,
              observer=None) -> tuple[RunRecord, object]:
    """Train one model; returns (record, model).

    ``observer(epoch, step, stage, payload)`` is called with the pipeline
    stage inputs/outputs ('batches', 'mixed', 'logits', 'probabilities',
    'loss') so tests can intercept individual stages."""
    start = time.perf_counter()
    bm, ts = config.resolved_toggles()
    _, uni_seed, reb_seed, mix_seed = run_seeds(config.seed)
    model = build_model(config, dataset_train)
    uses_rebalanced = config.method in ("sbn-mix", "dbn", "dbn-mix")

    uniform = UniformSampler(dataset_train, BatchSpec(
        batch_size=config.batch_size, seed=uni_seed, drop_last=config.drop_last))
    rebalanced = None
    if uses_rebalanced:
        rebalanced = RebalancedSampler(
            dataset_train, RebalancedSamplerConfig(gamma=config.gamma),
            BatchSpec(batch_size=config.batch_size, seed=reb_seed,
                      drop_last=config.drop_last))

    mix_rng = np.random.default_rng(mix_seed)
    mix_config = MixupConfig(alpha=config.alpha,
                             per_example=config.per_example_lambda)
    schedule = (temperatures(config.eta, config.epsilon, dataset_train.class_counts)
                if ts else uniform_schedule(dataset_train.num_classes))
    sgd = config.sgd_config()

    record = RunRecord(method=config.method, seed=config.seed, config=config.echo())
    dual = isinstance(model, DualBranchModel)
    train_groups = dataset_train.group_of_class

    for epoch in range(config.epochs):
        losses = []
        for step in range(uniform.batches_per_epoch):
            try:
                loss = _train_step(config, model, uniform, rebalanced, mix_rng,
                                   mix_config, schedule, bm, ts, observer,
                                   epoch, step)
                value = loss.item()
                _notify(observer, epoch, step, "loss", value)
                model.store.zero_grad()
                numerics.backward(loss)
                numerics.sgd_step(model.store, sgd, epoch)
            except NumericError as exc:
                raise NumericError(
                    f"aborting run: non-finite value at epoch {epoch} step "
                    f"{step} (method={config.method}, seed={config.seed}): {exc}"
                ) from exc
            losses.append(value)
        record.train_loss.append(float(np.mean(losses)))
        acc = evaluate(model, dataset_test, mode="fused",
                       group_of_class=train_groups)
        record.test_accuracy.append(acc.all)
        record.final = acc

    record.wall_clock = time.perf_counter() - start
    return record, model


def _train_step(config, model, uniform, rebalanced, mix_rng, mix_config,
                schedule, bm, ts, observer, epoch, step):
    method = config.method
    if method == "erm":
        batch = uniform.next_batch()
        _notify(observer, epoch, step, "batches", (batch,))
        _, loss = sbn_forward_train(model, batch.x, batch.y, schedule=None)
        return loss

    if method == "mixup":
        batch_i = uniform.next_batch()
        batch_j = uniform.next_batch()
        _notify(observer, epoch, step, "batches", (batch_i, batch_j))
        mixed = mixup_classic(batch_i, batch_j, mix_config, mix_rng)
        _notify(observer, epoch, step, "mixed", (mixed,))
        _, loss = sbn_forward_train(model, mixed.x, mixed.y, schedule=None)
        return loss

    batch_c = uniform.next_batch()
    batch_r = rebalanced.next_batch()
    _notify(observer, epoch, step, "batches", (batch_c, batch_r))

    if method == "sbn-mix":
        mixed = (sbn_mix(batch_c, batch_r, mix_config, mix_rng) if bm
                 else batch_c)
        _notify(observer, epoch, step, "mixed", (mixed,))
        p, loss = sbn_forward_train(model, mixed.x, mixed.y,
                                    schedule=schedule if ts else None)
        _notify(observer, epoch, step, "probabilities", (p.array,))
        return loss

    # dbn / dbn-mix
    if bm:
        mixed_c, mixed_r = bilateral_mix(batch_c, batch_r, mix_config, mix_rng)
    else:
        mixed_c, mixed_r = batch_c, batch_r
    _notify(observer, epoch, step, "mixed", (mixed_c, mixed_r))
    z_c, z_r = model.forward_train(mixed_c.x, mixed_r.x)
    _notify(observer, epoch, step, "logits", (z_c.array, z_r.array))
    p_c = scaled_softmax(z_c, schedule)
    p_r = scaled_softmax(z_r, schedule)
    _notify(observer, epoch, step, "probabilities", (p_c.array, p_r.array))
    return dbn_loss(p_c, mixed_c.y, p_r, mixed_r.y)


def _sweep_cell(args):
    base, overrides, dataset_train, dataset_test = args
    row = {name: getattr(base, name) for name in SWEEPABLE}
    row.update(overrides)
    row["seed"] = base.seed
    row["accuracy"] = float("nan")
    try:
        config = dataclasses.replace(base, **overrides)
        record, _ = train_run(config, dataset_train, dataset_test)
        row["accuracy"] = record.final.all
        row["error"] = ""
    except Exception as exc:  # keep sweeping; the cell records its failure
        row["error"] = str(exc)
    return row


def sweep(base: TrainConfig, grid: dict[str, list], dataset_train: Dataset,
          dataset_test: Dataset, jobs: int = 1) -> list[dict]:
    """One seeded run per grid cell; failures are recorded, not raised."""
    for name in grid:
        if name not in SWEEPABLE:
            raise ConfigError(
                f"cannot sweep {name!r}; sweepable parameters: {SWEEPABLE}")
    axes = list(grid.items())
    if not axes:
        return []
    cells = []
    for values in itertools.product(*(vals for _, vals in axes)):
        overrides = dict(zip((name for name, _ in axes), values))
        cells.append((base, overrides, dataset_train, dataset_test))
    if not cells:
        return []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(cell) for cell in cells]


def format_param(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return repr(value) if isinstance(value, float) else str(value)


def save_sweep_csv(rows: list[dict], path) -> None:
    columns = [*SWEEPABLE, "seed", "accuracy", "error"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_param(row[c]) for c in columns])
