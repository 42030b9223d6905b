"""Uniform and re-balanced mini-batch samplers.

The re-balanced sampler picks class k with probability
P_k = w_k / sum_j w_j where w_k = (N_max / N_k)^(1/gamma), then an instance
uniformly within the class. gamma = math.inf is the exact class-balanced
case P_k = 1/K. Both samplers draw with replacement; an epoch is
ceil(N / B) batches (floor with drop_last) so paired samplers stay in step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .errors import ConfigError, DatasetError


@dataclass(frozen=True)
class RebalancedSamplerConfig:
    gamma: float = math.inf

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class BatchSpec:
    batch_size: int = 128
    seed: int = 0
    drop_last: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class Batch:
    """Feature rows paired with one-hot (or, after mixup, soft) label rows."""

    x: np.ndarray
    y: np.ndarray


def sampler_distribution(config: RebalancedSamplerConfig, counts) -> np.ndarray:
    """Exact class-pick probabilities P_k for the given class counts."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 1):
        raise DatasetError(f"all class counts must be >= 1, got {counts}")
    k = counts.shape[0]
    if math.isinf(config.gamma):
        return np.full(k, 1.0 / k)
    w = (counts.max() / counts) ** (1.0 / config.gamma)
    return w / w.sum()


def batches_per_epoch(num_samples: int, spec: BatchSpec) -> int:
    if spec.drop_last:
        return max(1, num_samples // spec.batch_size)
    return max(1, math.ceil(num_samples / spec.batch_size))


class UniformSampler:
    """Draws each instance i.i.d. with probability 1/N, with replacement."""

    def __init__(self, dataset: Dataset, spec: BatchSpec):
        if dataset.num_samples == 0:
            raise DatasetError("cannot sample from an empty dataset")
        self._features = dataset.features
        self._onehot = dataset.one_hot_labels()
        self._n = dataset.num_samples
        self._rng = np.random.default_rng(spec.seed)
        self.batches_per_epoch = batches_per_epoch(dataset.num_samples, spec)
        self._batch_size = spec.batch_size

    def next_batch(self) -> Batch:
        idx = self._rng.integers(0, self._n, size=self._batch_size)
        return Batch(self._features[idx], self._onehot[idx])


class RebalancedSampler:
    """Draws a class by P_k, then an instance uniformly within that class."""

    def __init__(self, dataset: Dataset, config: RebalancedSamplerConfig,
                 spec: BatchSpec):
        if np.any(dataset.class_counts < 1):
            empty = np.flatnonzero(dataset.class_counts < 1)
            raise DatasetError(f"classes {empty.tolist()} have no samples")
        self._features = dataset.features
        self._onehot = dataset.one_hot_labels()
        self.probabilities = sampler_distribution(config, dataset.class_counts)
        order = np.argsort(dataset.labels, kind="stable")
        self._sorted_idx = order
        self._class_start = np.concatenate(
            [[0], np.cumsum(dataset.class_counts)[:-1]])
        self._counts = dataset.class_counts
        self._rng = np.random.default_rng(spec.seed)
        self.batches_per_epoch = batches_per_epoch(dataset.num_samples, spec)
        self._batch_size = spec.batch_size

    def next_batch(self) -> Batch:
        ks = self._rng.choice(self.probabilities.shape[0],
                              size=self._batch_size, p=self.probabilities)
        offsets = self._rng.integers(0, self._counts[ks])
        idx = self._sorted_idx[self._class_start[ks] + offsets]
        return Batch(self._features[idx], self._onehot[idx])
