"""Mixup family: classic mixup, bilateral mixup, and the single-branch mix.

All three draw lambda ~ Beta(alpha, alpha). Bilateral mixup splits it into
lambda_c = max(lambda, 1 - lambda) and lambda_r = 1 - lambda_c, so the
conventional-branch sample is always dominated by the uniform-sampler parent
and the re-balancing-branch sample by the re-balanced parent, and
lambda_c + lambda_r == 1 holds exactly in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .sampling import Batch


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 1.0
    per_example: bool = True   # one lambda per batch row; False: one per batch

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class MixCoefficients:
    lam: float
    lam_c: float
    lam_r: float

    @classmethod
    def from_lambda(cls, lam: float) -> "MixCoefficients":
        lam_c = max(lam, 1.0 - lam)
        return cls(lam=lam, lam_c=lam_c, lam_r=1.0 - lam_c)


@dataclass
class MixedBatch:
    """Convex combinations: soft label rows sum to 1, at most two nonzeros."""

    x: np.ndarray
    y: np.ndarray


def draw_coefficients(config: MixupConfig, rng: np.random.Generator) -> MixCoefficients:
    return MixCoefficients.from_lambda(float(rng.beta(config.alpha, config.alpha)))


def _draw_lambdas(config: MixupConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if config.per_example:
        return rng.beta(config.alpha, config.alpha, size=n)
    return np.full(n, rng.beta(config.alpha, config.alpha))


def _check_pair(a: Batch | MixedBatch, b: Batch | MixedBatch) -> None:
    if a.x.shape != b.x.shape or a.y.shape != b.y.shape:
        raise ShapeError(
            f"batch shape mismatch: ({a.x.shape}, {a.y.shape}) vs "
            f"({b.x.shape}, {b.y.shape})")


def _combine(a: Batch | MixedBatch, b: Batch | MixedBatch,
             coeff_a: np.ndarray, coeff_b: np.ndarray) -> MixedBatch:
    ca = coeff_a[:, None]
    cb = coeff_b[:, None]
    return MixedBatch(x=ca * a.x + cb * b.x, y=ca * a.y + cb * b.y)


def mixup_classic(batch_i: Batch, batch_j: Batch, config: MixupConfig,
                  rng: np.random.Generator) -> MixedBatch:
    """Original mixup: lambda * (x_i, y_i) + (1 - lambda) * (x_j, y_j)."""
    _check_pair(batch_i, batch_j)
    lam = _draw_lambdas(config, rng, batch_i.x.shape[0])
    return _combine(batch_i, batch_j, lam, 1.0 - lam)


def bilateral_mix(uniform_batch: Batch, rebalanced_batch: Batch,
                  config: MixupConfig, rng: np.random.Generator,
                  ) -> tuple[MixedBatch, MixedBatch]:
    """One lambda draw per example yields both branch samples."""
    _check_pair(uniform_batch, rebalanced_batch)
    lam = _draw_lambdas(config, rng, uniform_batch.x.shape[0])
    lam_c = np.maximum(lam, 1.0 - lam)
    lam_r = 1.0 - lam_c
    conventional = _combine(uniform_batch, rebalanced_batch, lam_c, lam_r)
    rebalancing = _combine(uniform_batch, rebalanced_batch, lam_r, lam_c)
    return conventional, rebalancing


def sbn_mix(uniform_batch: Batch, rebalanced_batch: Batch, config: MixupConfig,
            rng: np.random.Generator) -> MixedBatch:
    """Single-branch variant: combine with the raw lambda, no max/min split."""
    _check_pair(uniform_batch, rebalanced_batch)
    lam = _draw_lambdas(config, rng, uniform_batch.x.shape[0])
    return _combine(uniform_batch, rebalanced_batch, lam, 1.0 - lam)
