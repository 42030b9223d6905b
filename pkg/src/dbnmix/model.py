"""Dual-branch network, class-wise temperature scaling, loss, and inference.

Training forward: z_c = head_c(backbone(x_c)), z_r = head_r(backbone(x_r));
both logits pass through a temperature-scaled softmax and the total loss is
the mean of the two branch cross-entropies. Inference averages the two
branch logits with equal weights and applies a plain softmax; temperature
scaling never enters the inference path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ConfigError, ParseError, ShapeError
from .numerics import ParamStore, Tensor, constant, kaiming_uniform

CHECKPOINT_MAGIC = b"DBNM"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """MLP layout: ReLU backbone plus one linear (optionally deeper) head
    per branch. The default backbone is two hidden layers of 64 units, so a
    single-linear head yields a three-layer network."""

    in_dim: int
    num_classes: int
    hidden: tuple[int, ...] = (64, 64)
    head_hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.in_dim < 1 or self.num_classes < 2:
            raise ConfigError(
                f"need in_dim >= 1 and num_classes >= 2, got {self.in_dim}, "
                f"{self.num_classes}")
        if any(h < 1 for h in self.hidden) or any(h < 1 for h in self.head_hidden):
            raise ConfigError("hidden layer widths must be positive")


@dataclass(frozen=True)
class TemperatureSchedule:
    """Per-class temperatures: B_k = eps * N_k / N_max + (1 - eps),
    T_k = (max(B) / B_k)^(1/eta). The largest class gets exactly T = 1."""

    eta: float
    epsilon: float
    class_counts: tuple[int, ...]
    b: np.ndarray
    t: np.ndarray


def temperatures(eta: float, epsilon: float, class_counts) -> TemperatureSchedule:
    if not eta > 0.0:
        raise ConfigError(f"eta must be positive, got {eta}")
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0 or np.any(counts < 1):
        raise ConfigError(f"class counts must be positive, got {class_counts}")
    b = epsilon * counts / counts.max() + (1.0 - epsilon)
    t = (b.max() / b) ** (1.0 / eta)
    return TemperatureSchedule(eta=eta, epsilon=epsilon,
                               class_counts=tuple(int(c) for c in counts),
                               b=b, t=t)


def uniform_schedule(num_classes: int) -> TemperatureSchedule:
    """All-ones temperatures; scaled_softmax degenerates to plain softmax."""
    return TemperatureSchedule(eta=1.0, epsilon=1.0,
                               class_counts=tuple([1] * num_classes),
                               b=np.ones(num_classes), t=np.ones(num_classes))


def scaled_softmax(z: Tensor, schedule: TemperatureSchedule) -> Tensor:
    """Temperature-scaled softmax on the tape; rows sum to 1."""
    return numerics.scaled_softmax_op(z, schedule.t)


def plain_softmax(z: np.ndarray) -> np.ndarray:
    s = z - z.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def dbn_loss(p_c: Tensor, y_c: np.ndarray, p_r: Tensor, y_r: np.ndarray) -> Tensor:
    """Equal-weight mean of the two branch soft-label cross-entropies."""
    loss_c = numerics.soft_cross_entropy(p_c, y_c)
    loss_r = numerics.soft_cross_entropy(p_r, y_r)
    return numerics.add(numerics.scale(loss_c, 0.5), numerics.scale(loss_r, 0.5))


def _init_mlp(store: ParamStore, prefix: str, dims: list[int],
              rng: np.random.Generator) -> None:
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        store.add(f"{prefix}.w{i}", kaiming_uniform(rng, a, b))
        store.add(f"{prefix}.b{i}", np.zeros(b))


def _apply_mlp(store: ParamStore, prefix: str, n_layers: int, x: Tensor,
               relu_last: bool) -> Tensor:
    out = x
    for i in range(n_layers):
        out = numerics.linear(out, store[f"{prefix}.w{i}"], store[f"{prefix}.b{i}"])
        if relu_last or i < n_layers - 1:
            out = numerics.relu(out)
    return out


class _MlpBase:
    """Shared backbone plumbing for the single- and dual-branch models."""

    kind = ""

    def __init__(self, spec: NetworkSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.store = ParamStore()
        self._rng = np.random.default_rng(seed)
        self._backbone_dims = [spec.in_dim, *spec.hidden]
        _init_mlp(self.store, "backbone", self._backbone_dims, self._rng)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.in_dim:
            raise ShapeError(
                f"expected input of shape (batch, {self.spec.in_dim}), got {x.shape}")
        return x

    def backbone(self, x: Tensor) -> Tensor:
        return _apply_mlp(self.store, "backbone",
                          len(self._backbone_dims) - 1, x, relu_last=True)

    def _head(self, name: str, h: Tensor) -> Tensor:
        n_layers = len(self.spec.head_hidden) + 1
        return _apply_mlp(self.store, name, n_layers, h, relu_last=False)

    def _add_head(self, name: str) -> None:
        feat = self._backbone_dims[-1]
        dims = [feat, *self.spec.head_hidden, self.spec.num_classes]
        _init_mlp(self.store, name, dims, self._rng)


class DualBranchModel(_MlpBase):
    """Shared backbone with a conventional head and a re-balancing head."""

    kind = "dbn"

    def __init__(self, spec: NetworkSpec, seed: int):
        super().__init__(spec, seed)
        self._add_head("head_c")
        self._add_head("head_r")

    def forward_train(self, x_c, x_r) -> tuple[Tensor, Tensor]:
        """Branch logits for the two mixed batches; backbone gradients will
        accumulate contributions from both branches."""
        z_c = self._head("head_c", self.backbone(constant(self._check_input(x_c))))
        z_r = self._head("head_r", self.backbone(constant(self._check_input(x_r))))
        return z_c, z_r

    def branch_logits(self, x, branch: str) -> np.ndarray:
        if branch not in ("head_c", "head_r"):
            raise ConfigError(f"unknown branch {branch!r}")
        h = self.backbone(constant(self._check_input(x)))
        return self._head(branch, h).array

    def infer(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Equal-weight fused logits and plain softmax probabilities."""
        h = self.backbone(constant(self._check_input(x)))
        z_c = self._head("head_c", h).array
        z_r = self._head("head_r", h).array
        z = 0.5 * (z_c + z_r)
        return z, plain_softmax(z)


class SingleBranchModel(_MlpBase):
    """Common single-head network for the ERM / mixup / SBN-Mix baselines."""

    kind = "sbn"

    def __init__(self, spec: NetworkSpec, seed: int):
        super().__init__(spec, seed)
        self._add_head("head")

    def forward(self, x) -> Tensor:
        return self._head("head", self.backbone(constant(self._check_input(x))))

    def infer(self, x) -> tuple[np.ndarray, np.ndarray]:
        z = self.forward(x).array
        return z, plain_softmax(z)


def sbn_forward_train(model: SingleBranchModel, x, y,
                      schedule: TemperatureSchedule | None = None,
                      ) -> tuple[Tensor, Tensor]:
    """Scaled probabilities and cross-entropy loss for the single branch.

    ``schedule=None`` disables temperature scaling (plain softmax)."""
    if schedule is None:
        schedule = uniform_schedule(model.num_classes)
    z = model.forward(x)
    p = scaled_softmax(z, schedule)
    loss = numerics.soft_cross_entropy(p, y)
    return p, loss


def save_checkpoint(model, path, extra_config: dict | None = None) -> None:
    """Packed-binary checkpoint: architecture echo plus all parameters."""
    echo = {
        "kind": model.kind,
        "in_dim": model.spec.in_dim,
        "num_classes": model.spec.num_classes,
        "hidden": list(model.spec.hidden),
        "head_hidden": list(model.spec.head_hidden),
        "seed": model.seed,
        "extra": extra_config or {},
    }
    blob = json.dumps(echo, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        names = model.store.names()
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            raw = name.encode()
            arr = np.ascontiguousarray(model.store[name].array, dtype="<f8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, extra_config)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    (echo_len,) = struct.unpack_from("<I", blob, 6)
    offset = 10
    echo = json.loads(blob[offset:offset + echo_len].decode())
    offset += echo_len
    spec = NetworkSpec(in_dim=echo["in_dim"], num_classes=echo["num_classes"],
                       hidden=tuple(echo["hidden"]),
                       head_hidden=tuple(echo["head_hidden"]))
    cls = DualBranchModel if echo["kind"] == "dbn" else SingleBranchModel
    model = cls(spec, seed=echo["seed"])
    (n_params,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode()
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        if name not in model.store or model.store[name].array.shape != tuple(shape):
            raise ParseError(f"{path}: unexpected parameter {name!r} {shape}")
        model.store[name].array[...] = arr.reshape(shape)
    if offset != len(blob):
        raise ParseError(f"{path}: {len(blob) - offset} trailing bytes")
    return model, echo["extra"]
