"""Dense float64 tensors with reverse-mode autodiff, plus SGD with momentum.

The computation graph is a tape of `Tensor` nodes built by the op functions
below (`linear`, `relu`, `scaled_softmax`, ...). Calling `backward` on a
scalar loss walks the tape in reverse topological order and accumulates
d(loss)/d(param) into every reachable parameter. Every op validates that its
output is finite; NaN/Inf raises `NumericError` instead of propagating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError


def _as_f64(array) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(array, dtype=np.float64))


def _check_finite(arr: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {context}")
    return arr


class Tensor:
    """A node of the recorded computation.

    Wraps a C-contiguous float64 array. Leaf tensors created with
    ``requires_grad=True`` (parameters) keep a preallocated gradient buffer;
    interior nodes allocate gradients lazily during the reverse pass.
    """

    __slots__ = ("array", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, array, requires_grad=False, _parents=(), _backward=None,
                 _context="tensor construction"):
        self.array = _check_finite(_as_f64(array), _context)
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.grad = np.zeros_like(self.array) if requires_grad else None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.array.reshape(-1)

    def item(self) -> float:
        if self.array.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.array.reshape(-1)[0])

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.array)
        self.grad += grad

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(array) -> Tensor:
    """Leaf tensor that does not require gradients (e.g. an input batch)."""
    return Tensor(array, requires_grad=False, _context="constant")


def _node(array, parents, backward_fn, context) -> Tensor:
    out = Tensor(array, _parents=tuple(parents), _backward=backward_fn,
                 _context=context)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map: out[i, h] = sum_d x[i, d] * w[d, h] + b[h]."""
    if x.array.ndim != 2 or w.array.ndim != 2 or b.array.ndim != 1:
        raise ShapeError(
            f"linear expects 2-d input, 2-d weight, 1-d bias; got "
            f"{x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(
            f"linear dimension mismatch: input {x.shape}, weight {w.shape}, "
            f"bias {b.shape}")
    out_arr = x.array @ w.array + b.array

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g @ w.array.T)
        if w.requires_grad:
            w._accumulate(x.array.T @ g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return _node(out_arr, (x, w, b), backward_fn, "linear")


def relu(x: Tensor) -> Tensor:
    out_arr = np.maximum(x.array, 0.0)

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * (x.array > 0.0))

    return _node(out_arr, (x,), backward_fn, "relu")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out_arr = a.array + b.array

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _node(out_arr, (a, b), backward_fn, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out_arr = a.array * b.array

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * b.array)
        if b.requires_grad:
            b._accumulate(g * a.array)

    return _node(out_arr, (a, b), backward_fn, "mul")


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    out_arr = _check_finite(x.array * s, "scale")

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * s)

    return _node(out_arr, (x,), backward_fn, "scale")


def tensor_sum(x: Tensor) -> Tensor:
    out_arr = np.asarray(x.array.sum())

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(np.full_like(x.array, float(g.reshape(-1)[0])))

    return _node(out_arr, (x,), backward_fn, "sum")


def scaled_softmax_op(z: Tensor, temperatures: np.ndarray) -> Tensor:
    """Row-wise softmax of z with per-class temperatures.

    p[i, k] = exp(z[i, k] / t[k]) / sum_j exp(z[i, j] / t[j]), stabilized by
    subtracting the per-row max of the scaled logits.
    """
    t = _as_f64(temperatures)
    if z.array.ndim != 2 or t.ndim != 1 or z.shape[1] != t.shape[0]:
        raise ShapeError(
            f"scaled softmax: logits {z.shape} vs temperatures {t.shape}")
    s = z.array / t
    s -= s.max(axis=1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g: np.ndarray) -> None:
        if z.requires_grad:
            inner = (g * p).sum(axis=1, keepdims=True)
            z._accumulate(p * (g - inner) / t)

    return _node(p, (z,), backward_fn, "scaled_softmax")


def soft_cross_entropy(p: Tensor, targets: np.ndarray) -> Tensor:
    """Batch-mean cross entropy -sum_k y[k] log p[k] against soft labels.

    Entries of ``targets`` that are zero contribute nothing, so only the
    probabilities under the label support must be positive.
    """
    y = _as_f64(targets)
    if p.array.ndim != 2 or p.shape != y.shape:
        raise ShapeError(f"cross entropy shape mismatch: {p.shape} vs {y.shape}")
    support = y > 0.0
    if np.any(p.array[support] <= 0.0):
        raise NumericError("cross entropy saw probability <= 0 under label support")
    batch = p.shape[0]
    logp = np.zeros_like(y)
    logp[support] = np.log(p.array[support])
    out_arr = np.asarray(-(y * logp).sum() / batch)

    def backward_fn(g: np.ndarray) -> None:
        if p.requires_grad:
            dp = np.zeros_like(y)
            dp[support] = -y[support] / p.array[support]
            p._accumulate(dp * (float(g.reshape(-1)[0]) / batch))

    return _node(out_arr, (p,), backward_fn, "soft_cross_entropy")


def backward(loss: Tensor) -> None:
    """Reverse pass from a scalar loss; accumulates into parameter gradients."""
    if loss.array.size != 1:
        raise ContractError(
            f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))

    loss._accumulate(np.ones_like(loss.array))
    for node in reversed(topo):
        if node._backward is not None:
            _check_finite(node.grad, "backward")
            node._backward(node.grad)


class ParamStore:
    """Named parameter tensors with matching gradient and momentum buffers."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._momentum: dict[str, np.ndarray] = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(array, requires_grad=True, _context=f"parameter {name!r}")
        self._params[name] = t
        self._momentum[name] = np.zeros_like(t.array)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def momentum(self, name: str) -> np.ndarray:
        return self._momentum[name]

    def zero_grad(self) -> None:
        """Clears gradients only; parameters and momentum are untouched."""
        for t in self._params.values():
            t.grad[...] = 0.0


@dataclass(frozen=True)
class SgdConfig:
    """SGD with momentum, decoupled-from-nothing weight decay, and step decay.

    The learning rate is multiplied by ``decay_factor`` once per entry of
    ``decay_epochs`` that the current epoch has reached.
    """

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.decay_factor <= 0:
            raise ConfigError(f"decay_factor must be positive, got {self.decay_factor}")
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ConfigError(f"decay_epochs must be strictly increasing, got {self.decay_epochs}")

    def learning_rate_at(self, epoch: int) -> float:
        passed = sum(1 for d in self.decay_epochs if d <= epoch)
        return self.learning_rate * self.decay_factor ** passed


def sgd_step(store: ParamStore, config: SgdConfig, epoch: int) -> None:
    """v <- momentum*v + grad + weight_decay*param; param <- param - lr(epoch)*v."""
    lr = config.learning_rate_at(epoch)
    for name, param in store.items():
        v = store.momentum(name)
        v *= config.momentum
        v += param.grad
        if config.weight_decay:
            v += config.weight_decay * param.array
        param.array -= lr * v
        _check_finite(param.array, f"sgd_step on {name!r}")


def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))
