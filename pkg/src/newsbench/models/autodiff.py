"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

Just enough tape machinery for the model zoo: broadcast-aware arithmetic,
batched matmul, the activations the architectures need, masked softmax and
masked max-pooling for sequence models, row gathering for learned embeddings,
and a numerically stable weighted BCE-with-logits loss. Everything runs in
float64 so analytic gradients can be held to tight finite-difference
tolerances and reruns are bit-reproducible.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def backward(self) -> None:
        """Accumulate gradients of this scalar node into every parameter upstream."""
        if self.value.size != 1:
            raise ValueError("backward() is defined for scalar losses only")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        for node in topo:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    if node.requires_grad:
        node.grad += _unbroadcast(grad, node.value.shape)


def _node(value, parents, backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=requires, parents=tuple(parents), backward=backward if requires else None)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    value = a.value + b.value

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(value, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    value = a.value - b.value

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(value, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    value = a.value * b.value

    def backward(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _node(value, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    value = a.value @ b.value

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ np.swapaxes(b.value, -1, -2))
        if b.requires_grad:
            _accumulate(b, np.swapaxes(a.value, -1, -2) @ g)

    return _node(value, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    value = a.value**exponent

    def backward(g):
        _accumulate(a, g * exponent * a.value ** (exponent - 1.0))

    return _node(value, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        grad = g
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        _accumulate(a, np.broadcast_to(grad, a.value.shape).copy())

    return _node(value, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    old_shape = a.value.shape
    value = a.value.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(old_shape))

    return _node(value, (a,), backward)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = _wrap(a)
    value = a.value.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _node(value, (a,), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    parts = [_wrap(t) for t in tensors]
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for part, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accumulate(part, g[tuple(index)])

    return _node(value, tuple(parts), backward)


def take(a, index) -> Tensor:
    """Basic (non-repeating) indexing/slicing with gradient scatter."""
    a = _wrap(a)
    value = a.value[index]

    def backward(g):
        if a.requires_grad:
            grad = np.zeros_like(a.value)
            grad[index] = g
            a.grad += grad

    return _node(value, (a,), backward)


def gather_rows(table, indices: np.ndarray) -> Tensor:
    """Row lookup into an embedding table; duplicate indices accumulate."""
    table = _wrap(table)
    indices = np.asarray(indices, dtype=np.int64)
    value = table.value[indices]

    def backward(g):
        if table.requires_grad:
            np.add.at(table.grad, indices, g)

    return _node(value, (table,), backward)


# ---------------------------------------------------------------------------
# activations


def tanh(a) -> Tensor:
    a = _wrap(a)
    value = np.tanh(a.value)

    def backward(g):
        _accumulate(a, g * (1.0 - value**2))

    return _node(value, (a,), backward)


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on plain arrays."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    value = sigmoid_values(a.value)

    def backward(g):
        _accumulate(a, g * value * (1.0 - value))

    return _node(value, (a,), backward)


def gelu(a) -> Tensor:
    """Exact GELU, x * Phi(x), with the erf form."""
    a = _wrap(a)
    x = a.value
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    value = x * cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x**2)
        _accumulate(a, g * (cdf + x * pdf))

    return _node(value, (a,), backward)


def softplus(a) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe max(x, 0) + log1p(exp(-|x|)) form."""
    a = _wrap(a)
    x = a.value
    value = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        _accumulate(a, g * sigmoid_values(x))

    return _node(value, (a,), backward)


def dropout(a, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; the identity when not training or rate is 0."""
    if not train or rate == 0.0:
        return _wrap(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    a = _wrap(a)
    mask = (rng.random(a.value.shape) >= rate) / (1.0 - rate)
    return mul(a, mask)


# ---------------------------------------------------------------------------
# masked sequence ops


def masked_softmax(scores, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax that assigns exactly zero weight to masked positions.

    mask broadcasts against scores; every softmax row must keep at least one
    unmasked entry.
    """
    scores = _wrap(scores)
    keep = np.broadcast_to(np.asarray(mask, dtype=bool), scores.value.shape)
    if not keep.any(axis=axis).all():
        raise ValueError("masked_softmax saw a fully masked row")
    shifted = np.where(keep, scores.value, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    expd = np.exp(shifted)
    value = expd / expd.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        _accumulate(scores, value * (g - inner))

    return _node(value, (scores,), backward)


def masked_max(a, mask: np.ndarray, axis: int) -> Tensor:
    """Max over unmasked positions; gradient routes to the first argmax."""
    a = _wrap(a)
    keep = np.broadcast_to(np.asarray(mask, dtype=bool), a.value.shape)
    if not keep.any(axis=axis).all():
        raise ValueError("masked_max saw a fully masked reduction")
    filled = np.where(keep, a.value, -np.inf)
    winners = np.argmax(filled, axis=axis)
    value = np.take_along_axis(filled, np.expand_dims(winners, axis), axis=axis).squeeze(axis)

    def backward(g):
        if a.requires_grad:
            grad = np.zeros_like(a.value)
            np.put_along_axis(
                grad, np.expand_dims(winners, axis), np.expand_dims(g, axis), axis=axis
            )
            a.grad += grad

    return _node(value, (a,), backward)


# ---------------------------------------------------------------------------
# losses


def weighted_bce_loss(logits, labels: np.ndarray, w_pos: float = 1.0) -> Tensor:
    """Mean weighted binary cross-entropy on logits.

    loss_i = w_pos * y_i * softplus(-z_i) + (1 - y_i) * softplus(z_i), the
    log-sum-exp-stable form of -[w y log s(z) + (1-y) log(1-s(z))].
    """
    if w_pos <= 0:
        raise ValueError(f"w_pos must be > 0, got {w_pos}")
    logits = _wrap(logits)
    y = np.asarray(labels, dtype=np.float64)
    pos_term = mul(softplus(-logits), w_pos * y)
    neg_term = mul(softplus(logits), 1.0 - y)
    return tmean(add(pos_term, neg_term))


# ---------------------------------------------------------------------------
# finite-difference checking


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    rel_tol: float = 1e-4,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Compare analytic gradients with central finite differences.

    loss_fn must rebuild the graph from the live parameter values on every
    call and be deterministic. Returns the max relative error per parameter;
    raises AssertionError when any entry exceeds rel_tol. The relative error
    uses a denominator floor so near-zero gradient pairs compare absolutely.
    """
    loss = loss_fn()
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    errors: dict[str, float] = {}
    for name, p in params.items():
        numeric = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().value)
            flat[i] = orig - eps
            down = float(loss_fn().value)
            flat[i] = orig
            num_flat[i] = (up - down) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric)), floor)
        rel = np.abs(analytic[name] - numeric) / denom
        errors[name] = float(rel.max()) if rel.size else 0.0
        if errors[name] > rel_tol:
            worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
            raise AssertionError(
                f"gradient mismatch in {name}{list(worst)}: analytic "
                f"{analytic[name][worst]:.3e} vs numeric {numeric[worst]:.3e} "
                f"(rel {errors[name]:.3e} > {rel_tol:.1e})"
            )
    return errors
