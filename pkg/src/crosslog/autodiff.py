"""Tape-based reverse-mode autodiff over dense float64 tensors.

The graph is rebuilt on every forward pass. Each result tensor records its
inputs and a closure that pushes its upstream gradient into them; calling
``backward`` on a scalar walks the recorded graph in reverse topological order.
Gradients are never themselves differentiated (first-order only).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeMismatch

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "add",
    "tanh",
    "relu",
    "mean_rows",
    "take_rows",
    "scale",
    "add_scalars",
    "softmax_cross_entropy",
    "grad_reverse",
    "finite_diff_check",
]


class Tensor:
    """A dense row-major float64 array that can take part in a tape."""

    __slots__ = ("data", "grad", "requires_grad", "_inputs", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _inputs: tuple = (), _backward=None, op: str = "leaf"):
        arr = np.array(data, dtype=np.float64)
        if any(d < 1 for d in arr.shape):
            raise ShapeMismatch(f"tensor shape entries must be >= 1, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(t.requires_grad for t in _inputs)
        self._inputs = _inputs
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if self.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar output, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._inputs:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))

        # interior gradients are scratch; only leaves keep theirs
        upstream: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = upstream.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._inputs, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in upstream:
                    upstream[id(parent)] = upstream[id(parent)] + pg
                else:
                    upstream[id(parent)] = pg


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return Tensor(A @ B, _inputs=(a, b), _backward=backward, op="matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a row vector broadcast over ``a``'s rows."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        broadcast = False
    elif a.data.ndim == 2 and b.shape in ((a.shape[1],), (1, a.shape[1])):
        broadcast = True
    else:
        raise ShapeMismatch(f"add: incompatible shapes {a.shape} and {b.shape}")
    b_shape = b.shape

    def backward(g):
        if broadcast:
            return g, g.sum(axis=0).reshape(b_shape)
        return g, g

    return Tensor(a.data + b.data, _inputs=(a, b), _backward=backward, op="add")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, _inputs=(a,), _backward=backward, op="tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor(np.where(mask, a.data, 0.0), _inputs=(a,), _backward=backward, op="relu")


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over the leading dimension, keeping a single row."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"mean_rows: expected a 2-D tensor, got {a.shape}")
    n = a.shape[0]

    def backward(g):
        return (np.broadcast_to(g / n, a.shape),)

    return Tensor(a.data.mean(axis=0, keepdims=True), _inputs=(a,), _backward=backward, op="mean_rows")


def take_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    idx = np.asarray(rows, dtype=np.intp)
    if a.data.ndim != 2 or idx.ndim != 1 or idx.size == 0:
        raise ShapeMismatch(f"take_rows: need 2-D input and nonempty index list, got {a.shape}")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.data[idx], _inputs=(a,), _backward=backward, op="take_rows")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (g * c,)

    return Tensor(a.data * c, _inputs=(a,), _backward=backward, op="scale")


def add_scalars(*terms: Tensor) -> Tensor:
    for t in terms:
        if t.data.size != 1:
            raise ShapeMismatch(f"add_scalars: non-scalar term of shape {t.shape}")

    def backward(g):
        return tuple(np.broadcast_to(g.reshape(()), t.shape).copy() for t in terms)

    total = sum((t.data.reshape(()) for t in terms), np.float64(0.0))
    return Tensor(total, _inputs=tuple(terms), _backward=backward, op="add_scalars")


def softmax_cross_entropy(logits: Tensor, class_index) -> Tensor:
    """Mean softmax cross-entropy of rows of ``logits`` against integer classes.

    ``class_index`` is an int (for a single row) or a sequence with one class per row.
    """
    z = logits.data
    if z.ndim == 1:
        z = z.reshape(1, -1)
    labels = np.atleast_1d(np.asarray(class_index, dtype=np.intp))
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeMismatch(f"softmax_cross_entropy: logits {logits.shape} vs {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ShapeMismatch(f"softmax_cross_entropy: class index out of range for {z.shape[1]} classes")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(n), labels].mean()
    shape = logits.shape

    def backward(g):
        probs = np.exp(log_probs)
        probs[np.arange(n), labels] -= 1.0
        return ((g.reshape(()) / n) * probs.reshape(shape),)

    return Tensor(loss, _inputs=(logits,), _backward=backward, op="softmax_xent")


def grad_reverse(x: Tensor, lam: float) -> Tensor:
    """Identity forward; multiplies the upstream gradient by ``-lam`` going back."""
    if lam < 0:
        raise ValueError(f"grad_reverse: lambda must be nonnegative, got {lam}")
    lam = float(lam)

    def backward(g):
        return (-lam * g,)

    return Tensor(x.data, _inputs=(x,), _backward=backward, op="grad_reverse")


def _value(out) -> float:
    return out.item() if isinstance(out, Tensor) else float(out)


def finite_diff_check(
    loss_fn: Callable[[list[Tensor]], Tensor],
    params: Iterable[Tensor],
    eps: float = 1e-5,
    reference=None,
) -> float:
    """Max relative error between tape gradients and central differences.

    Every coordinate of every tensor in ``params`` is perturbed in place and
    restored afterwards. Relative error uses ``max(|a|, |b|, 1e-8)`` as denominator.

    By default the differences are taken of ``loss_fn`` itself. Gradient
    reversal makes the tape gradient differ from the derivative of the forward
    value on purpose; ``reference`` then supplies the function whose derivative
    the tape should reproduce, either one callable or one per tensor in ``params``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = list(params)
    if reference is None:
        refs = [loss_fn] * len(params)
    elif callable(reference):
        refs = [reference] * len(params)
    else:
        refs = list(reference)
        if len(refs) != len(params):
            raise ValueError(f"{len(refs)} reference functions for {len(params)} tensors")
    for p in params:
        p.requires_grad = True
        p.zero_grad()
    loss_fn(params).backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, g, ref in zip(params, analytic, refs):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _value(ref(params))
            flat[i] = orig - eps
            down = _value(ref(params))
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = gflat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
