"""A small reverse-mode autodiff tape over numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. :func:`backward`
walks the graph once in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name", "consumed")

    def __init__(self, data, parents: Sequence[Tensor] = (), backward_fn=None,
                 requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name
        self.consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def numpy(self) -> np.ndarray:
        return self.data


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data, parents, backward_fn) -> Tensor:
    out = Tensor(data, parents)
    if out.requires_grad:
        out.backward_fn = backward_fn
    else:
        out.parents = ()
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf that requires it.

    A graph may be differentiated once. Calling again on the same loss, or
    on any graph whose parameters still hold gradients from a previous call,
    raises ``RuntimeError``; clear them with :func:`zero_grad` first.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.consumed:
        raise RuntimeError("backward already ran on this graph; rebuild the forward pass")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    leaves = [t for t in order if not t.parents]
    stale = [t.name or repr(t) for t in leaves if t.grad is not None]
    if stale:
        raise RuntimeError(f"gradients not reset before backward: {stale[:5]}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g
            continue
        needs = [p.requires_grad for p in node.parents]
        for p, pg in zip(node.parents, node.backward_fn(g, needs)):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    for t in order:
        t.consumed = True
    # parameters on the tape that received no gradient get zeros
    for t in leaves:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ----- elementwise -----

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g, needs):
        return (unbroadcast(g, a.shape) if needs[0] else None,
                unbroadcast(g, b.shape) if needs[1] else None)
    return _op(a.data + b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _op(-a.data, (a,), lambda g, needs: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g, needs):
        return (unbroadcast(g * b.data, a.shape) if needs[0] else None,
                unbroadcast(g * a.data, b.shape) if needs[1] else None)
    return _op(a.data * b.data, (a, b), bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _op(y, (a,), lambda g, needs: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _op(y, (a,), lambda g, needs: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _op(a.data * mask, (a,), lambda g, needs: (g * mask,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _op(y, (a,), lambda g, needs: (g * y,))


def log_clamp(a: Tensor, floor: float = 1e-12) -> Tensor:
    """``log(max(a, floor))``; no gradient flows through clamped entries."""
    x = a.data
    keep = x > floor
    safe = np.where(keep, x, floor)
    return _op(np.log(safe), (a,), lambda g, needs: (np.where(keep, g / safe, 0.0),))


# ----- reductions and shape -----

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def bw(g, needs):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _op(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis, keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    return _op(a.data.reshape(shape), (a,), lambda g, needs: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _op(a.data.transpose(axes), (a,), lambda g, needs: (g.transpose(inv),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g, needs):
        return tuple(np.split(g, sizes, axis=axis))
    return _op(np.concatenate([x.data for x in xs], axis=axis), xs, bw)


def getitem(a: Tensor, idx) -> Tensor:
    def bw(g, needs):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)
    return _op(a.data[idx], (a,), bw)


def take(table: Tensor, idx) -> Tensor:
    """Row lookup ``table[idx]`` for an integer array of any shape."""
    idx = np.asarray(idx)

    def bw(g, needs):
        out = np.zeros_like(table.data)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (out,)
    return _op(table.data[idx], (table,), bw)


# ----- linear algebra -----

def matmul(a, b) -> Tensor:
    """Batched ``a @ b``; both operands need at least two dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def bw(g, needs):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if needs[0] else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if needs[1] else None
        return ga, gb
    return _op(a.data @ b.data, (a, b), bw)


def softmax(a: Tensor, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get probability 0.

    Every slice must keep at least one unmasked entry.
    """
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g, needs):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)
    return _op(p, (a,), bw)


# ----- regularization -----

class DropoutLog:
    """Counts dropout calls that actually perturbed activations."""

    active_calls = 0


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: kept units are scaled by ``1 / (1 - rate)``; identity outside training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    DropoutLog.active_calls += 1
    keep = (rng.random(a.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return mul(a, keep)


# ----- gradient checking -----

def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               n_samples: int = 20, seed: int = 0, reference_dtype=np.longdouble) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The analytic gradient is taken in the parameters' own dtype. Probes use
    ``reference_dtype`` (extended precision by default) so that rounding in
    the difference quotient stays far below the gaps being measured. Up to
    ``n_samples`` coordinates per parameter are probed; ``f`` must rebuild
    the graph on each call and be deterministic.
    """
    before = DropoutLog.active_calls
    zero_grad(params)
    loss = f()
    if DropoutLog.active_calls != before:
        raise ValueError("grad_check needs a deterministic function; dropout is active")
    backward(loss)
    analytic = [p.grad.reshape(-1).copy() for p in params]
    zero_grad(params)

    originals = [p.data for p in params]
    for p in params:
        p.data = p.data.astype(reference_dtype)
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if flat.size > n_samples:
                coords = rng.choice(flat.size, size=n_samples, replace=False)
            for c in coords:
                orig = flat[c]
                flat[c] = orig + eps
                up = f().data.reshape(())
                flat[c] = orig - eps
                down = f().data.reshape(())
                flat[c] = orig
                numeric = float((up - down) / (2 * eps))
                a = float(grad[c])
                worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    finally:
        for p, data in zip(params, originals):
            p.data = data
    return worst
