from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .tensor import Tensor, parameter


@dataclass
class ParamStore:
    """Named trainable tensors plus their Adam moments.

    Parameters marked frozen keep their values: they receive no update and
    are excluded from :meth:`trainable`.
    """

    params: dict[str, Tensor] = field(default_factory=dict)
    frozen: set[str] = field(default_factory=set)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def add(self, name: str, value: np.ndarray, frozen: bool = False) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = parameter(value, name=name)
        if frozen:
            p.requires_grad = False
            self.frozen.add(name)
        self.params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def trainable(self) -> list[Tensor]:
        return [p for n, p in self.params.items() if n not in self.frozen]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.params.items()}

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise KeyError(f"checkpoint lacks parameters {sorted(missing)}")
        for n, p in self.params.items():
            if arrays[n].shape != p.data.shape:
                raise ValueError(f"{n}: shape {arrays[n].shape} != {p.data.shape}")
            p.data = np.array(arrays[n], dtype=p.data.dtype, copy=True)

    def grad_norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(p.grad)) if p.grad is not None else 0.0
                for n, p in self.params.items()}


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[-2], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(spec: Mapping[str, tuple], seed: int, dtype=np.float64) -> ParamStore:
    """Build a store from ``{name: (shape, kind)}``, drawing in the mapping's order.

    ``kind`` is ``"xavier"`` (uniform Xavier bounds over the last two axes),
    ``"zeros"``, or an ``np.ndarray`` used verbatim.
    """
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for name, (shape, kind) in spec.items():
        if isinstance(kind, np.ndarray):
            value = kind
        elif kind == "xavier":
            value = xavier_uniform(rng, tuple(shape))
        elif kind == "zeros":
            value = np.zeros(shape)
        else:
            raise ValueError(f"{name}: unknown init {kind!r}")
        store.add(name, np.asarray(value, dtype=dtype))
    return store


def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update from the ``.grad`` fields; missing grads count as zero.

    Bias correction is folded into the step size, with ``eps`` added to the
    uncorrected ``sqrt(v)``, so the first step is ``-lr * g / (|g| + eps / sqrt(1 - beta2))``.
    """
    for name, p in store.params.items():
        if name in store.frozen or p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            bad = int(np.size(p.grad) - np.count_nonzero(np.isfinite(p.grad)))
            raise FloatingPointError(f"non-finite gradient in {name!r} ({bad} entries) at step {store.t + 1}")
    store.t += 1
    t = store.t
    step = lr * np.sqrt(1.0 - beta2 ** t) / (1.0 - beta1 ** t)
    for name, p in store.params.items():
        if name in store.frozen:
            continue
        g = p.grad if p.grad is not None else 0.0
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p.data -= (step * m / (np.sqrt(v) + eps)).astype(p.data.dtype)
