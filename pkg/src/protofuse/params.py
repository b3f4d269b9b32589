"""Named parameter store, decoupled-weight-decay optimizer, gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward, no_grad
from .errors import DeterminismError, InvalidArgumentError, InvalidStateError


class ParamStore:
    """Ordered map of parameter name -> Tensor, with a frozen subset.

    Iteration is always lexicographic by name. Frozen entries never change
    value through the optimizer and carry requires_grad=False, so gradients
    flow through but never into them.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self._frozen: set[str] = set()

    def register(self, name: str, value, frozen: bool = False) -> Tensor:
        if name in self._entries:
            raise InvalidArgumentError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))
        t.requires_grad = not frozen
        self._entries[name] = t
        if frozen:
            self._frozen.add(name)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self):
        for name in self.names():
            yield name, self._entries[name]

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    @property
    def frozen_names(self) -> frozenset[str]:
        return frozenset(self._frozen)

    def trainable(self):
        for name in self.names():
            if name not in self._frozen:
                yield name, self._entries[name]

    def zero_grads(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def value_snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}


class AdamW:
    """Decoupled weight decay: p -= lr * (m_hat/(sqrt(v_hat)+eps) + wd * p).

    ``lr_overrides`` maps name prefixes to group learning rates (longest
    prefix wins), e.g. {"visual.": 1e-6} during episodic training.
    """

    def __init__(
        self,
        store: ParamStore,
        lr: float = 5e-4,
        weight_decay: float = 5e-2,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        lr_overrides: dict[str, float] | None = None,
    ):
        if lr <= 0.0:
            raise InvalidArgumentError("learning rate must be positive")
        if weight_decay < 0.0:
            raise InvalidArgumentError("weight decay must be non-negative")
        self.store = store
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_overrides = dict(lr_overrides or {})
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._lr_cache: dict[str, float] = {}

    def _lr_for(self, name: str) -> float:
        cached = self._lr_cache.get(name)
        if cached is not None:
            return cached
        best: str | None = None
        for prefix in self.lr_overrides:
            if name.startswith(prefix) and (best is None or len(prefix) > len(best)):
                best = prefix
        lr = self.lr if best is None else self.lr_overrides[best]
        self._lr_cache[name] = lr
        return lr

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name, p in self.store.trainable():
            g = p.grad
            if g is None:
                raise InvalidStateError(f"missing gradient for trainable parameter {name!r}")
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self._lr_for(name) * (update + self.weight_decay * p.data)


@dataclass
class GradCheckReport:
    """Per-parameter max relative error of analytic vs central-difference grads."""

    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    def worst(self) -> tuple[str, float] | None:
        if not self.per_param:
            return None
        name = max(self.per_param, key=self.per_param.get)
        return name, self.per_param[name]


def finite_diff_check(
    loss_builder: Callable[[ParamStore], Tensor],
    store: ParamStore,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients against (L(p+h) - L(p-h)) / 2h per coordinate.

    ``loss_builder`` must be a deterministic function of the store; two
    evaluations at the same point are required to agree bit-for-bit.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0.0:
        raise InvalidArgumentError("finite-difference step must be positive")

    with no_grad():
        first = loss_builder(store).item()
        second = loss_builder(store).item()
    if first != second:
        raise DeterminismError("loss_builder returned different values at the same point")

    store.zero_grads()
    loss = loss_builder(store)
    backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in store.trainable()
    }
    store.zero_grads()

    report = GradCheckReport()
    for name, t in store.trainable():
        original = t.data.copy()
        worst = 0.0
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            base = original.reshape(-1)[i]
            flat[i] = base + step
            with no_grad():
                up = loss_builder(store).item()
            flat[i] = base - step
            with no_grad():
                down = loss_builder(store).item()
            flat[i] = base
            numeric = (up - down) / (2.0 * step)
            a = float(analytic[name].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        t.data[...] = original
        report.per_param[name] = worst
    return report
