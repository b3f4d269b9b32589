"""Multi-modal feature fusion: add (default), concat, attention."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat
from .errors import InvalidArgumentError
from .params import ParamStore
from .seeding import STREAM_FUSION_INIT, rng_for, uniform_init

VARIANTS = ("add", "concat", "attention")


class Fusion:
    """Combines visual f and adapted-semantic z rows into fused rows.

    add:       f + z (parameter-free)
    concat:    (f || z) W_f, W_f of shape (2 d_v, d_v)
    attention: a = sigmoid(MLP(f || z)) in (0,1), output a z + (1-a) f
    """

    def __init__(self, store: ParamStore, variant: str, d_v: int, seed: int):
        if variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown fusion variant {variant!r}")
        self.variant = variant
        self.d_v = d_v
        rng = rng_for(seed, STREAM_FUSION_INIT)
        if variant == "concat":
            self.w_f = store.register(
                "fusion.concat.weight", uniform_init(rng, 2 * d_v, (2 * d_v, d_v))
            )
        elif variant == "attention":
            if d_v % 4 != 0:
                raise InvalidArgumentError("d_v must be divisible by 4 for the attention width")
            hidden = d_v // 4
            self.att_w1 = store.register(
                "fusion.att.fc1.weight", uniform_init(rng, 2 * d_v, (2 * d_v, hidden))
            )
            self.att_b1 = store.register("fusion.att.fc1.bias", np.zeros(hidden))
            self.att_w2 = store.register(
                "fusion.att.fc2.weight", uniform_init(rng, hidden, (hidden, 1))
            )
            self.att_b2 = store.register("fusion.att.fc2.bias", np.zeros(1))

    def forward(self, f_x: Tensor, z: Tensor) -> Tensor:
        if f_x.shape != z.shape or f_x.data.ndim != 2 or f_x.shape[1] != self.d_v:
            raise InvalidArgumentError(
                f"fusion expects matching (B, {self.d_v}) inputs, got {f_x.shape} and {z.shape}"
            )
        if self.variant == "add":
            return f_x + z
        both = concat([f_x, z], axis=1)
        if self.variant == "concat":
            return both @ self.w_f
        alpha = ((both @ self.att_w1 + self.att_b1).tanh() @ self.att_w2 + self.att_b2).sigmoid()
        return alpha * z + (1.0 - alpha) * f_x
