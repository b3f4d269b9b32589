"""Semantic-to-visual space adaptors: linear, bottleneck MLP, residual."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import InvalidArgumentError
from .params import ParamStore
from .seeding import STREAM_ADAPTOR_INIT, rng_for, uniform_init

VARIANTS = ("linear", "bottleneck", "residual")


class Adaptor:
    """Maps (B, d_text) semantic features to (B, d_v) visual space.

    bottleneck: z = W2 tanh(W1 g + b1) + b2, hidden width d_v/4
    linear:     z = W0 g + b0
    residual:   z' = W0 g + b0; z = z' + W2 tanh(W1 z' + b1) + b2
    """

    def __init__(self, store: ParamStore, variant: str, d_text: int, d_v: int, seed: int):
        if variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown adaptor variant {variant!r}")
        if d_v % 4 != 0:
            raise InvalidArgumentError("d_v must be divisible by 4 for the bottleneck width")
        self.variant = variant
        self.d_text, self.d_v = d_text, d_v
        hidden = d_v // 4
        rng = rng_for(seed, STREAM_ADAPTOR_INIT)
        if variant in ("linear", "residual"):
            self.w0 = store.register("adaptor.lin.weight", uniform_init(rng, d_text, (d_text, d_v)))
            self.b0 = store.register("adaptor.lin.bias", np.zeros(d_v))
        if variant == "bottleneck":
            self.w1 = store.register("adaptor.fc1.weight", uniform_init(rng, d_text, (d_text, hidden)))
            self.b1 = store.register("adaptor.fc1.bias", np.zeros(hidden))
            self.w2 = store.register("adaptor.fc2.weight", uniform_init(rng, hidden, (hidden, d_v)))
            self.b2 = store.register("adaptor.fc2.bias", np.zeros(d_v))
        elif variant == "residual":
            self.w1 = store.register("adaptor.fc1.weight", uniform_init(rng, d_v, (d_v, hidden)))
            self.b1 = store.register("adaptor.fc1.bias", np.zeros(hidden))
            self.w2 = store.register("adaptor.fc2.weight", uniform_init(rng, hidden, (hidden, d_v)))
            self.b2 = store.register("adaptor.fc2.bias", np.zeros(d_v))

    def forward(self, g_out: Tensor) -> Tensor:
        if g_out.data.ndim != 2 or g_out.shape[1] != self.d_text:
            raise InvalidArgumentError(
                f"adaptor expects (B, {self.d_text}) input, got {g_out.shape}"
            )
        if self.variant == "linear":
            return g_out @ self.w0 + self.b0
        if self.variant == "bottleneck":
            return (g_out @ self.w1 + self.b1).tanh() @ self.w2 + self.b2
        z_lin = g_out @ self.w0 + self.b0
        z_mlp = (z_lin @ self.w1 + self.b1).tanh() @ self.w2 + self.b2
        return z_lin + z_mlp
