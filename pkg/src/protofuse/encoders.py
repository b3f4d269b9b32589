"""Feature extractors: a trainable visual MLP and a frozen semantic encoder.

The semantic encoder stands in for a pretrained language model: a frozen
token-embedding table, mean pooling over the prompt sequence, and a frozen
affine-tanh mixer. Learnable prompt context vectors are the only trainable
input to it, which preserves the property the engine needs: prompt updates
move the text feature smoothly while the encoder itself never changes.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat
from .errors import InvalidArgumentError
from .params import ParamStore
from .seeding import (
    STREAM_HEAD_INIT,
    STREAM_MIXER,
    STREAM_PROMPT_COND_INIT,
    STREAM_TOKEN_ATTR,
    STREAM_TOKEN_PROJ,
    STREAM_VISUAL_INIT,
    rng_for,
    uniform_init,
)

# Reserved token ids for the four context words of the fixed prompt phrase;
# dataset class tokens start at FIRST_CLASS_TOKEN.
FIXED_PHRASE_TOKENS = (0, 1, 2, 3)
FIRST_CLASS_TOKEN = 4

# Mixer gain keeps the content part of tanh pre-activations near +-0.4 for
# unit-norm token rows; the bias scale deliberately semi-saturates a share of
# dimensions so that prompt tuning (which acts pre-tanh) has something real
# to recover that the post-tanh adaptor cannot.
_MIXER_GAIN = 20.0
_MIXER_BIAS_STD = 1.8


def token_attribute(semantic_seed: int, token_id: int, attr_dim: int) -> np.ndarray:
    """The latent attribute vector behind one vocabulary entry."""
    return rng_for(semantic_seed, STREAM_TOKEN_ATTR, token_id).standard_normal(attr_dim)


def build_token_table(
    semantic_seed: int, vocab: int, d_text: int, attr_dim: int
) -> np.ndarray:
    """Frozen embedding table; row t is the unit-normalized projection of
    token t's Gaussian attribute vector, so rows correlate with attributes."""
    proj = rng_for(semantic_seed, STREAM_TOKEN_PROJ).standard_normal(
        (attr_dim, d_text)
    ) / np.sqrt(attr_dim)
    table = np.empty((vocab, d_text))
    for t in range(vocab):
        row = token_attribute(semantic_seed, t, attr_dim) @ proj
        table[t] = row / np.linalg.norm(row)
    return table


class VisualEncoder:
    """Two-hidden-layer tanh perceptron d_in -> d_h -> d_h -> d_v over raw
    feature vectors, plus an optional linear head used only in pre-training."""

    def __init__(
        self,
        store: ParamStore,
        d_in: int,
        d_h: int,
        d_v: int,
        seed: int,
        head_classes: int | None = None,
    ):
        self.d_in, self.d_h, self.d_v = d_in, d_h, d_v
        rng = rng_for(seed, STREAM_VISUAL_INIT)
        self.w1 = store.register("visual.fc1.weight", uniform_init(rng, d_in, (d_in, d_h)))
        self.b1 = store.register("visual.fc1.bias", np.zeros(d_h))
        self.w2 = store.register("visual.fc2.weight", uniform_init(rng, d_h, (d_h, d_h)))
        self.b2 = store.register("visual.fc2.bias", np.zeros(d_h))
        self.w3 = store.register("visual.fc3.weight", uniform_init(rng, d_h, (d_h, d_v)))
        self.b3 = store.register("visual.fc3.bias", np.zeros(d_v))
        self.head_w = self.head_b = None
        if head_classes is not None:
            hrng = rng_for(seed, STREAM_HEAD_INIT)
            self.head_w = store.register("head.weight", uniform_init(hrng, d_v, (d_v, head_classes)))
            self.head_b = store.register("head.bias", np.zeros(head_classes))

    def forward(self, x: Tensor) -> Tensor:
        """Visual features for a (B, d_in) batch."""
        if x.data.ndim != 2 or x.shape[1] != self.d_in:
            raise InvalidArgumentError(
                f"visual encoder expects (B, {self.d_in}) input, got {x.shape}"
            )
        h = (x @ self.w1 + self.b1).tanh()
        h = (h @ self.w2 + self.b2).tanh()
        return h @ self.w3 + self.b3

    def head_logits(self, features: Tensor) -> Tensor:
        if self.head_w is None:
            raise InvalidArgumentError("visual encoder was built without a pre-training head")
        return features @ self.head_w + self.head_b


def encode_visual(encoder: VisualEncoder, raw: np.ndarray) -> np.ndarray:
    """Single-vector convenience wrapper around VisualEncoder.forward."""
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgumentError("encode_visual expects a rank-1 feature vector")
    return encoder.forward(Tensor(v.reshape(1, -1))).data[0]


class SemanticEncoder:
    """Frozen stand-in for a text encoder: token table + mean pooling +
    affine-tanh mixer. All parameters registered frozen under "semantic."."""

    def __init__(
        self,
        store: ParamStore,
        d_text: int,
        vocab: int,
        attr_dim: int,
        semantic_seed: int,
    ):
        self.d_text, self.vocab = d_text, vocab
        table = build_token_table(semantic_seed, vocab, d_text, attr_dim)
        mrng = rng_for(semantic_seed, STREAM_MIXER)
        mixer_w = mrng.standard_normal((d_text, d_text)) * (_MIXER_GAIN / np.sqrt(d_text))
        mixer_b = _MIXER_BIAS_STD * mrng.standard_normal(d_text)
        self.table = store.register("semantic.token_table", table, frozen=True)
        self.mixer_w = store.register("semantic.mixer.weight", mixer_w, frozen=True)
        self.mixer_b = store.register("semantic.mixer.bias", mixer_b, frozen=True)

    @classmethod
    def from_arrays(
        cls, store: ParamStore, table: np.ndarray, mixer_w: np.ndarray, mixer_b: np.ndarray
    ) -> "SemanticEncoder":
        enc = cls.__new__(cls)
        enc.vocab, enc.d_text = table.shape
        enc.table = store.register("semantic.token_table", table, frozen=True)
        enc.mixer_w = store.register("semantic.mixer.weight", mixer_w, frozen=True)
        enc.mixer_b = store.register("semantic.mixer.bias", mixer_b, frozen=True)
        return enc

    def token_row(self, token_id: int) -> Tensor:
        if not 0 <= token_id < self.vocab:
            raise InvalidArgumentError(f"token id {token_id} outside vocabulary")
        return Tensor(self.table.data[token_id : token_id + 1].copy())

    def encode(self, context: Tensor | None, token_id: int) -> Tensor:
        """tanh(mixer . mean(context rows + class token row) + bias), as (1, d_text).

        Differentiable w.r.t. the context; the table and mixer are frozen.
        """
        row = self.token_row(token_id)
        seq = row if context is None else concat([context, row], axis=0)
        pooled = seq.mean(axis=0, keepdims=True)
        return (pooled @ self.mixer_w + self.mixer_b).tanh()


class PromptBank:
    """Learnable context vectors plus the conditioning nets for the
    class-aware and task-aware variants.

    Modes: "fixed" keeps the phrase-token rows frozen; "dataset" trains one
    shared context; "class"/"task" add a residual from a zero-initialized
    two-layer net applied to visual prototypes (per class, or their sum).
    """

    MODES = ("fixed", "dataset", "class", "task")

    def __init__(
        self,
        store: ParamStore,
        semantic: SemanticEncoder,
        mode: str,
        length: int,
        d_v: int,
        seed: int,
    ):
        if mode not in self.MODES:
            raise InvalidArgumentError(f"unknown prompt mode {mode!r}")
        self.mode = mode
        self.length = length
        # context initialized from the fixed-phrase token rows (cycled if L != 4)
        init = np.stack(
            [
                semantic.table.data[FIXED_PHRASE_TOKENS[i % len(FIXED_PHRASE_TOKENS)]]
                for i in range(length)
            ]
        ) if length > 0 else np.zeros((0, semantic.d_text))
        self.context = store.register("prompt.context", init, frozen=(mode == "fixed"))
        self.cond_w1 = None
        if mode in ("class", "task"):
            hidden = semantic.d_text // 4
            rng = rng_for(seed, STREAM_PROMPT_COND_INIT)
            self.cond_w1 = store.register(
                "prompt.cond.fc1.weight", uniform_init(rng, d_v, (d_v, hidden))
            )
            self.cond_b1 = store.register("prompt.cond.fc1.bias", np.zeros(hidden))
            # zero-initialized output layer: conditioning starts as a no-op
            self.cond_w2 = store.register(
                "prompt.cond.fc2.weight", np.zeros((hidden, semantic.d_text))
            )
            self.cond_b2 = store.register("prompt.cond.fc2.bias", np.zeros(semantic.d_text))

    def cond_net(self, protos: Tensor) -> Tensor:
        """Conditioning residual for a (B, d_v) batch of visual prototypes."""
        h = (protos @ self.cond_w1 + self.cond_b1).tanh()
        return h @ self.cond_w2 + self.cond_b2

    def compose(self, conditioning: Tensor | None = None) -> Tensor:
        """Context rows for one prompt.

        ``conditioning`` is a (1, d_v) visual prototype in class mode, the
        (1, d_v) prototype sum in task mode, ignored otherwise.
        """
        if self.mode in ("fixed", "dataset"):
            return self.context
        if conditioning is None:
            raise InvalidArgumentError(f"{self.mode}-aware prompt needs a conditioning prototype")
        return self.context + self.cond_net(conditioning)
