"""protofuse: a few-shot classification engine that fuses visual prototypes
with prompt-driven semantic features, self-ensembling and self-distilling
the two resulting classifiers, plus a synthetic benchmark for verifying the
whole pipeline at desk scale."""

from .autodiff import Tensor, backward, no_grad
from .config import default_config, resolve_config
from .ops import cosine_similarity, kl_divergence, softmax
from .params import AdamW, ParamStore, finite_diff_check

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "default_config",
    "resolve_config",
    "softmax",
    "cosine_similarity",
    "kl_divergence",
    "ParamStore",
    "AdamW",
    "finite_diff_check",
]

__version__ = "0.1.0"
