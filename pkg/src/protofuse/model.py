"""Assembles the parameter store and components for one configured method."""

from __future__ import annotations

import numpy as np

from .adaptors import Adaptor
from .autodiff import Tensor
from .config import Config
from .encoders import PromptBank, SemanticEncoder, VisualEncoder
from .errors import InvalidArgumentError
from .fusion import Fusion
from .params import ParamStore

# methods that carry the semantic branch (prompts + adaptor)
_SEMANTIC_METHODS = ("simplefsl", "simplefsl_pp", "zeroshot", "zeroshot_lp")


class FewShotModel:
    """One configured model: visual encoder, optional semantic branch, fusion.

    Which parameters exist depends on the method: "protonet" is the visual
    branch alone; "zeroshot" freezes the prompt context ("zeroshot_lp"
    trains it); the simplefsl variants carry everything. The semantic
    encoder is always frozen.
    """

    def __init__(
        self,
        cfg: Config,
        d_in: int,
        attr_dim: int,
        head_classes: int | None = None,
    ):
        self.cfg = cfg
        self.method: str = cfg["method"]
        self.prompt_mode: str = cfg["prompt"]
        self.tau: float = cfg["tau"]
        self.tau2: float = cfg["tau2"]
        self.lam: float = cfg["lambda"]
        self.alpha: float = cfg["alpha"]
        self.contrastive_temp: float = cfg["contrastive_temp"]
        self.d_v: int = cfg["model.d_v"]
        self.d_in = d_in

        store = ParamStore()
        seed = cfg["seed"]
        self.visual = VisualEncoder(
            store, d_in, cfg["model.d_h"], self.d_v, seed, head_classes=head_classes
        )
        self.semantic = None
        self.prompts = None
        self.adaptor = None
        self.fusion = None
        if self.method in _SEMANTIC_METHODS:
            self.semantic = SemanticEncoder(
                store, cfg["model.d_text"], cfg["model.vocab"], attr_dim,
                cfg["model.semantic_seed"],
            )
            prompt_mode = self.prompt_mode
            if self.method == "zeroshot":
                prompt_mode = "fixed"
            elif self.method == "zeroshot_lp" and prompt_mode not in ("fixed", "dataset"):
                raise InvalidArgumentError(
                    "zeroshot_lp supports fixed or dataset prompts only"
                )
            self.prompt_mode = prompt_mode
            self.prompts = PromptBank(
                store, self.semantic, prompt_mode, cfg["model.prompt_len"], self.d_v, seed
            )
            self.adaptor = Adaptor(
                store, cfg["adaptor"], cfg["model.d_text"], self.d_v, seed
            )
            self.fusion = Fusion(store, cfg["fusion"], self.d_v, seed)
        self.store = store

    @property
    def has_semantic(self) -> bool:
        return self.semantic is not None

    def visual_features(self, raw: np.ndarray) -> Tensor:
        """(B, d_v) features for a (B, d_in) batch of raw vectors."""
        return self.visual.forward(Tensor(np.asarray(raw, dtype=np.float64)))

    def class_semantic_feature(self, token_id: int, conditioning: Tensor | None = None) -> Tensor:
        """Adapted semantic feature z for one class prompt, as (1, d_v)."""
        if not self.has_semantic:
            raise InvalidArgumentError(f"method {self.method!r} has no semantic branch")
        context = self.prompts.compose(conditioning)
        if context.shape[0] == 0:
            context = None
        text = self.semantic.encode(context, token_id)
        return self.adaptor.forward(text)
