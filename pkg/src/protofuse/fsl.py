"""Episode math: prototypes, the two cosine classifiers, self-ensemble,
and every training loss.

Conventions, pinned by the engine's contracts:
  - fused prototype p_i   = mean over class-i support of fuse(f(x_j), z_j)
  - visual prototype p0_i = mean over class-i support of f(x_j)
  - fused classifier      = softmax(cos(f(x_q), p_i)  / tau2), tau2 def. 1.0
  - visual classifier     = softmax(cos(f(x_q), p0_i) / tau),  tau  def. 0.1
  - ensemble score        = y_hat + lambda * y_hat0 (inference only)
  - distillation          = 0.5 (KL(y, y0) + KL(y0, y)), gradients into both
  - query losses are means over the episode's query set
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .autodiff import (
    Tensor,
    cosine_rows,
    cross_entropy_rows,
    kl_rows,
    softmax_rows,
    zero_norm_events,
)
from .errors import InvalidArgumentError
from .model import FewShotModel


@dataclass
class Episode:
    """One N-way K-shot task with Q queries per class.

    support_x is (N, K, d_in) grouped by class; query_x is (N*Q, d_in) with
    labels in 0..N-1. Sample ids are global dataset ids, kept so tests can
    assert support/query disjointness.
    """

    n_way: int
    k_shot: int
    q_query: int
    class_ids: np.ndarray
    token_ids: np.ndarray
    support_x: np.ndarray
    support_ids: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    query_ids: np.ndarray

    def validate(self) -> None:
        n, k, q = self.n_way, self.k_shot, self.q_query
        if len(np.unique(self.class_ids)) != n:
            raise InvalidArgumentError("episode classes are not distinct")
        if self.support_x.shape[:2] != (n, k):
            raise InvalidArgumentError("support set is not (N, K, d_in)")
        if self.query_x.shape[0] != n * q or self.query_y.shape[0] != n * q:
            raise InvalidArgumentError("query set is not N*Q samples")
        if np.intersect1d(self.support_ids.reshape(-1), self.query_ids).size:
            raise InvalidArgumentError("a sample id appears in both support and query")


@dataclass
class PrototypeSet:
    """Fused and visual-only class prototypes, each (N, d_v)."""

    fused: Tensor
    visual: Tensor


@dataclass
class Prediction:
    """Row-wise query distributions: y_hat (fused), y_hat0 (visual),
    y_hat_pp = y_hat + lambda * y_hat0 (rows sum to 1 + lambda)."""

    y_hat: np.ndarray
    y_hat0: np.ndarray
    y_hat_pp: np.ndarray


def _support_visual_features(model: FewShotModel, episode: Episode) -> Tensor:
    flat = episode.support_x.reshape(-1, episode.support_x.shape[-1])
    return model.visual_features(flat)


@lru_cache(maxsize=64)
def _class_mean_matrix(n_way: int, k_shot: int) -> np.ndarray:
    """(N, N*K) constant: row i averages class i's support block."""
    m = np.zeros((n_way, n_way * k_shot))
    for i in range(n_way):
        m[i, i * k_shot : (i + 1) * k_shot] = 1.0 / k_shot
    return m


@lru_cache(maxsize=64)
def _class_expand_matrix(n_way: int, k_shot: int) -> np.ndarray:
    """(N*K, N) constant: repeats class row i for each of its K samples."""
    return np.repeat(np.eye(n_way), k_shot, axis=0)


def _visual_prototypes(feats: Tensor, n_way: int, k_shot: int) -> Tensor:
    return Tensor(_class_mean_matrix(n_way, k_shot)) @ feats


def class_semantic_features(
    model: FewShotModel, token_ids, visual_protos: Tensor | None = None
) -> Tensor:
    """Adapted semantic feature z_i per class, stacked (N, d_v).

    Batched equivalent of prompt composition + text encoding + adaptor:
    the pooled prompt mean is (sum(context) + L*cond + token row)/(L + 1),
    which matches the per-prompt path because mean pooling is linear.
    """
    prompts, semantic = model.prompts, model.semantic
    ids = np.asarray(token_ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= semantic.vocab):
        raise InvalidArgumentError("class token id outside vocabulary")
    pooled = Tensor(semantic.table.data[ids])
    length = prompts.length
    if length > 0:
        pooled = pooled + prompts.context.sum(axis=0, keepdims=True)
        if prompts.mode in ("class", "task"):
            if visual_protos is None:
                raise InvalidArgumentError(
                    f"{prompts.mode}-aware prompts need visual prototypes"
                )
            cond = visual_protos
            if prompts.mode == "task":
                cond = visual_protos.sum(axis=0, keepdims=True)
            pooled = pooled + prompts.cond_net(cond) * float(length)
    pooled = pooled * (1.0 / (length + 1))
    text = (pooled @ semantic.mixer_w + semantic.mixer_b).tanh()
    return model.adaptor.forward(text)


def compute_prototypes(model: FewShotModel, episode: Episode) -> PrototypeSet:
    """Two-pass prototypes: visual means first (they condition class/task
    prompts), then means of fuse(f(x_j), z_j) over each class's support."""
    if episode.k_shot == 0:
        raise InvalidArgumentError("prototypes need at least one support shot")
    n, k = episode.n_way, episode.k_shot
    feats = _support_visual_features(model, episode)
    visual = _visual_prototypes(feats, n, k)
    if not model.has_semantic:
        return PrototypeSet(fused=visual, visual=visual)
    z = class_semantic_features(model, episode.token_ids, visual)
    if model.fusion.variant == "add":
        fused = visual + z  # mean_j (f_j + z_i) = p0_i + z_i
    else:
        z_rows = Tensor(_class_expand_matrix(n, k)) @ z
        fused = Tensor(_class_mean_matrix(n, k)) @ model.fusion.forward(feats, z_rows)
    return PrototypeSet(fused=fused, visual=visual)


def classify_fused(query_features: Tensor, protos: PrototypeSet, tau2: float) -> Tensor:
    """Row-wise softmax over cos(query, fused prototype) / tau2."""
    sims = cosine_rows(query_features, protos.fused, zero_norm_events)
    return softmax_rows(sims, tau2)


def classify_visual(query_features: Tensor, protos: PrototypeSet, tau: float) -> Tensor:
    """Row-wise softmax over cos(query, visual prototype) / tau."""
    sims = cosine_rows(query_features, protos.visual, zero_norm_events)
    return softmax_rows(sims, tau)


def ensemble(y_hat: np.ndarray, y_hat0: np.ndarray, lam: float) -> np.ndarray:
    """Self-ensemble score y_hat + lam * y_hat0; argmax ties go to the lowest index."""
    if lam < 0.0:
        raise InvalidArgumentError("ensemble weight must be non-negative")
    a = np.asarray(y_hat, dtype=np.float64)
    b = np.asarray(y_hat0, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError("ensemble inputs must have matching shapes")
    return a + lam * b


def predict_episode(model: FewShotModel, episode: Episode) -> Prediction:
    """All three query distributions for one episode (no gradients needed
    by callers; wrap in autodiff.no_grad for inference)."""
    protos = compute_prototypes(model, episode)
    qf = model.visual_features(episode.query_x)
    y_hat = classify_fused(qf, protos, model.tau2).data
    y_hat0 = classify_visual(qf, protos, model.tau).data
    return Prediction(y_hat, y_hat0, ensemble(y_hat, y_hat0, model.lam))


def predicted_labels(pred: Prediction, method: str) -> np.ndarray:
    if method == "protonet":
        return pred.y_hat0.argmax(axis=1)
    if method == "simplefsl":
        return pred.y_hat.argmax(axis=1)
    if method == "simplefsl_pp":
        return pred.y_hat_pp.argmax(axis=1)
    raise InvalidArgumentError(f"no episode prediction rule for method {method!r}")


@dataclass
class MetaLossTerms:
    """The decomposition of the episodic loss; total is what gets optimized."""

    l1: Tensor | None
    l2: Tensor | None
    kd: Tensor | None
    total: Tensor = field(default=None)


def loss_kd(y_hat: Tensor, y_hat0: Tensor) -> Tensor:
    """Symmetric distillation 0.5 (KL(y, y0) + KL(y0, y)), mean over queries."""
    return (kl_rows(y_hat, y_hat0) + kl_rows(y_hat0, y_hat)) * 0.5


def meta_loss_terms(model: FewShotModel, episode: Episode, mode: str) -> MetaLossTerms:
    """Episode loss. "simplefsl" is the fused cross-entropy alone;
    "simplefsl_pp" adds the visual cross-entropy and alpha-weighted
    symmetric distillation. "protonet" trains the visual classifier only."""
    labels = episode.query_y
    protos = compute_prototypes(model, episode)
    qf = model.visual_features(episode.query_x)
    if mode == "protonet":
        y0 = classify_visual(qf, protos, model.tau)
        l2 = cross_entropy_rows(y0, labels)
        return MetaLossTerms(l1=None, l2=l2, kd=None, total=l2)
    y = classify_fused(qf, protos, model.tau2)
    l1 = cross_entropy_rows(y, labels)
    if mode == "simplefsl":
        return MetaLossTerms(l1=l1, l2=None, kd=None, total=l1)
    if mode != "simplefsl_pp":
        raise InvalidArgumentError(f"unknown meta-loss mode {mode!r}")
    y0 = classify_visual(qf, protos, model.tau)
    l2 = cross_entropy_rows(y0, labels)
    kd = loss_kd(y, y0)
    return MetaLossTerms(l1=l1, l2=l2, kd=kd, total=l1 + l2 + kd * model.alpha)


def loss_meta(model: FewShotModel, episode: Episode, mode: str) -> Tensor:
    if np.any(episode.query_y < 0) or np.any(episode.query_y >= episode.n_way):
        raise InvalidArgumentError("query label out of range")
    return meta_loss_terms(model, episode, mode).total


def loss_pretrain(model: FewShotModel, batch_x: np.ndarray, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of the linear-head softmax over base classes."""
    logits = model.visual.head_logits(model.visual_features(batch_x))
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise InvalidArgumentError("pre-training label out of range")
    return cross_entropy_rows(softmax_rows(logits, 1.0), labels)


def loss_contrastive_align(
    visual_feats: Tensor, text_feats: Tensor, temperature: float
) -> Tensor:
    """Symmetric cross-entropy over the cosine matrix of matched pairs.

    Row i of both inputs belongs to the same class; targets are the
    diagonal. Returns the mean of (row CE + column CE) / 2.
    """
    if visual_feats.shape != text_feats.shape:
        raise InvalidArgumentError("contrastive batch shapes must match")
    b = visual_feats.shape[0]
    sims = cosine_rows(visual_feats, text_feats, zero_norm_events) * (1.0 / temperature)
    targets = np.arange(b)
    row_ce = cross_entropy_rows(softmax_rows(sims, 1.0), targets)
    col_ce = cross_entropy_rows(softmax_rows(sims.transpose(), 1.0), targets)
    return (row_ce + col_ce) * 0.5


def alignment_loss_for_episode(model: FewShotModel, episode: Episode) -> Tensor:
    """Contrastive loss over one (visual, text) pair per episode class,
    using each class's first support sample. Classes must be distinct."""
    if len(np.unique(episode.token_ids)) != episode.n_way:
        raise InvalidArgumentError("duplicate class in contrastive batch")
    firsts = episode.support_x[:, 0, :]
    vf = model.visual_features(firsts)
    z = class_semantic_features(model, episode.token_ids)
    return loss_contrastive_align(vf, z, model.contrastive_temp)


def training_loss(model: FewShotModel, episode: Episode) -> Tensor:
    """The objective actually minimized per episode for the configured method."""
    if model.method in ("zeroshot", "zeroshot_lp"):
        return alignment_loss_for_episode(model, episode)
    return loss_meta(model, episode, model.method)


def zero_shot_predict(model: FewShotModel, query_feature: np.ndarray, token_ids) -> int:
    """Nearest class text feature by cosine; consumes no support samples."""
    toks = [int(t) for t in token_ids]
    if not toks:
        raise InvalidArgumentError("zero-shot prediction needs candidate classes")
    if len(set(toks)) != len(toks):
        raise InvalidArgumentError("duplicate candidate class ids")
    z = class_semantic_features(model, toks)
    qf = model.visual_features(np.asarray(query_feature).reshape(1, -1))
    sims = cosine_rows(qf, z, zero_norm_events).data[0]
    return int(sims.argmax())


def zero_shot_episode_accuracy(model: FewShotModel, episode: Episode) -> float:
    """Fraction of queries whose nearest class text feature is correct."""
    z = class_semantic_features(model, episode.token_ids)
    qf = model.visual_features(episode.query_x)
    sims = cosine_rows(qf, z, zero_norm_events).data
    return float((sims.argmax(axis=1) == episode.query_y).mean())


def episode_accuracy(model: FewShotModel, episode: Episode) -> float:
    """Fraction of correctly argmax-classified queries under the method's rule."""
    if model.method in ("zeroshot", "zeroshot_lp"):
        return zero_shot_episode_accuracy(model, episode)
    pred = predict_episode(model, episode)
    return float((predicted_labels(pred, model.method) == episode.query_y).mean())


def fused_sample_features(model: FewShotModel, episode: Episode) -> tuple[np.ndarray, np.ndarray]:
    """Per-support-sample pre-classifier representations and labels.

    Fused fuse(f(x), z_class) when the semantic branch exists, otherwise
    plain visual features. Used by the embedding export.
    """
    feats = _support_visual_features(model, episode)
    n, k = episode.n_way, episode.k_shot
    labels = np.repeat(np.arange(n), k)
    if not model.has_semantic:
        return feats.data.copy(), labels
    visual = _visual_prototypes(feats, n, k)
    z = class_semantic_features(model, episode.token_ids, visual)
    z_rows = Tensor(_class_expand_matrix(n, k)) @ z
    return model.fusion.forward(feats, z_rows).data.copy(), labels
