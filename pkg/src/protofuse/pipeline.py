"""Training and evaluation stages: pre-train, episodic meta-train,
confidence-interval evaluation, the ablation ladder, sweeps, the zero-shot
baselines, and embedding export.

Determinism contract: every stage is a pure function of (config, dataset,
seed). Evaluation episodes draw from per-index RNG streams and results are
merged in episode-index order, so reports are byte-identical across thread
counts.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .autodiff import no_grad
from .checkpoint import Checkpoint
from .config import Config
from .data import DatasetFile, SplitManifest, base_training_arrays, sample_episode
from .errors import InvalidArgumentError, NonFiniteError
from .fsl import episode_accuracy, fused_sample_features, training_loss
from .model import FewShotModel
from .params import AdamW
from .reports import AblationReport, EvalReport, SweepReport
from .seeding import (
    STREAM_ALIGN_BATCH,
    STREAM_EVAL_EPISODE,
    STREAM_EXPORT_EPISODE,
    STREAM_PRETRAIN_BATCH,
    STREAM_TRAIN_EPISODE,
    STREAM_VAL_EPISODE,
    rng_for,
)

THREADS_ENV = "PROTOFUSE_THREADS"


def _optimizer(cfg: Config, model: FewShotModel, meta: bool) -> AdamW:
    overrides = {"visual.": cfg["optim.visual_lr"]} if meta else None
    return AdamW(
        model.store,
        lr=cfg["optim.lr"],
        weight_decay=cfg["optim.weight_decay"],
        beta1=cfg["optim.beta1"],
        beta2=cfg["optim.beta2"],
        eps=cfg["optim.eps"],
        lr_overrides=overrides,
    )


def _backward_step(model: FewShotModel, loss, opt: AdamW) -> float:
    from .autodiff import backward

    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteError("training loss is not finite")
    model.store.zero_grads()
    backward(loss)
    opt.step()
    return value


def run_pretrain(cfg: Config, ds: DatasetFile, manifest: SplitManifest) -> tuple[Checkpoint, list[float]]:
    """Cross-entropy pre-training of the visual backbone + linear head on the
    base split. Returns the checkpoint (head included) and per-epoch losses."""
    xs, ys, _ = base_training_arrays(ds, manifest.base)
    head_classes = int(ys.max()) + 1
    model = FewShotModel(
        cfg.with_overrides(method="protonet"), ds.d_in, ds.attr_dim, head_classes=head_classes
    )
    opt = _optimizer(cfg, model, meta=False)
    batch_size = cfg["pretrain.batch_size"]
    epoch_losses: list[float] = []
    from .fsl import loss_pretrain

    for epoch in range(cfg["pretrain.epochs"]):
        order = rng_for(cfg["seed"], STREAM_PRETRAIN_BATCH, epoch).permutation(len(xs))
        total, batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss = loss_pretrain(model, xs[idx], ys[idx])
            total += _backward_step(model, loss, opt)
            batches += 1
        epoch_losses.append(total / batches)
        print(f"pretrain epoch {epoch + 1}/{cfg['pretrain.epochs']}: loss {epoch_losses[-1]:.6f}")
    ckpt = Checkpoint.from_store(model.store, "pretrain", cfg["pretrain.epochs"], cfg.text())
    return ckpt, epoch_losses


def _validation_accuracy(
    cfg: Config, model: FewShotModel, ds: DatasetFile, manifest: SplitManifest
) -> float:
    """Mean 1-shot accuracy over a fixed validation episode set."""
    accs = []
    n_way = min(cfg["meta.n_way"], len(manifest.val))
    with no_grad():
        for i in range(cfg["meta.val_tasks"]):
            episode = sample_episode(
                ds, manifest.val, n_way, 1, cfg["meta.q_query"],
                (cfg["seed"], STREAM_VAL_EPISODE, i),
            )
            accs.append(episode_accuracy(model, episode))
    return float(np.mean(accs))


def run_meta_train(
    cfg: Config, ds: DatasetFile, manifest: SplitManifest, init: Checkpoint | None
) -> Checkpoint:
    """Episodic training on the base split; the visual group runs at
    optim.visual_lr while everything else uses optim.lr. Keeps the
    checkpoint with the best validation accuracy (initial state included)."""
    model = FewShotModel(cfg, ds.d_in, ds.attr_dim)
    if init is not None:
        init.load_into(model.store, require_prefixes=("visual.",))
    opt = _optimizer(cfg, model, meta=True)
    episodes = cfg["meta.episodes"]
    best_values = model.store.value_snapshot()
    best_acc = None
    best_step = 0
    for i in range(episodes):
        episode = sample_episode(
            ds, manifest.base, cfg["meta.n_way"], cfg["meta.k_shot"], cfg["meta.q_query"],
            (cfg["seed"], STREAM_TRAIN_EPISODE, i),
        )
        loss = training_loss(model, episode)
        _backward_step(model, loss, opt)
        step = i + 1
        if step % cfg["meta.val_interval"] == 0 or step == episodes:
            if best_acc is None:
                # score the initial state on the same fixed episode set first
                current = model.store.value_snapshot()
                for name, values in best_values.items():
                    model.store[name].data = values.copy()
                best_acc = _validation_accuracy(cfg, model, ds, manifest)
                for name, values in current.items():
                    model.store[name].data = values
            acc = _validation_accuracy(cfg, model, ds, manifest)
            print(f"meta-train episode {step}/{episodes}: val acc {acc:.4f}")
            if acc >= best_acc:
                best_acc = acc
                best_values = model.store.value_snapshot()
                best_step = step
    for name, values in best_values.items():
        model.store[name].data = values
    return Checkpoint.from_store(model.store, "meta-train", best_step, cfg.text())


def run_alignment(cfg: Config, ds: DatasetFile, manifest: SplitManifest) -> Checkpoint:
    """Contrastive visual-text alignment on the base split (the zero-shot
    baselines train this way; no classification head, no prototypes)."""
    if cfg["method"] not in ("zeroshot", "zeroshot_lp"):
        raise InvalidArgumentError("alignment training expects a zeroshot method")
    model = FewShotModel(cfg, ds.d_in, ds.attr_dim)
    opt = _optimizer(cfg, model, meta=False)
    from .fsl import alignment_loss_for_episode

    batch = min(cfg["align.batch_size"], len(manifest.base))
    for step in range(cfg["align.steps"]):
        episode = sample_episode(
            ds, manifest.base, batch, 1, 0, (cfg["seed"], STREAM_ALIGN_BATCH, step)
        )
        loss = alignment_loss_for_episode(model, episode)
        _backward_step(model, loss, opt)
    return Checkpoint.from_store(model.store, "align", cfg["align.steps"], cfg.text())


def _load_model(cfg: Config, ds: DatasetFile, ckpt: Checkpoint) -> FewShotModel:
    model = FewShotModel(cfg, ds.d_in, ds.attr_dim)
    ckpt.load_into(model.store)
    return model


def effective_threads(cfg: Config) -> int:
    requested = max(1, cfg["eval.threads"])
    cap = os.environ.get(THREADS_ENV)
    if cap is not None:
        requested = min(requested, max(1, int(cap)))
    return requested


def evaluate(
    cfg: Config,
    ds: DatasetFile,
    manifest: SplitManifest,
    ckpt: Checkpoint,
    *,
    split: str | None = None,
    n_way: int | None = None,
    k_shot: int | None = None,
    num_tasks: int | None = None,
    seed: int | None = None,
) -> EvalReport:
    """Accuracy over T sampled episodes of the requested split.

    Zero-shot methods sample with K=0: no support labels are ever consumed.
    Episodes are independent; threads only change scheduling, never results.
    """
    method = cfg["method"]
    split = split or cfg["eval.split"]
    n_way = n_way or cfg["eval.n_way"]
    k = cfg["eval.k_shot"] if k_shot is None else k_shot
    if method in ("zeroshot", "zeroshot_lp"):
        k = 0
    q = cfg["eval.q_query"]
    tasks = num_tasks or cfg["eval.tasks"]
    seed = cfg["eval.seed"] if seed is None else seed
    model = _load_model(cfg, ds, ckpt)
    class_ids = manifest.split(split)
    started = time.perf_counter()

    def one(i: int) -> float:
        episode = sample_episode(ds, class_ids, n_way, k, q, (seed, STREAM_EVAL_EPISODE, i))
        with no_grad():
            return episode_accuracy(model, episode)

    workers = effective_threads(cfg)
    if workers == 1:
        accs = [one(i) for i in range(tasks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            accs = list(pool.map(one, range(tasks)))
    return EvalReport(
        method=method,
        split=split,
        n_way=n_way,
        k_shot=k,
        q_query=q,
        num_tasks=tasks,
        seed=seed,
        task_accuracies=np.asarray(accs, dtype=np.float64),
        wall_seconds=time.perf_counter() - started,
    )


# Table-3-style ladder: labels and order are part of the report contract.
ABLATION_LADDER = (
    "Visual backbone",
    "+ fixed Prompt",
    "+ Learnable Prompt",
    "+ self-ensemble",
    "+ self-Distillation",
)


def _ladder_config(cfg: Config, label: str) -> Config:
    if label == "Visual backbone":
        return cfg.with_overrides(method="protonet")
    if label == "+ fixed Prompt":
        return cfg.with_overrides(method="simplefsl", prompt="fixed")
    if label == "+ Learnable Prompt":
        return cfg.with_overrides(method="simplefsl", prompt="dataset")
    if label == "+ self-ensemble":
        return cfg.with_overrides(method="simplefsl_pp", prompt="dataset", **{"alpha": 0.0})
    if label == "+ self-Distillation":
        return cfg.with_overrides(method="simplefsl_pp", prompt="dataset")
    raise InvalidArgumentError(f"unknown ablation row {label!r}")


def run_ablation(
    cfg: Config, ds: DatasetFile, manifest: SplitManifest, pretrain_ckpt: Checkpoint
) -> tuple[AblationReport, dict[str, Checkpoint]]:
    """Train/evaluate the five ladder configurations under one seed and one
    evaluation episode set. Row one evaluates the pre-trained backbone
    directly; every other row meta-trains from it."""
    report = AblationReport()
    ckpts: dict[str, Checkpoint] = {}
    for label in ABLATION_LADDER:
        row_cfg = _ladder_config(cfg, label)
        if label == "Visual backbone":
            ckpt = pretrain_ckpt
        else:
            ckpt = run_meta_train(row_cfg, ds, manifest, pretrain_ckpt)
        ckpts[label] = ckpt
        rep = evaluate(row_cfg, ds, manifest, ckpt)
        print(f"ablation row {label!r}: {rep.summary()}")
        report.rows.append((label, rep))
    return report, ckpts


def run_sweep(
    cfg: Config, ds: DatasetFile, manifest: SplitManifest, pretrain_ckpt: Checkpoint
) -> tuple[SweepReport, SweepReport]:
    """Accuracy-vs-lambda and accuracy-vs-alpha grids for simplefsl_pp.

    lambda only affects inference, so one trained model serves the whole
    lambda grid; each alpha point retrains."""
    base_cfg = cfg.with_overrides(method="simplefsl_pp")
    trained = run_meta_train(base_cfg, ds, manifest, pretrain_ckpt)
    lam_report = SweepReport("lambda")
    for lam in cfg["sweep.lambda"]:
        rep = evaluate(base_cfg.with_overrides(**{"lambda": lam}), ds, manifest, trained)
        lam_report.points.append((lam, rep))
    alpha_report = SweepReport("alpha")
    for alpha in cfg["sweep.alpha"]:
        a_cfg = base_cfg.with_overrides(**{"alpha": alpha})
        ckpt = trained if alpha == cfg["alpha"] else run_meta_train(a_cfg, ds, manifest, pretrain_ckpt)
        alpha_report.points.append((alpha, evaluate(a_cfg, ds, manifest, ckpt)))
    return lam_report, alpha_report


def export_embeddings(
    cfg: Config, ds: DatasetFile, manifest: SplitManifest, ckpt: Checkpoint, path: str
) -> np.ndarray:
    """Write pre-classifier representations of an N-way many-shot support set
    as CSV rows of d_v feature values followed by the class label."""
    model = _load_model(cfg, ds, ckpt)
    episode = sample_episode(
        ds,
        manifest.split(cfg["eval.split"]),
        cfg["export.n_way"],
        cfg["export.shots"],
        0,
        (cfg["export.seed"], STREAM_EXPORT_EPISODE, 0),
    )
    with no_grad():
        feats, labels = fused_sample_features(model, episode)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row, label in zip(feats, labels):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write(f",{int(label)}\n")
    return np.column_stack([feats, labels])
