"""Flat dotted-key configuration: defaults, file parsing, --set overrides.

Config files are plain text, one ``key = value`` per line, ``#`` comments.
Lists are comma-separated. Precedence is flag > file > built-in default.
Unknown keys are rejected. ``Config.text()`` renders the fully resolved
config; every run writes it before any compute and echoes it into
checkpoints and reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .errors import ConfigError

_METHODS = ("protonet", "simplefsl", "simplefsl_pp", "zeroshot", "zeroshot_lp")
_PROMPTS = ("fixed", "dataset", "class", "task")
_ADAPTORS = ("linear", "bottleneck", "residual")
_FUSIONS = ("add", "concat", "attention")
_SPLITS = ("base", "val", "novel")

# key -> (type, default, allowed-values or None)
SPEC: dict[str, tuple[str, Any, tuple | None]] = {
    "seed": ("int", 0, None),
    "method": ("str", "simplefsl_pp", _METHODS),
    "prompt": ("str", "dataset", _PROMPTS),
    "adaptor": ("str", "bottleneck", _ADAPTORS),
    "fusion": ("str", "add", _FUSIONS),
    "lambda": ("float", 0.05, None),
    "alpha": ("float", 1.0, None),
    "tau": ("float", 1.0, None),
    "tau2": ("float", 1.0, None),
    "contrastive_temp": ("float", 0.07, None),
    "model.d_v": ("int", 64, None),
    "model.d_h": ("int", 128, None),
    "model.d_text": ("int", 512, None),
    "model.prompt_len": ("int", 4, None),
    "model.vocab": ("int", 1024, None),
    "model.semantic_seed": ("int", 777, None),
    "optim.lr": ("float", 5e-4, None),
    "optim.weight_decay": ("float", 5e-2, None),
    "optim.beta1": ("float", 0.9, None),
    "optim.beta2": ("float", 0.999, None),
    "optim.eps": ("float", 1e-8, None),
    "optim.visual_lr": ("float", 1e-6, None),
    "pretrain.epochs": ("int", 15, None),
    "pretrain.batch_size": ("int", 64, None),
    "meta.episodes": ("int", 10000, None),
    "meta.n_way": ("int", 5, None),
    "meta.k_shot": ("int", 1, None),
    "meta.q_query": ("int", 15, None),
    "meta.val_interval": ("int", 500, None),
    "meta.val_tasks": ("int", 200, None),
    "align.steps": ("int", 2000, None),
    "align.batch_size": ("int", 32, None),
    "eval.split": ("str", "novel", _SPLITS),
    "eval.n_way": ("int", 5, None),
    "eval.k_shot": ("int", 1, None),
    "eval.q_query": ("int", 15, None),
    "eval.tasks": ("int", 2000, None),
    "eval.seed": ("int", 12345, None),
    "eval.threads": ("int", 1, None),
    "data.num_classes": ("int", 100, None),
    "data.samples_per_class": ("int", 250, None),
    "data.d_in": ("int", 40, None),
    "data.attr_dim": ("int", 16, None),
    "data.visual_cluster_sigma": ("float", 1.0, None),
    "data.semantic_signal": ("float", 0.8, None),
    "data.seed": ("int", 0, None),
    "sweep.lambda": ("float_list", (0.0, 0.25, 0.5, 0.75, 1.0), None),
    "sweep.alpha": ("float_list", (0.0, 0.5, 1.0, 2.0), None),
    "export.n_way": ("int", 5, None),
    "export.shots": ("int", 200, None),
    "export.seed": ("int", 555, None),
    "paths.data": ("str", "data/synthetic.fsld", None),
    "paths.manifest": ("str", "data/synthetic.splits", None),
    "paths.checkpoint": ("str", "", None),
    "paths.out": ("str", "out", None),
}


def _parse_value(key: str, raw: str) -> Any:
    kind, _, allowed = SPEC[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float_list":
            return tuple(float(part) for part in raw.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} for key {key!r} as {kind}") from None
    if allowed is not None and raw not in allowed:
        raise ConfigError(f"key {key!r} must be one of {', '.join(allowed)}, got {raw!r}")
    return raw


def _format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class Config:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        if key not in SPEC:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def with_overrides(self, **pairs: Any) -> "Config":
        clone = dict(self.values)
        for key, value in pairs.items():
            if key not in SPEC:
                raise ConfigError(f"unknown config key {key!r}")
            clone[key] = value
        return Config(clone)

    def text(self) -> str:
        lines = [f"{key} = {_format_value(self.values[key])}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"


def default_config() -> Config:
    return Config({key: default for key, (_, default, _) in SPEC.items()})


def parse_config_file(path: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            pairs[key.strip()] = raw
    return pairs


def resolve_config(path: str | None = None, overrides: list[str] | None = None) -> Config:
    """defaults <- config file <- --set overrides, validating every key."""
    values = {key: default for key, (_, default, _) in SPEC.items()}
    if path is not None:
        for key, raw in parse_config_file(path).items():
            if key not in SPEC:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in SPEC:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return Config(values)
