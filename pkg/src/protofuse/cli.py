"""Command-line front end: binds config files to the pipeline stages.

Every subcommand takes ``--config <path>`` plus repeatable ``--set
key=value`` overrides (flag > file > default), writes the fully resolved
config into the output directory before any compute, and exits non-zero
with a one-line ``error: <category>: <message>`` on failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import Config, resolve_config
from .data import (
    SyntheticSpec,
    generate_synthetic,
    read_dataset,
    read_manifest,
    write_dataset,
    write_manifest,
)
from .errors import EngineError, InvalidArgumentError
from .pipeline import (
    evaluate,
    export_embeddings,
    run_ablation,
    run_alignment,
    run_meta_train,
    run_pretrain,
    run_sweep,
)
from .reports import write_records, write_table

EXIT_CODES = {
    "config": 2,
    "invalid-argument": 2,
    "format": 3,
    "capacity": 4,
    "invalid-state": 5,
    "determinism": 6,
    "non-finite": 7,
    "internal": 1,
}


def _prepare(cfg: Config) -> str:
    """Create the output directory and write the resolved config first."""
    out = cfg["paths.out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "resolved.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.text())
    return out


def _load_inputs(cfg: Config):
    return read_dataset(cfg["paths.data"]), read_manifest(cfg["paths.manifest"])


def _input_checkpoint(cfg: Config) -> Checkpoint:
    path = cfg["paths.checkpoint"]
    if not path:
        raise InvalidArgumentError("this command needs paths.checkpoint to be set")
    return load_checkpoint(path)


def _cmd_gen_data(cfg: Config) -> None:
    _prepare(cfg)
    spec = SyntheticSpec(
        num_classes=cfg["data.num_classes"],
        samples_per_class=cfg["data.samples_per_class"],
        d_in=cfg["data.d_in"],
        attr_dim=cfg["data.attr_dim"],
        visual_cluster_sigma=cfg["data.visual_cluster_sigma"],
        semantic_signal=cfg["data.semantic_signal"],
        master_seed=cfg["data.seed"],
        semantic_seed=cfg["model.semantic_seed"],
    )
    ds, manifest = generate_synthetic(spec)
    for path in (cfg["paths.data"], cfg["paths.manifest"]):
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
    write_dataset(cfg["paths.data"], ds)
    write_manifest(cfg["paths.manifest"], manifest)
    print(f"wrote {ds.num_classes} classes to {cfg['paths.data']}")


def _cmd_pretrain(cfg: Config) -> None:
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    ckpt, _ = run_pretrain(cfg, ds, manifest)
    path = os.path.join(out, "pretrain.fslc")
    save_checkpoint(path, ckpt)
    print(f"wrote {path}")


def _cmd_meta_train(cfg: Config) -> None:
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    init = load_checkpoint(cfg["paths.checkpoint"]) if cfg["paths.checkpoint"] else None
    ckpt = run_meta_train(cfg, ds, manifest, init)
    path = os.path.join(out, "meta.fslc")
    save_checkpoint(path, ckpt)
    print(f"wrote {path}")


def _cmd_eval(cfg: Config) -> None:
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    report = evaluate(cfg, ds, manifest, _input_checkpoint(cfg))
    write_table(os.path.join(out, "eval_report.txt"), cfg.text(), report.summary() + "\n")
    write_records(os.path.join(out, "eval_report.jsonl"), cfg.text(), [report.record()])
    print(report.summary())
    print(f"wall seconds: {report.wall_seconds:.2f}")


def _cmd_ablate(cfg: Config) -> None:
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    report, ckpts = run_ablation(cfg, ds, manifest, _input_checkpoint(cfg))
    for i, (label, _) in enumerate(report.rows):
        save_checkpoint(os.path.join(out, f"ablation_row{i}.fslc"), ckpts[label])
    write_table(os.path.join(out, "ablation_report.txt"), cfg.text(), report.table())
    records = [
        dict(row=i, label=label, **rep.record())
        for i, (label, rep) in enumerate(report.rows)
    ]
    write_records(os.path.join(out, "ablation_report.jsonl"), cfg.text(), records)
    print(report.table())


def _cmd_sweep(cfg: Config) -> None:
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    lam_report, alpha_report = run_sweep(cfg, ds, manifest, _input_checkpoint(cfg))
    body = lam_report.table() + "\n" + alpha_report.table()
    write_table(os.path.join(out, "sweep_report.txt"), cfg.text(), body)
    records = []
    for rep in (lam_report, alpha_report):
        for value, point in rep.points:
            records.append(dict(parameter=rep.parameter, value=value, **point.record()))
        records.append(
            {
                "type": "sweep_best",
                "parameter": rep.parameter,
                "best_value": rep.best()[0],
                "position": rep.best_position(),
            }
        )
    write_records(os.path.join(out, "sweep_report.jsonl"), cfg.text(), records)
    print(body)


def _cmd_zero_shot(cfg: Config) -> None:
    if cfg["method"] not in ("zeroshot", "zeroshot_lp"):
        raise InvalidArgumentError("zero-shot runs need method=zeroshot or method=zeroshot_lp")
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    ckpt = run_alignment(cfg, ds, manifest)
    save_checkpoint(os.path.join(out, "align.fslc"), ckpt)
    report = evaluate(cfg, ds, manifest, ckpt)
    write_table(os.path.join(out, "eval_report.txt"), cfg.text(), report.summary() + "\n")
    write_records(os.path.join(out, "eval_report.jsonl"), cfg.text(), [report.record()])
    print(report.summary())


def _cmd_export_embeddings(cfg: Config) -> None:
    out = _prepare(cfg)
    ds, manifest = _load_inputs(cfg)
    path = os.path.join(out, "embeddings.csv")
    rows = export_embeddings(cfg, ds, manifest, _input_checkpoint(cfg), path)
    print(f"wrote {rows.shape[0]} rows x {rows.shape[1]} columns to {path}")


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "pretrain": _cmd_pretrain,
    "meta-train": _cmd_meta_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "sweep": _cmd_sweep,
    "zero-shot": _cmd_zero_shot,
    "export-embeddings": _cmd_export_embeddings,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protofuse",
        description="few-shot engine: prototype fusion of visual and prompt-driven semantic features",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="path to a key = value config file")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable; highest precedence)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.overrides)
        _COMMANDS[args.command](cfg)
    except EngineError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
