"""Command-line entry point: ``rmgpt <command> [options]``.

Commands::

    data synth|inspect|split   synthetic data, manifest summaries, record splits
    pretrain                   masked next-patch pretraining
    adapt --mode prompt|finetune
    eval                       held-out metrics of a checkpoint
    fewshot                    k-shot prompt-learning sweep
    bench                      flops, parameter counts and latency per variant
    export-embeddings          health tokens, prototypes and their 2D PCA

Exit status is 0 on success, 2 for usage/config/validation errors (the
message names the offending key) and 1 for runtime failures. Every run
writes ``summary-<command>.json`` and the resolved config to its run
directory.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import PRESETS, ConfigError, RunConfig, dump_config, preset, validate_config
from .data import (ManifestError, SyntheticSpec, build_windows, few_shot_split, generate_synthetic,
                   load_manifest, train_test_split, write_manifest)
from .data.synthetic import MODES
from .params import CheckpointError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Bad flag combination; carries the offending flag name like ConfigError."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmgpt", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p: argparse.ArgumentParser, manifests: bool = True) -> None:
        p.add_argument("--config", help="INI config file; missing keys come from its preset")
        p.add_argument("--preset", choices=PRESETS, help="preset used when --config is absent")
        p.add_argument("--seed", type=int, help="root seed (overrides train.seed)")
        p.add_argument("--out", help="run directory (overrides output.run_dir)")
        p.add_argument("--checkpoint", help="checkpoint path")
        if manifests:
            p.add_argument("--manifest", action="append",
                           help="dataset manifest (repeatable; overrides data.manifests)")

    data = sub.add_parser("data", help="synthesize, inspect or split datasets")
    dsub = data.add_subparsers(dest="data_command", required=True)
    synth = dsub.add_parser("synth", help="generate a synthetic bearing dataset")
    synth.add_argument("--mode", choices=MODES, default="diagnosis")
    synth.add_argument("--n", type=int, default=100, help="records per class, or lives")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--channels", type=int, default=2)
    synth.add_argument("--out", required=True, help="output directory")
    inspect = dsub.add_parser("inspect", help="summarize a manifest")
    inspect.add_argument("--manifest", required=True)
    inspect.add_argument("--config")
    inspect.add_argument("--preset", choices=PRESETS)
    split = dsub.add_parser("split", help="write train/test record indices")
    split.add_argument("--manifest", required=True)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--k", type=int, help="few-shot split with k records per class")
    split.add_argument("--train-fraction", type=float, default=0.8)
    split.add_argument("--out", required=True, help="output JSON file")

    run_flags(sub.add_parser("pretrain", help="masked next-patch pretraining"))
    adapt = sub.add_parser("adapt", help="prompt learning or full finetuning")
    run_flags(adapt)
    adapt.add_argument("--mode", choices=("prompt", "finetune"), default="prompt")
    ev = sub.add_parser("eval", help="evaluate a checkpoint on held-out records")
    run_flags(ev)
    ev.add_argument("--split", choices=("test", "all"), default="test")
    few = sub.add_parser("fewshot", help="k-shot prompt-learning sweep")
    run_flags(few)
    few.add_argument("--k", type=int, nargs="+", default=[1, 4, 8, 16])
    few.add_argument("--trials", type=int, default=5, help="split seeds per k")
    few.add_argument("--baseline", action="store_true",
                     help="also sweep a randomly initialized encoder")
    bench = sub.add_parser("bench", help="efficiency report per architecture variant")
    run_flags(bench, manifests=False)
    bench.add_argument("--repeats", type=int, default=30)
    bench.add_argument("--channels", type=int, default=2)
    bench.add_argument("--no-timing", action="store_true", help="counts only")
    export = sub.add_parser("export-embeddings", help="write health tokens and prototypes")
    run_flags(export)
    export.add_argument("--split", choices=("test", "all"), default="test")
    export.add_argument("--no-pca", action="store_true")
    return parser


# --------------------------------------------------------------------- config

def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or preset) with command-line overrides applied and validated."""
    if getattr(args, "config", None):
        cfg = validate_config(args.config, check_paths=False)
    else:
        cfg = preset(getattr(args, "preset", None) or "desk")
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if getattr(args, "out", None):
        cfg.output.run_dir = args.out
    if getattr(args, "checkpoint", None):
        cfg.output.checkpoint = args.checkpoint
    if getattr(args, "manifest", None):
        given = args.manifest
        cfg.data.manifests = [given] if isinstance(given, str) else list(given)
    return cfg.validate(check_paths=True)


def _manifests(cfg: RunConfig, need: bool = True):
    if need and not cfg.data.manifests:
        raise ConfigError("data.manifests", "no dataset manifests given")
    return [load_manifest(p) for p in cfg.data.manifests]


def _hop(cfg: RunConfig) -> int | None:
    return cfg.data.hop or None


def _windows(cfg: RunConfig, manifest, records=None, task=None):
    return build_windows(manifest, cfg.model.L, cfg.data.target_hz, _hop(cfg),
                         record_indices=records, task=task)


def _labeled(manifests):
    out = [m for m in manifests if m.task in ("diagnosis", "prognosis")]
    if not out:
        raise ConfigError("data.manifests", "no diagnosis or prognosis dataset given")
    return out


def _load_model(cfg: RunConfig, required: bool = True):
    from .model import RmGPT

    path = cfg.output.checkpoint
    if not path:
        if required:
            raise ConfigError("output.checkpoint", "this command needs --checkpoint")
        return None
    if not Path(path).exists():
        raise ConfigError("output.checkpoint", f"no such file: {path}")
    return RmGPT.load(path, cfg.model)


def _ensure_heads(model, manifests, seed: int) -> None:
    from .experiments import head_for

    for m in manifests:
        if m.name not in model.heads:
            model.add_dataset(head_for(m), seed)
        elif model.heads[m.name].channels != m.channels:
            raise ConfigError("data.manifests", f"{m.name}: checkpoint has "
                              f"{model.heads[m.name].channels} channels, data has {m.channels}")


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_summary(cfg: RunConfig, command: str, argv: list[str], results: dict,
                   started: float, checkpoint: str | None = None) -> dict:
    run_dir = Path(cfg.output.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved.cfg").write_text(dump_config(cfg))
    summary = {"command": command, "argv": argv, "seed": cfg.train.seed,
               "config_hash": cfg.config_hash(), "config": cfg.to_dict(),
               "results": results, "wall_clock_s": time.perf_counter() - started}
    if checkpoint:
        summary["checkpoint"] = str(checkpoint)
        summary["checkpoint_sha256"] = _sha256(checkpoint)
    (run_dir / f"summary-{command}.json").write_text(json.dumps(summary, indent=2, default=float))
    return summary


# --------------------------------------------------------------------- commands

def cmd_data(args) -> dict:
    if args.data_command == "synth":
        spec = SyntheticSpec(mode=args.mode, seed=args.seed, channels=args.channels)
        try:
            manifest, payloads = generate_synthetic(spec, args.n)
        except ValueError as exc:
            raise UsageError("data synth", str(exc)) from None
        path = write_manifest(manifest, payloads, args.out)
        return {"manifest": str(path), "records": len(manifest.records), "task": manifest.task}
    manifest = load_manifest(args.manifest)
    if args.data_command == "inspect":
        cfg = resolve_config(args)
        windows = _windows(cfg, manifest)
        info = {"name": manifest.name, "task": manifest.task, "channels": manifest.channels,
                "sample_rate_hz": manifest.sample_rate_hz, "records": len(manifest.records),
                "windows": len(windows), "window_length": cfg.model.L}
        if manifest.task == "diagnosis":
            counts = np.bincount(manifest.labels(), minlength=manifest.num_classes)
            info["class_counts"] = dict(zip(manifest.class_names, counts.tolist()))
        if manifest.task == "prognosis":
            info["lives"] = len({r.condition_tag for r in manifest.records})
            info["anchor_count"] = manifest.anchor_count
        return info
    try:
        if args.k is not None:
            train, test = few_shot_split(manifest, args.k, args.seed)
        else:
            train, test = train_test_split(manifest, args.train_fraction, args.seed)
    except ValueError as exc:
        raise UsageError("--k" if args.k is not None else "data split", str(exc)) from None
    out = {"manifest": str(Path(args.manifest).resolve()), "seed": args.seed, "k": args.k,
           "train": train, "test": test}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(out))
    return {"split": args.out, "train": len(train), "test": len(test)}


def cmd_pretrain(cfg: RunConfig) -> tuple[dict, str]:
    from .experiments import head_for
    from .model import RmGPT
    from .training import run_phase

    manifests = _manifests(cfg)
    seed = cfg.train.seed
    model = RmGPT.create(cfg.model, [head_for(m) for m in manifests], seed)
    sets = [_windows(cfg, m, task="unlabeled") for m in manifests]
    ckpt = cfg.output.checkpoint or str(Path(cfg.output.run_dir) / "pretrain.ckpt")
    log = run_phase(model, sets, cfg.train, "pretrain", seed=seed, checkpoint=ckpt)
    return {"log": log.to_dict(), "windows": sum(len(s) for s in sets)}, log.checkpoint


def cmd_adapt(cfg: RunConfig, mode: str) -> tuple[dict, str]:
    from .experiments import head_for
    from .model import RmGPT
    from .training import run_phase

    manifests = _labeled(_manifests(cfg))
    seed = cfg.train.seed
    model = _load_model(cfg, required=False)
    source = cfg.output.checkpoint or None
    if model is None:
        model = RmGPT.create(cfg.model, [head_for(m) for m in manifests], seed)
    _ensure_heads(model, manifests, seed)
    sets = [_windows(cfg, m, train_test_split(m, 0.8, seed)[0]) for m in manifests]
    before = model.store.checksum(model.store.names(("backbone", "tokenizer", "decoder")))
    ckpt = str(Path(cfg.output.run_dir) / f"adapt-{mode}.ckpt")
    log = run_phase(model, sets, cfg.train, mode, seed=seed, checkpoint=ckpt)
    after = model.store.checksum(model.store.names(("backbone", "tokenizer", "decoder")))
    return {"log": log.to_dict(), "source_checkpoint": source,
            "frozen_unchanged": before == after}, log.checkpoint


def _eval_sets(cfg: RunConfig, manifests, split: str):
    seed = cfg.train.seed
    for m in manifests:
        records = None if split == "all" else train_test_split(m, 0.8, seed)[1]
        yield m, _windows(cfg, m, records)


def cmd_eval(cfg: RunConfig, split: str) -> dict:
    from .evaluation import evaluate

    model = _load_model(cfg)
    manifests = _labeled(_manifests(cfg))
    out = {}
    for m, windows in _eval_sets(cfg, manifests, split):
        if m.name not in model.heads:
            raise ConfigError("data.manifests", f"{m.name}: checkpoint was not adapted to it")
        out[m.name] = dataclasses.asdict(evaluate(model, windows))
    return out


def cmd_fewshot(cfg: RunConfig, ks: list[int], trials: int, baseline: bool) -> dict:
    from .evaluation import few_shot_eval, fewshot_inversions
    from .model import RmGPT

    manifests = [m for m in _manifests(cfg) if m.task == "diagnosis"]
    if not manifests:
        raise ConfigError("data.manifests", "few-shot needs a diagnosis dataset")
    if any(k < 1 for k in ks):
        raise UsageError("--k", "k must be >= 1")
    seed = cfg.train.seed
    seeds = [seed + i for i in range(trials)]
    encoders = {"checkpoint": _load_model(cfg, required=False)}
    if encoders["checkpoint"] is None:
        encoders = {"random": RmGPT.create(cfg.model, [], seed)}
    elif baseline:
        encoders["random"] = RmGPT.create(cfg.model, [], seed)
    out = {}
    for label, model in encoders.items():
        for m in manifests:
            rows = few_shot_eval(model, m, ks, seeds, cfg.train, cfg.model.L, cfg.data.target_hz,
                                 _hop(cfg))
            out.setdefault(label, {})[m.name] = {
                "table": [{"k": r.k, "mean": r.mean, "spread": r.spread,
                           "accuracies": r.accuracies, "train_windows": r.train_counts}
                          for r in rows],
                "inversions": fewshot_inversions(rows)}
    return out


def cmd_bench(cfg: RunConfig, repeats: int, channels: int, timing: bool) -> dict:
    from .evaluation import bench_efficiency

    if repeats < 1:
        raise UsageError("--repeats", "must be >= 1")
    reports = bench_efficiency(cfg.model, channels, repeats=repeats, measure=timing,
                               seed=cfg.train.seed)
    return {r.variant: r.to_dict() for r in reports}


def cmd_export(cfg: RunConfig, split: str, with_pca: bool) -> dict:
    from .evaluation import export_embeddings

    model = _load_model(cfg)
    out = {}
    for m, windows in _eval_sets(cfg, _labeled(_manifests(cfg)), split):
        if m.name not in model.heads:
            raise ConfigError("data.manifests", f"{m.name}: checkpoint was not adapted to it")
        target = Path(cfg.output.run_dir) / "embeddings" / m.name
        out[m.name] = {k: str(v) for k, v in export_embeddings(model, windows, target,
                                                              with_pca).items()}
    return out


# --------------------------------------------------------------------- main

def _dispatch(args, argv: list[str]) -> dict:
    started = time.perf_counter()
    if args.command == "data":
        return {"command": f"data {args.data_command}", "results": cmd_data(args)}
    cfg = resolve_config(args)
    checkpoint = None
    if args.command == "pretrain":
        results, checkpoint = cmd_pretrain(cfg)
    elif args.command == "adapt":
        results, checkpoint = cmd_adapt(cfg, args.mode)
    elif args.command == "eval":
        results = cmd_eval(cfg, args.split)
    elif args.command == "fewshot":
        results = cmd_fewshot(cfg, args.k, args.trials, args.baseline)
    elif args.command == "bench":
        results = cmd_bench(cfg, args.repeats, args.channels, not args.no_timing)
    else:
        results = cmd_export(cfg, args.split, not args.no_pca)
    return _write_summary(cfg, args.command, argv, results, started, checkpoint)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        summary = _dispatch(args, argv)
    except (ConfigError, UsageError) as exc:
        print(f"rmgpt: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ManifestError, CheckpointError) as exc:
        print(f"rmgpt: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: report and signal 1
        print(f"rmgpt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
