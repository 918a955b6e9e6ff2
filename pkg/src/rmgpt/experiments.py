"""End-to-end synthetic experiments shared by scripts, the CLI and tests."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig
from .data.manifest import DatasetManifest, load_manifest, write_manifest
from .data.splits import WindowSet, build_windows, train_test_split
from .data.synthetic import SyntheticSpec, generate_synthetic
from .evaluation import (FewShotResult, MetricReport, class_separation, evaluate, few_shot_eval)
from .model import DatasetHead, RmGPT
from .training import RunLog, run_phase


def synthesize(out_dir: str | Path, mode: str, n: int, seed: int = 0,
               **overrides) -> DatasetManifest:
    """Generate a synthetic dataset on disk and return its loaded manifest."""
    spec = SyntheticSpec(mode=mode, seed=seed, **overrides)
    manifest, payloads = generate_synthetic(spec, n)
    return load_manifest(write_manifest(manifest, payloads, out_dir))


def head_for(manifest: DatasetManifest) -> DatasetHead:
    classes = manifest.num_classes if manifest.task == "diagnosis" else manifest.anchor_count
    return DatasetHead(manifest.name, manifest.task, manifest.channels, classes)


def pretrained_model(cfg: ModelConfig, train: TrainConfig, unlabeled: DatasetManifest,
                     target_hz: float = 5000.0, seed: int = 0,
                     extra_heads=()) -> tuple[RmGPT, RunLog]:
    windows = build_windows(unlabeled, cfg.L, target_hz, task="unlabeled")
    model = RmGPT.create(cfg, [head_for(unlabeled), *extra_heads], seed)
    log = run_phase(model, [windows], train, "pretrain", seed=seed)
    return model, log


@dataclass
class DiagnosisResult:
    report: MetricReport
    pretrain_log: RunLog | None
    adapt_log: RunLog
    separation_tokens: float
    separation_raw: float
    seconds: float
    extras: dict = field(default_factory=dict)


def standardized_flat(windows: WindowSet) -> np.ndarray:
    return np.stack([w.values.reshape(-1) for w in windows.signal_windows()])


def diagnosis_experiment(work: str | Path, cfg: ModelConfig, train: TrainConfig,
                         seed: int = 0, n_unlabeled: int = 100, n_per_class: int = 100,
                         pretrain: bool = True, mode: str = "prompt",
                         synth: dict | None = None,
                         encoder: RmGPT | None = None) -> DiagnosisResult:
    """Pretrain on unlabeled windows, adapt on an 8:2 split, score the held-out 20%.

    A given ``encoder`` (already pretrained) is copied and used instead of
    pretraining a new one.
    """
    start = time.perf_counter()
    work = Path(work)
    labeled = synthesize(work / "diagnosis", "diagnosis", n_per_class, seed, **(synth or {}))
    if encoder is not None:
        model, plog = encoder.copy(), None
        if labeled.name not in model.heads:
            model.add_dataset(head_for(labeled), seed)
    elif pretrain:
        unlabeled = synthesize(work / "unlabeled", "unlabeled", n_unlabeled, seed, **(synth or {}))
        model, plog = pretrained_model(cfg, train, unlabeled, seed=seed,
                                       extra_heads=[head_for(labeled)])
    else:
        model, plog = RmGPT.create(cfg, [head_for(labeled)], seed), None
    tr, te = train_test_split(labeled, 0.8, seed)
    train_w = build_windows(labeled, cfg.L, record_indices=tr)
    test_w = build_windows(labeled, cfg.L, record_indices=te)
    alog = run_phase(model, [train_w], train, mode, seed=seed)
    report = evaluate(model, test_w)
    sep_t = class_separation(model.health_tokens(test_w.windows, test_w.dataset), test_w.labels)
    sep_r = class_separation(standardized_flat(test_w), test_w.labels)
    return DiagnosisResult(report, plog, alog, sep_t, sep_r, time.perf_counter() - start,
                           {"model": model, "test": test_w})


def prognosis_experiment(work: str | Path, cfg: ModelConfig, train: TrainConfig,
                         seed: int = 0, lives: int = 20, n_unlabeled: int = 100,
                         pretrain: bool = True, mode: str = "prompt") -> tuple[MetricReport, dict]:
    """Run-to-failure lives split 8:2 by life; returns held-out RUL metrics."""
    start = time.perf_counter()
    work = Path(work)
    progn = synthesize(work / "prognosis", "prognosis", lives, seed)
    if pretrain:
        unlabeled = synthesize(work / "unlabeled", "unlabeled", n_unlabeled, seed)
        model, _ = pretrained_model(cfg, train, unlabeled, seed=seed, extra_heads=[head_for(progn)])
    else:
        model = RmGPT.create(cfg, [head_for(progn)], seed)
    tr, te = train_test_split(progn, 0.8, seed)
    train_w = build_windows(progn, cfg.L, record_indices=tr)
    test_w = build_windows(progn, cfg.L, record_indices=te)
    log = run_phase(model, [train_w], train, mode, seed=seed)
    report = evaluate(model, test_w)
    return report, {"log": log, "model": model, "test": test_w,
                    "seconds": time.perf_counter() - start}


def fewshot_experiment(work: str | Path, cfg: ModelConfig, train: TrainConfig,
                       ks=(1, 4, 8, 16), seeds=(0, 1, 2, 3, 4), seed: int = 0,
                       n_unlabeled: int = 100, n_per_class: int = 100,
                       synth: dict | None = None,
                       encoder: RmGPT | None = None) -> dict[str, list[FewShotResult]]:
    """Few-shot sweep from a pretrained and from a randomly initialized encoder."""
    work = Path(work)
    labeled = synthesize(work / "diagnosis", "diagnosis", n_per_class, seed, **(synth or {}))
    if encoder is None:
        unlabeled = synthesize(work / "unlabeled", "unlabeled", n_unlabeled, seed, **(synth or {}))
        encoder, _ = pretrained_model(cfg, train, unlabeled, seed=seed)
    pre = encoder
    scratch = RmGPT.create(cfg, [], seed)
    return {
        "pretrained": few_shot_eval(pre, labeled, ks, seeds, train, cfg.L, 5000.0),
        "random": few_shot_eval(scratch, labeled, ks, seeds, train, cfg.L, 5000.0),
    }


def desk_configs(**train_overrides) -> tuple[ModelConfig, TrainConfig]:
    from .config import preset

    run = preset("desk")
    return run.model, dataclasses.replace(run.train, **train_overrides)
