"""Task metrics, the few-shot protocol, efficiency reports and embedding export."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ModelConfig, TrainConfig
from .data.manifest import DatasetManifest
from .data.splits import WindowSet, build_windows, few_shot_split
from .model import DatasetHead, RmGPT
from .numeric import Tape, backward, count_flops
from .training import run_phase, step_names


# --------------------------------------------------------------------- metrics

@dataclass
class MetricReport:
    task: str
    n: int
    accuracy: float | None = None
    mae: float | None = None
    mse: float | None = None
    confusion: list[list[int]] | None = None

    def to_text(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def metric_report(task: str, predictions: np.ndarray, targets: np.ndarray,
                  num_classes: int = 0) -> MetricReport:
    """Accuracy and confusion counts, or MAE and MSE; sums are order-exact."""
    predictions, targets = np.asarray(predictions), np.asarray(targets)
    if predictions.shape != targets.shape:
        raise ValueError(f"{predictions.shape} predictions for {targets.shape} targets")
    n = int(targets.size)
    if n == 0:
        raise ValueError("empty evaluation set")
    if task == "diagnosis":
        C = max(num_classes, int(targets.max()) + 1, int(predictions.max()) + 1)
        confusion = np.zeros((C, C), dtype=np.int64)
        np.add.at(confusion, (targets.astype(np.int64), predictions.astype(np.int64)), 1)
        return MetricReport(task, n, accuracy=float(np.trace(confusion)) / n,
                            confusion=confusion.tolist())
    if task == "prognosis":
        err = predictions.astype(np.float64) - targets.astype(np.float64)
        return MetricReport(task, n, mae=math.fsum(np.abs(err)) / n,
                            mse=math.fsum(err * err) / n)
    raise ValueError(f"cannot score task {task!r}")


def evaluate(model: RmGPT, windows: WindowSet, batch_size: int = 64) -> MetricReport:
    head = model.heads.get(windows.dataset)
    if head is None or head.task != windows.task:
        raise ValueError(f"task mismatch: {windows.dataset} is {windows.task}, model has "
                         f"{head.task if head else 'no head'}")
    preds = model.predict(windows.windows, windows.dataset, batch_size)
    targets = windows.labels if windows.task == "diagnosis" else windows.ruls
    return metric_report(windows.task, preds, targets, head.num_classes)


# --------------------------------------------------------------------- few-shot

@dataclass
class FewShotResult:
    k: int
    accuracies: list[float]
    train_counts: list[int]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def spread(self) -> float:
        return float(np.std(self.accuracies))


def few_shot_eval(model: RmGPT, manifest: DatasetManifest, ks: Sequence[int],
                  seeds: Sequence[int], cfg: TrainConfig, L: int, target_hz: float,
                  hop: int | None = None) -> list[FewShotResult]:
    """Prompt-adapt a copy of ``model`` on k records per class and score the rest."""
    if manifest.task != "diagnosis":
        raise ValueError("few-shot evaluation needs a diagnosis dataset")
    full = build_windows(manifest, L, target_hz, hop)
    out = []
    for k in ks:
        res = FewShotResult(k, [], [])
        for seed in seeds:
            train_idx, test_idx = few_shot_split(manifest, k, seed)
            if set(train_idx) & set(test_idx):
                raise AssertionError("few-shot train and test records overlap")
            train = full.subset(np.flatnonzero(np.isin(full.records, train_idx)))
            test = full.subset(np.flatnonzero(np.isin(full.records, test_idx)))
            adapted = model.copy()
            if manifest.name not in adapted.heads:
                adapted.add_dataset(DatasetHead(manifest.name, "diagnosis", manifest.channels,
                                                manifest.num_classes), seed)
            run_phase(adapted, [train], cfg, "prompt", seed=seed)
            res.accuracies.append(evaluate(adapted, test).accuracy)
            res.train_counts.append(len(train))
        out.append(res)
    return out


def fewshot_inversions(results: Sequence[FewShotResult]) -> int:
    """Number of adjacent k pairs where mean accuracy drops."""
    means = [r.mean for r in results]
    return sum(b < a for a, b in zip(means, means[1:]))


# --------------------------------------------------------------------- efficiency

VARIANTS = ("orin", "without_patch", "without_tc")


def variant_config(cfg: ModelConfig, variant: str) -> ModelConfig:
    """``without_patch`` tokenizes every sample; ``without_tc`` attends jointly."""
    if variant == "orin":
        return cfg
    if variant == "without_patch":
        return dataclasses.replace(cfg, P=1, S=1, l_s_max=max(cfg.l_s_max, cfg.L))
    if variant == "without_tc":
        return dataclasses.replace(cfg, attention="joint")
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class EfficiencyReport:
    variant: str
    channels: int
    flops: int
    params_total: int
    params_trainable: dict[str, int]
    latency_ms: float | None = None
    backward_ms: dict[str, float] = field(default_factory=dict)

    @property
    def prompt_fraction(self) -> float:
        return self.params_trainable["prompt"] / self.params_total

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["prompt_fraction"] = self.prompt_fraction
        return out


def _median_ms(fn, repeats: int) -> float:
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def bench_efficiency(cfg: ModelConfig, channels: int = 2, num_classes: int = 4,
                     variants: Iterable[str] = VARIANTS, repeats: int = 30,
                     measure: bool = True, seed: int = 0) -> list[EfficiencyReport]:
    """Counted flops, parameter counts per mode and (optionally) timings per variant.

    Latency is the median of ``repeats`` warm batch-1 forwards; backward
    times are medians of one gradient pass in each adaptation mode.
    """
    reports = []
    rng = np.random.default_rng(seed)
    for variant in variants:
        vcfg = variant_config(cfg, variant)
        model = RmGPT.create(vcfg, [DatasetHead("bench", "diagnosis", channels, num_classes)], seed)
        store = model.store
        rep = EfficiencyReport(
            variant, channels, count_flops(vcfg, channels).total, store.count(),
            {mode: store.count(store.trainable_names(mode)) for mode in ("pretrain", "prompt",
                                                                        "finetune")})
        if measure:
            x = rng.normal(size=(1, vcfg.L, channels)).astype(np.float32)
            params = store.tensors()
            rep.latency_ms = _median_ms(lambda: model.encode(params, x, "bench"), repeats)
            for mode in ("prompt", "finetune"):
                names = step_names(model, mode, "bench")

                def grad_pass():
                    p = store.tensors(names)
                    with Tape() as tape:
                        loss = model.adapt_loss(p, x, np.zeros(1, dtype=np.int64), "bench")
                    backward(tape, loss, [p[n] for n in names])

                rep.backward_ms[mode] = _median_ms(grad_pass, max(3, repeats // 10))
        reports.append(rep)
    return reports


# --------------------------------------------------------------------- token space

def pca_2d(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project rows of ``X`` on the top-2 principal axes.

    Each axis is sign-fixed so its largest-magnitude coordinate is positive.
    Returns ``(coords (n, 2), components (2, D), mean (D,))``.
    """
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(len(X) - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    comps = vecs[:, np.argsort(vals)[::-1][:2]].T
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1
    return Xc @ comps.T, comps, mean


def class_separation(X: np.ndarray, labels: np.ndarray) -> float:
    """Mean pairwise centroid distance over mean distance to own centroid."""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    cents = np.stack([X[labels == c].mean(axis=0) for c in classes])
    intra = np.mean([np.linalg.norm(X[labels == c] - cents[i], axis=1).mean()
                     for i, c in enumerate(classes)])
    pair = [np.linalg.norm(cents[i] - cents[j])
            for i in range(len(classes)) for j in range(i + 1, len(classes))]
    if intra == 0:  # one sample (or identical samples) per class
        return math.inf if np.mean(pair) > 0 else 0.0
    return float(np.mean(pair) / intra)


def export_embeddings(model: RmGPT, windows: WindowSet, out_dir: str | Path,
                      with_pca: bool = True) -> dict[str, Path]:
    """Write health tokens, prototypes and (optionally) their 2D PCA as CSV.

    * ``embeddings.csv``: ``dataset, label, e0 .. e{M*d-1}``
    * ``prototypes.csv``: ``dataset, class, e0 .. e{M*d-1}``
    * ``pca.csv``: ``kind, dataset, label, x, y`` for both kinds of rows

    Label is the class index for diagnosis and the RUL for prognosis.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = windows.dataset
    H = model.health_tokens(windows.windows, ds).reshape(len(windows), -1).astype(np.float64)
    labels = windows.labels if windows.labels is not None else windows.ruls
    protos = model.store[f"fault.{ds}.prototypes"]
    F = protos.reshape(len(protos), -1).astype(np.float64)
    cols = [f"e{i}" for i in range(H.shape[1])]
    paths = {"embeddings": out_dir / "embeddings.csv", "prototypes": out_dir / "prototypes.csv"}
    _write_csv(paths["embeddings"], ["dataset", "label"] + cols,
               [[ds, _fmt(l)] + [repr(float(v)) for v in row] for l, row in zip(labels, H)])
    _write_csv(paths["prototypes"], ["dataset", "class"] + cols,
               [[ds, str(c)] + [repr(float(v)) for v in row] for c, row in enumerate(F)])
    if with_pca:
        coords, _, _ = pca_2d(np.concatenate([H, F]))
        kinds = ["window"] * len(H) + ["prototype"] * len(F)
        labs = [_fmt(l) for l in labels] + [str(c) for c in range(len(F))]
        paths["pca"] = out_dir / "pca.csv"
        _write_csv(paths["pca"], ["kind", "dataset", "label", "x", "y"],
                   [[k, ds, l, repr(float(x)), repr(float(y))]
                    for k, l, (x, y) in zip(kinds, labs, coords)])
    return paths


def read_embeddings(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return ([r[0] for r in rows], [r[1] for r in rows],
            np.array([[float(v) for v in r[2:]] for r in rows]))


def _fmt(label) -> str:
    v = float(label)
    return str(int(v)) if v.is_integer() and not isinstance(label, float) else repr(v)


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
