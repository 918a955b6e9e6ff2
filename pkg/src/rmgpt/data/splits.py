"""Train/test and few-shot splits, and window assembly for training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifest import DatasetManifest, load_payload
from .signals import resample, standardize, window_signal, SignalWindow


def few_shot_split(manifest: DatasetManifest, k: int, seed: int) -> tuple[list[int], list[int]]:
    """Exactly ``k`` records per class for training, every other record for testing."""
    if manifest.task != "diagnosis":
        raise ValueError(f"few-shot split needs a diagnosis dataset, got {manifest.task}")
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = manifest.labels()
    rng = np.random.default_rng(seed)
    train: list[int] = []
    for c, name in enumerate(manifest.class_names):
        idx = np.flatnonzero(labels == c)
        if idx.size < k:
            raise ValueError(f"class {name!r} has {idx.size} records, fewer than k={k}")
        train.extend(int(i) for i in rng.permutation(idx)[:k])
    train.sort()
    chosen = set(train)
    test = [i for i in range(len(manifest.records)) if i not in chosen]
    return train, test


def train_test_split(manifest: DatasetManifest, train_fraction: float = 0.8,
                     seed: int = 0) -> tuple[list[int], list[int]]:
    """Stratified by class for diagnosis, grouped by ``condition_tag`` (life) for prognosis."""
    rng = np.random.default_rng(seed)
    n = len(manifest.records)
    if manifest.task == "diagnosis":
        labels = manifest.labels()
        groups = [np.flatnonzero(labels == c) for c in range(manifest.num_classes)]
        train = []
        for idx in groups:
            perm = rng.permutation(idx)
            train.extend(int(i) for i in perm[:int(round(train_fraction * idx.size))])
    elif manifest.task == "prognosis":
        tags = sorted({r.condition_tag or str(i) for i, r in enumerate(manifest.records)})
        perm = [tags[i] for i in rng.permutation(len(tags))]
        keep = set(perm[:int(round(train_fraction * len(tags)))])
        train = [i for i, r in enumerate(manifest.records) if (r.condition_tag or str(i)) in keep]
    else:
        perm = rng.permutation(n)
        train = [int(i) for i in perm[:int(round(train_fraction * n))]]
    train.sort()
    chosen = set(train)
    return train, [i for i in range(n) if i not in chosen]


@dataclass
class WindowSet:
    """Raw (unstandardized) windows of one dataset, ready for batching."""

    dataset: str
    task: str
    windows: np.ndarray  # (n, L, M) float32
    labels: np.ndarray | None = None  # (n,) int64
    ruls: np.ndarray | None = None  # (n,) float64
    records: np.ndarray | None = None  # (n,) source record index

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def channels(self) -> int:
        return self.windows.shape[2]

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return WindowSet(self.dataset, self.task, self.windows[idx], pick(self.labels),
                         pick(self.ruls), pick(self.records))

    def signal_windows(self) -> list[SignalWindow]:
        return [standardize(w, (self.dataset, int(r), 0))
                for w, r in zip(self.windows, self.records if self.records is not None
                                else range(len(self)))]


def build_windows(manifest: DatasetManifest, L: int, target_hz: float = 5000.0,
                  hop: int | None = None, record_indices=None,
                  task: str | None = None) -> WindowSet:
    """Load, resample and window the chosen records of ``manifest``.

    Windows keep their record's label or RUL. ``task="unlabeled"`` drops
    targets so a labeled dataset can feed pretraining.
    """
    task = task or manifest.task
    indices = range(len(manifest.records)) if record_indices is None else record_indices
    windows, labels, ruls, recs = [], [], [], []
    for i in indices:
        raw = load_payload(manifest, i)
        if manifest.sample_rate_hz != target_hz:
            raw = resample(raw, manifest.sample_rate_hz, target_hz)
        w = window_signal(raw, L, hop)
        windows.append(w.astype(np.float32))
        rec = manifest.records[i]
        labels.extend([rec.label] * len(w))
        ruls.extend([rec.rul] * len(w))
        recs.extend([i] * len(w))
    if not windows:
        raise ValueError(f"{manifest.name}: no records selected")
    return WindowSet(
        dataset=manifest.name, task=task, windows=np.concatenate(windows),
        labels=np.array(labels, dtype=np.int64) if task == "diagnosis" else None,
        ruls=np.array(ruls, dtype=np.float64) if task == "prognosis" else None,
        records=np.array(recs, dtype=np.int64))
