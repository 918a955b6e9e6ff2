"""Fault-token prototype banks: cosine diagnosis and distance-based RUL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Tensor, amin, as_tensor, clip, log_softmax, norm, reshape, square, tsum


@dataclass
class FaultPrototypeBank:
    dataset: str
    prototypes: np.ndarray  # (C, M, d)
    task: str = "diagnosis"

    def __post_init__(self):
        if self.prototypes.ndim != 3 or self.prototypes.shape[0] < 2:
            raise ValueError(f"prototype bank needs shape (C>=2, M, d), got {self.prototypes.shape}")
        if not np.isfinite(self.prototypes).all():
            raise ValueError("prototype bank has non-finite entries")

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]


@dataclass
class RulHead:
    a: float = 1.0
    b: float = 1.0


def _flatten(T_h, prototypes) -> tuple[Tensor, Tensor]:
    T_h, prototypes = as_tensor(T_h), as_tensor(prototypes)
    C, M, d = prototypes.shape
    if T_h.shape[-2:] != (M, d):
        raise ValueError(f"health token {T_h.shape} does not match prototypes {prototypes.shape}")
    lead = T_h.shape[:-2]
    return reshape(T_h, lead + (1, M * d)), reshape(prototypes, (C, M * d))


def similarity(T_h, prototypes) -> Tensor:
    """Cosine similarity of each health token to every prototype: ``(..., C)``.

    A zero-norm vector scores 0 against everything.
    """
    h, f = _flatten(T_h, prototypes)
    dots = tsum(h * f, axis=-1)
    denom = norm(h, axis=-1) * norm(f, axis=-1)
    return dots / (denom + Tensor((denom.data == 0).astype(denom.dtype)))


def diagnose(T_h, prototypes) -> np.ndarray:
    """Most similar class index; ties go to the lowest index."""
    return np.argmax(similarity(T_h, prototypes).data, axis=-1)


def min_distance(T_h, prototypes) -> Tensor:
    h, f = _flatten(T_h, prototypes)
    return amin(norm(h - f, axis=-1), axis=-1)


def predict_rul(T_h, prototypes, a, b) -> Tensor:
    """``clamp(b - a * d_min, 0, 1)`` with ``d_min`` the nearest-prototype distance."""
    return clip(as_tensor(b) - as_tensor(a) * min_distance(T_h, prototypes), 0.0, 1.0)


def diagnosis_loss(T_h, labels: np.ndarray, prototypes, temperature: float = 0.07) -> Tensor:
    """Mean cross-entropy of ``softmax(similarity / temperature)``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    s = similarity(T_h, prototypes)
    C = s.shape[-1]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"label out of range for {C} classes")
    logp = log_softmax(reshape(s, (-1, C)) * (1.0 / temperature), axis=-1)
    picked = logp[np.arange(labels.size), labels]
    return -picked.mean()


def prognosis_loss(predictions, targets) -> Tensor:
    """Mean squared error against RUL targets in [0, 1]."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size and (targets.min() < 0 or targets.max() > 1):
        raise ValueError("rul target outside [0, 1]")
    predictions = as_tensor(predictions)
    return square(predictions - targets.astype(predictions.dtype).reshape(predictions.shape)).mean()
