"""Masked pretraining, prompt learning and full finetuning.

One loop serves every phase; the phase ``mode`` selects which parameter
partitions the optimizer may touch (see :data:`rmgpt.params.TRAINABLE`).
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import TrainConfig
from .data.splits import WindowSet
from .model import RmGPT, seed_stream
from .numeric import NonFiniteError, Tape, Tensor, backward
from .params import ParameterStore


class TrainingDivergence(RuntimeError):
    pass


# --------------------------------------------------------------------- optimizer

@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)


def optimizer_update(grads: Mapping[str, np.ndarray], store: ParameterStore, state: AdamWState,
                     cfg: TrainConfig, trainable: Sequence[str], lr: float | None = None) -> None:
    """Decoupled-weight-decay Adam step, in place, on the named parameters.

    Only names in ``trainable`` may appear in ``grads``; anything else is a
    partitioning bug and raises. Moments are kept in float64 and each
    parameter counts its own steps, so parameters that skip a batch (another
    dataset's prompt rows) are not moved by stale moments.
    """
    allowed = set(trainable)
    stray = sorted(set(grads) - allowed)
    if stray:
        raise ValueError(f"optimizer received frozen parameters: {stray[:5]}")
    lr, b1, b2 = (cfg.learning_rate if lr is None else lr), cfg.beta1, cfg.beta2
    for name in sorted(grads):
        w = store[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        t = state.t.get(name, 0) + 1
        m = b1 * state.m.get(name, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1 - b2) * g * g
        state.t[name], state.m[name], state.v[name] = t, m, v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        w64 = w.astype(np.float64)
        w64 = w64 - lr * cfg.weight_decay * w64 - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        store[name] = w64.astype(w.dtype)


# --------------------------------------------------------------------- steps

def _dataset_of(name: str) -> str | None:
    """Owning dataset of a per-dataset parameter, else ``None``."""
    head = name.split(".", 1)[0]
    if head == "E_p":
        return name.split(".", 1)[1]
    if head in ("fault", "rul"):
        return name.split(".")[1]
    return None


def step_names(model: RmGPT, mode: str, dataset: str) -> list[str]:
    """Trainable names that a batch of ``dataset`` can influence."""
    return [n for n in model.store.trainable_names(mode) if _dataset_of(n) in (None, dataset)]


def _grad_step(model: RmGPT, loss_fn, names: list[str]) -> tuple[float, dict[str, np.ndarray]]:
    p = model.store.tensors(names)
    with Tape() as tape:
        loss = loss_fn(p)
    if not np.isfinite(loss.data).all():
        raise NonFiniteError(f"non-finite loss {float(loss.data)}")
    grads = backward(tape, loss, [p[n] for n in names])
    return float(loss.data), grads


def pretrain_step(model: RmGPT, batch: np.ndarray, dataset: str, cfg: TrainConfig,
                  state: AdamWState, rng: np.random.Generator | None = None) -> float:
    """One masked next-patch update; returns the pre-update loss."""
    names = step_names(model, "pretrain", dataset)
    loss, grads = _grad_step(model, lambda p: model.pretrain_loss(p, batch, dataset, rng), names)
    optimizer_update(grads, model.store, state, cfg, names, cfg.phase_values("pretrain")[1])
    return loss


def adapt_step(model: RmGPT, batch: np.ndarray, targets: np.ndarray, dataset: str, mode: str,
               cfg: TrainConfig, state: AdamWState,
               rng: np.random.Generator | None = None) -> float:
    """One supervised update restricted to the ``mode`` partition."""
    if mode not in ("prompt", "finetune"):
        raise ValueError(f"adaptation mode must be prompt or finetune, got {mode!r}")
    if f"fault.{dataset}.prototypes" not in model.store:
        raise KeyError(f"{dataset}: no fault bank")
    names = step_names(model, mode, dataset)
    loss, grads = _grad_step(
        model, lambda p: model.adapt_loss(p, batch, targets, dataset, cfg.temperature, rng), names)
    optimizer_update(grads, model.store, state, cfg, names, cfg.phase_values(mode)[1])
    return loss


# --------------------------------------------------------------------- phases

@dataclass
class RunLog:
    mode: str
    seed: int
    config_hash: str
    param_total: int
    param_trainable: int
    step_losses: list[float] = field(default_factory=list)
    step_datasets: list[str] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    epoch_metrics: list[dict] = field(default_factory=list)
    wall_clock_s: float = 0.0
    checkpoint: str = ""

    @property
    def trainable_fraction(self) -> float:
        return self.param_trainable / self.param_total

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trainable_fraction"] = self.trainable_fraction
        return out


def phase_hash(model: RmGPT, cfg: TrainConfig, mode: str) -> str:
    blob = json.dumps({"model": asdict(model.cfg), "train": asdict(cfg), "mode": mode},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def batch_schedule(sets: Sequence[WindowSet], batch_size: int,
                   rng: np.random.Generator) -> list[tuple[int, np.ndarray]]:
    """One epoch of ``(set index, window indices)`` batches.

    Each set is shuffled and cut into its own queue; queues are then
    interleaved round-robin so every batch holds windows of one dataset.
    """
    queues = []
    for s in sets:
        order = rng.permutation(len(s))
        queues.append([order[i:i + batch_size] for i in range(0, len(order), batch_size)])
    out = []
    for j in range(max((len(q) for q in queues), default=0)):
        out.extend((i, q[j]) for i, q in enumerate(queues) if j < len(q))
    return out


def phase_epochs(cfg: TrainConfig, mode: str, batches_per_epoch: int) -> int:
    epochs = {"pretrain": cfg.pretrain_epochs, "prompt": cfg.prompt_epochs,
              "finetune": cfg.finetune_epochs}[mode]
    if mode != "pretrain" and cfg.min_adapt_steps and batches_per_epoch:
        epochs = max(epochs, math.ceil(cfg.min_adapt_steps / batches_per_epoch))
    return epochs


def run_phase(model: RmGPT, sets: Sequence[WindowSet], cfg: TrainConfig, mode: str,
              seed: int | None = None, checkpoint: str | Path | None = None,
              epochs: int | None = None) -> RunLog:
    """Train ``model`` in place for one phase and return its log.

    Pretraining uses every set and ignores targets; adaptation uses the
    labeled sets only. A non-finite loss aborts with the step and dataset.
    """
    seed = cfg.seed if seed is None else seed
    if mode != "pretrain":
        sets = [s for s in sets if s.task in ("diagnosis", "prognosis")]
    if not sets:
        raise ValueError(f"no usable window sets for {mode}")
    for s in sets:
        if s.dataset not in model.heads:
            raise KeyError(f"dataset {s.dataset!r} is not registered with the model")
    shuffle_rng = seed_stream(seed, f"{mode}.shuffle")
    dropout_rng = seed_stream(seed, f"{mode}.dropout")
    trainable = model.store.trainable_names(mode)
    log = RunLog(mode, seed, phase_hash(model, cfg, mode), model.store.count(),
                 model.store.count(trainable))
    state = AdamWState()
    batch_size = cfg.phase_values(mode)[0]
    per_epoch = sum(math.ceil(len(s) / batch_size) for s in sets)
    n_epochs = phase_epochs(cfg, mode, per_epoch) if epochs is None else epochs
    start = time.perf_counter()
    for epoch in range(n_epochs):
        losses = []
        for i, idx in batch_schedule(sets, batch_size, shuffle_rng):
            s = sets[i]
            batch = s.windows[idx]
            try:
                if mode == "pretrain":
                    loss = pretrain_step(model, batch, s.dataset, cfg, state, dropout_rng)
                else:
                    targets = s.labels[idx] if s.task == "diagnosis" else s.ruls[idx]
                    loss = adapt_step(model, batch, targets, s.dataset, mode, cfg, state,
                                      dropout_rng)
            except NonFiniteError as exc:
                raise TrainingDivergence(
                    f"{mode}: diverged at epoch {epoch}, step {len(log.step_losses)} "
                    f"on {s.dataset}: {exc}") from exc
            losses.append(loss)
            log.step_losses.append(loss)
            log.step_datasets.append(s.dataset)
        log.epoch_losses.append(float(np.mean(losses)))
        if checkpoint and cfg.checkpoint_every_epoch:
            path = Path(checkpoint)
            model.save(path.with_name(f"{path.stem}.epoch{epoch}{path.suffix}"))
    log.wall_clock_s = time.perf_counter() - start
    if checkpoint:
        log.checkpoint = str(model.save(checkpoint, {"phase": mode, "seed": seed,
                                                     "config_hash": log.config_hash}))
    return log
