"""The full encoder: tokenizer, backbone and per-dataset token banks."""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import backbone, tokenizer
from .config import ModelConfig, check_compatible
from .data.signals import SIGMA_FLOOR, standardize_arrays
from .numeric import Tensor, counting
from .params import ParameterStore, load_checkpoint, save_checkpoint
from .token_space import diagnosis_loss, predict_rul, prognosis_loss


@dataclass
class DatasetHead:
    name: str
    task: str  # diagnosis | prognosis | unlabeled
    channels: int
    num_classes: int = 0


@dataclass
class Encoding:
    T_out: Tensor
    health: Tensor
    target: np.ndarray | None = None  # standardized final patch (masked mode)


INIT_STD = 0.02


def seed_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for consumer ``name`` derived from the root seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def spectral_filter_bank(L: int, d: int) -> np.ndarray:
    """Initial ``(L + 2, d)`` spectral projection: output j averages band j of the magnitudes.

    The magnitude half is split into ``d`` contiguous bands (unit-norm
    columns); phase rows start at zero. A random projection would mix in
    the phase of broadband noise, which carries no class information.
    """
    half = L // 2 + 1
    W = np.zeros((L + 2, d), dtype=np.float32)
    edges = np.linspace(0, half, d + 1).round().astype(int)
    for j, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if hi > lo:
            W[lo:hi, j] = 1.0 / np.sqrt(hi - lo)
    return W


def prepare_inputs(raw: np.ndarray, cfg: ModelConfig, masked: bool = False) -> dict:
    """Standardize raw windows ``(B, L, M)`` and cut patches / spectral input.

    In masked mode the statistics come from the samples before the final
    patch only, the final patch is zeroed before embedding and the tail is
    zeroed before the FFT, so nothing downstream depends on it.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[1] != cfg.L:
        raise ValueError(f"expected windows of shape (B, {cfg.L}, M), got {raw.shape}")
    if not masked:
        values, mu, sigma = standardize_arrays(raw, axis=1)
        return {"patches": tokenizer.patchify(values, cfg.P, cfg.S), "mu": mu, "sigma": sigma,
                "spec_values": values, "target": None}
    if cfg.l_s < 2:
        raise ValueError(f"masked pretraining needs at least 2 patches, got {cfg.l_s}")
    cut = (cfg.l_s - 1) * cfg.S
    context = raw[:, :cut]
    mu = context.mean(axis=1, keepdims=True)
    sigma = np.maximum(context.std(axis=1, keepdims=True), SIGMA_FLOOR)
    flat = context.max(axis=1, keepdims=True) == context.min(axis=1, keepdims=True)
    values = np.where(flat, 0.0, (raw - mu) / sigma)
    patches = tokenizer.patchify(values, cfg.P, cfg.S).copy()
    target = patches[:, -1].copy()
    patches[:, -1] = 0.0
    spec_values = values.copy()
    spec_values[:, cut:] = 0.0
    return {"patches": patches, "mu": mu[:, 0], "sigma": sigma[:, 0],
            "spec_values": spec_values, "target": target}


class RmGPT:
    def __init__(self, cfg: ModelConfig, store: ParameterStore, heads: Mapping[str, DatasetHead]):
        self.cfg = cfg
        self.store = store
        self.heads = dict(heads)

    # ------------------------------------------------------------ construction

    @classmethod
    def create(cls, cfg: ModelConfig, heads: Iterable[DatasetHead] = (), seed: int = 0) -> "RmGPT":
        cfg.validate()
        store = ParameterStore()
        d, s = cfg.d, seed

        def normal(name, shape, std, partition):
            store.add(name, (seed_stream(s, name).normal(0.0, std, size=shape)).astype(np.float32),
                      partition)

        normal("W_e", (cfg.P, d), 1 / np.sqrt(cfg.P), "tokenizer")
        normal("W_pos", (cfg.l_s_max, d), 0.02, "tokenizer")
        store.add("W_f", spectral_filter_bank(cfg.L, d), "tokenizer")
        normal("W_stat", (2, d), 0.02, "prompt")
        normal("e_cls", (d,), 0.02, "task_embed")
        normal("mask_embedding", (d,), 0.02, "backbone")
        # Small backbone weights, residual projections shrunk further with
        # depth: every block starts close to the identity map.
        std, out_std = INIT_STD, INIT_STD / np.sqrt(2 * max(cfg.K, 1))
        for k in range(cfg.K):
            for block in ("chan", "time"):
                for w in ("q", "k", "v"):
                    normal(f"layer{k}.{block}.{w}", (d, d), std, "backbone")
                normal(f"layer{k}.{block}.o", (d, d), out_std, "backbone")
            normal(f"layer{k}.ffn.w1", (d, cfg.d_ff), std, "backbone")
            normal(f"layer{k}.ffn.w2", (cfg.d_ff, d), out_std, "backbone")
            for ln in ("ln1", "ln2", "ln3"):
                store.add(f"layer{k}.{ln}.g", np.ones(d, dtype=np.float32), "backbone")
                store.add(f"layer{k}.{ln}.b", np.zeros(d, dtype=np.float32), "backbone")
        normal("G_w", (d, cfg.P), std, "decoder")
        model = cls(cfg, store, {})
        for head in heads:
            model.add_dataset(head, seed)
        return model

    def add_dataset(self, head: DatasetHead, seed: int = 0) -> None:
        """Create the prompt rows and (for labeled tasks) the token bank of a dataset."""
        if head.name in self.heads:
            raise ValueError(f"dataset {head.name!r} already registered")
        d, M = self.cfg.d, head.channels
        rng = lambda n: seed_stream(seed, n)  # noqa: E731
        name = f"E_p.{head.name}"
        self.store.add(name, rng(name).normal(0, 0.02, (self.cfg.l_p, d)).astype(np.float32), "prompt")
        if head.task in ("diagnosis", "prognosis"):
            if head.num_classes < 2:
                raise ValueError(f"{head.name}: need at least 2 classes/anchors")
            name = f"fault.{head.name}.prototypes"
            self.store.add(name, rng(name).normal(0, 0.02, (head.num_classes, M, d)).astype(np.float32),
                           "fault_bank")
        if head.task == "prognosis":
            self.store.add(f"rul.{head.name}.a", np.array([0.5 / np.sqrt(M * d)], dtype=np.float32),
                           "rul_head")
            self.store.add(f"rul.{head.name}.b", np.array([1.0], dtype=np.float32), "rul_head")
        self.heads[head.name] = head

    # ------------------------------------------------------------ forward

    def encode(self, p: Mapping[str, Tensor], raw: np.ndarray, dataset: str,
               masked: bool = False, rng: np.random.Generator | None = None) -> Encoding:
        cfg = self.cfg
        if dataset not in self.heads:
            raise KeyError(f"unknown dataset {dataset!r}")
        if raw.shape[-1] != self.heads[dataset].channels:
            raise ValueError(f"{dataset}: expected {self.heads[dataset].channels} channels, "
                             f"got {raw.shape[-1]}")
        inputs = prepare_inputs(raw, cfg, masked)
        with counting.scope("tokenizer"):
            T_s = tokenizer.embed_patches(inputs["patches"], p["W_e"], p["W_pos"])
            T_p = tokenizer.prompt_inputs(inputs["mu"], inputs["sigma"], p[f"E_p.{dataset}"],
                                          p["W_stat"])
            spec = tokenizer.spectral_input(inputs["spec_values"]) if cfg.n_spec else \
                np.zeros(raw.shape[:1] + (raw.shape[2], cfg.L + 2))
            T_t = tokenizer.task_inputs(spec, p["e_cls"], p["W_f"], cfg.n_spec)
        seq = backbone.assemble(T_p, T_s, T_t)
        if masked:
            seq = backbone.mask_signal_tail(seq, p["mask_embedding"], p["W_pos"])
        T_out, health = backbone.forward(seq, cfg, p, rng)
        return Encoding(T_out, health, inputs["target"])

    def pretrain_loss(self, p: Mapping[str, Tensor], raw: np.ndarray, dataset: str,
                      rng: np.random.Generator | None = None) -> Tensor:
        """Squared error between the decoded masked position and the true final patch."""
        enc = self.encode(p, raw, dataset, masked=True, rng=rng)
        pos = self.cfg.l_p + self.cfg.l_s - 1
        with counting.scope("decoder"):
            pred = tokenizer.decode_patch(enc.T_out[:, pos], p["G_w"])
        diff = pred - enc.target.astype(pred.dtype)
        return (diff * diff).mean()

    def task_output(self, p: Mapping[str, Tensor], health: Tensor, dataset: str):
        head = self.heads[dataset]
        protos = p[f"fault.{dataset}.prototypes"]
        if head.task == "prognosis":
            return predict_rul(health, protos, p[f"rul.{dataset}.a"], p[f"rul.{dataset}.b"])
        return protos

    def adapt_loss(self, p: Mapping[str, Tensor], raw: np.ndarray, targets: np.ndarray,
                   dataset: str, temperature: float = 0.07,
                   rng: np.random.Generator | None = None) -> Tensor:
        head = self.heads[dataset]
        if head.task not in ("diagnosis", "prognosis"):
            raise ValueError(f"{dataset}: no task bank for task {head.task!r}")
        health = self.encode(p, raw, dataset, rng=rng).health
        if head.task == "diagnosis":
            return diagnosis_loss(health, targets, p[f"fault.{dataset}.prototypes"], temperature)
        return prognosis_loss(self.task_output(p, health, dataset), targets)

    # ------------------------------------------------------------ inference

    def health_tokens(self, raw: np.ndarray, dataset: str, batch_size: int = 64) -> np.ndarray:
        p = self.store.tensors()
        out = [self.encode(p, raw[i:i + batch_size], dataset).health.data
               for i in range(0, len(raw), batch_size)]
        return np.concatenate(out)

    def predict(self, raw: np.ndarray, dataset: str, batch_size: int = 64) -> np.ndarray:
        """Class indices (diagnosis) or normalized RUL (prognosis)."""
        from .token_space import diagnose

        health = self.health_tokens(raw, dataset, batch_size)
        p = self.store.tensors()
        if self.heads[dataset].task == "diagnosis":
            return diagnose(health, p[f"fault.{dataset}.prototypes"])
        return self.task_output(p, Tensor(health), dataset).data

    # ------------------------------------------------------------ persistence

    def meta(self) -> dict:
        return {"model": dataclasses.asdict(self.cfg),
                "datasets": [dataclasses.asdict(h) for h in self.heads.values()]}

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        meta = self.meta()
        if extra:
            meta.update(extra)
        return save_checkpoint(self.store, path, meta)

    @classmethod
    def load(cls, path: str | Path, cfg: ModelConfig | None = None) -> "RmGPT":
        store, meta = load_checkpoint(path)
        if cfg is not None:
            check_compatible(cfg, meta["model"])
        stored = ModelConfig(**meta["model"])
        heads = {h["name"]: DatasetHead(**h) for h in meta.get("datasets", [])}
        return cls(cfg or stored, store, heads)

    def copy(self) -> "RmGPT":
        return RmGPT(self.cfg, self.store.copy(), {k: dataclasses.replace(v)
                                                   for k, v in self.heads.items()})
