"""Closed-form forward FLOP count for the encoder.

The formulas mirror what the instrumented ops in :mod:`rmgpt.numeric.tensor`
report (see :mod:`rmgpt.numeric.counting` for the conventions), so a counted
forward pass and :func:`count_flops` agree exactly.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

from ..config import ModelConfig


@dataclass
class FlopReport:
    by_class: dict[str, int]
    by_module: dict[str, int]
    total: int
    score_macs_per_layer: int = 0
    meta: dict = field(default_factory=dict)

    def to_text(self) -> str:
        return json.dumps({"total": self.total, "by_class": self.by_class,
                           "by_module": self.by_module,
                           "score_macs_per_layer": self.score_macs_per_layer,
                           "meta": self.meta}, indent=2, sort_keys=True)


def factored_score_macs(N: int, M: int, H: int, d_k: int) -> int:
    """Score multiplies of one channel-then-time attention pair."""
    return H * (N * M * M * d_k + M * N * N * d_k)


def joint_score_macs(N: int, M: int, H: int, d_k: int) -> int:
    """Score multiplies of one attention over all ``N * M`` tokens."""
    return H * (N * M) ** 2 * d_k


def _attention(add, mod: str, batches: int, T: int, d: int, H: int) -> None:
    d_k = d // H
    add(mod, "projection", 4 * 2 * batches * T * d * d)
    add(mod, "attn_score", 2 * batches * H * T * T * d_k)
    add(mod, "softmax", 5 * batches * H * T * T)
    add(mod, "attn_mix", 2 * batches * H * T * T * d_k)
    add(mod, "norm", 5 * batches * T * d)


def count_flops(cfg: ModelConfig, channels: int, batch: int = 1,
                include_decoder: bool = False) -> FlopReport:
    """Forward flops of tokenizer plus backbone for ``batch`` windows."""
    M, d, N = channels, cfg.d, cfg.N
    table: dict[tuple[str, str], int] = defaultdict(int)

    def add(mod: str, cls: str, n: int) -> None:
        table[(mod, cls)] += n * batch

    add("tokenizer", "projection", 2 * cfg.l_s * M * cfg.P * d)
    add("tokenizer", "projection", 2 * M * 2 * d)
    if cfg.n_spec > 0:
        add("tokenizer", "fft", M * int(5 * cfg.L * math.log2(cfg.L)))
        add("tokenizer", "projection", 2 * M * (cfg.L + 2) * d)
    for k in range(cfg.K):
        if cfg.attention == "factored":
            _attention(add, f"layer{k}.chan", N, M, d, cfg.H)
            _attention(add, f"layer{k}.time", M, N, d, cfg.H)
        else:
            _attention(add, f"layer{k}.chan", 1, N * M, d, cfg.H)
            _attention(add, f"layer{k}.time", 1, N * M, d, cfg.H)
        add(f"layer{k}.ffn", "projection", 2 * 2 * N * M * d * cfg.d_ff)
        add(f"layer{k}.ffn", "activation", 5 * N * M * cfg.d_ff)
        add(f"layer{k}.ffn", "norm", 5 * N * M * d)
    if include_decoder:
        add("decoder", "projection", 2 * M * d * cfg.P)

    by_class: dict[str, int] = defaultdict(int)
    by_module: dict[str, int] = defaultdict(int)
    for (mod, cls), n in table.items():
        by_class[cls] += n
        by_module[mod] += n
    if cfg.attention == "factored":
        score = factored_score_macs(N, M, cfg.H, cfg.d_k)
    else:
        score = 2 * joint_score_macs(N, M, cfg.H, cfg.d_k)
    return FlopReport(dict(by_class), dict(by_module), sum(by_class.values()),
                      score_macs_per_layer=score * batch,
                      meta={"N": N, "M": M, "d": d, "K": cfg.K, "H": cfg.H, "d_ff": cfg.d_ff,
                            "P": cfg.P, "S": cfg.S, "L": cfg.L, "batch": batch,
                            "attention": cfg.attention})
