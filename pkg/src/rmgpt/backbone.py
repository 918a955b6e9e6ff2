"""Channel-time attention backbone.

Tokens are laid out ``(..., N, M, d)``: sequence position, channel, width.
Channel attention mixes the M tokens of one position; time attention mixes
the N tokens of one channel. Each layer runs channel attention, time
attention and a GELU feed-forward block, each followed by residual add and
layer norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import ModelConfig
from .numeric import (Tensor, broadcast_to, concat, counting, gelu, layer_norm, matmul, reshape,
                      softmax_attention, transpose)

SEGMENTS = ("prompt", "signal", "task")


@dataclass
class TokenSequence:
    tokens: Tensor  # (..., N, M, d)
    segments: dict[str, tuple[int, int]]

    @property
    def N(self) -> int:
        return self.tokens.shape[-3]

    def span(self, name: str) -> int:
        lo, hi = self.segments[name]
        return hi - lo


def assemble(T_p: Tensor, T_s: Tensor, T_t: Tensor) -> TokenSequence:
    """Concatenate prompt, signal and task tokens along the sequence axis."""
    ref = T_s.shape
    for name, t in (("prompt", T_p), ("task", T_t)):
        if t.shape[-2:] != ref[-2:] or t.shape[:-3] != ref[:-3]:
            raise ValueError(f"{name} tokens {t.shape} do not match signal tokens {ref}")
    segments, start = {}, 0
    for name, t in zip(SEGMENTS, (T_p, T_s, T_t)):
        segments[name] = (start, start + t.shape[-3])
        start += t.shape[-3]
    return TokenSequence(concat([T_p, T_s, T_t], axis=-3), segments)


def mask_signal_tail(seq: TokenSequence, mask_embedding: Tensor, W_pos: Tensor) -> TokenSequence:
    """Replace the final signal token of every channel with the mask token."""
    l_s = seq.span("signal")
    if l_s < 2:
        raise ValueError(f"masking needs at least 2 signal tokens, got {l_s}")
    pos = seq.segments["signal"][1] - 1
    x = seq.tokens
    d = x.shape[-1]
    token = reshape(mask_embedding + W_pos[l_s - 1], (1, 1, d))
    token = broadcast_to(token, x.shape[:-3] + (1, x.shape[-2], d))
    tokens = concat([x[..., :pos, :, :], token, x[..., pos + 1:, :, :]], axis=-3)
    return TokenSequence(tokens, dict(seq.segments))


def _dropout(rate: float, rng: np.random.Generator | None):
    if rng is None or rate <= 0:
        return None

    def apply(t: Tensor) -> Tensor:
        keep = (rng.random(t.shape) >= rate).astype(t.dtype) / (1.0 - rate)
        return t * Tensor(keep)

    return apply


def attention_sublayer(x: Tensor, p: Mapping[str, Tensor], prefix: str, H: int,
                       dropout: float = 0.0, rng=None) -> Tensor:
    """Multi-head self-attention over the second-to-last axis of ``x``."""
    *lead, T, d = x.shape
    lead, d_k = tuple(lead), d // H

    def heads(w: str) -> Tensor:
        y = reshape(matmul(x, p[f"{prefix}.{w}"]), lead + (T, H, d_k))
        return transpose(y, tuple(range(len(lead))) + tuple(len(lead) + i for i in (1, 0, 2)))

    out = softmax_attention(heads("q"), heads("k"), heads("v"), _dropout(dropout, rng))
    perm = tuple(range(len(lead))) + tuple(len(lead) + i for i in (1, 0, 2))
    merged = reshape(transpose(out, perm), lead + (T, d))
    return matmul(merged, p[f"{prefix}.o"])


def _residual(x: Tensor, f, p, ln: str, post_norm: bool) -> Tensor:
    g, b = p[f"{ln}.g"], p[f"{ln}.b"]
    if post_norm:
        return layer_norm(x + f(x), g, b)
    return x + f(layer_norm(x, g, b))


def channel_attention_block(x: Tensor, p: Mapping[str, Tensor], k: int, cfg: ModelConfig,
                            rng=None) -> Tensor:
    """Attention across channels at each sequence position."""
    with counting.scope(f"layer{k}.chan"):
        attend = lambda y: attention_sublayer(y, p, f"layer{k}.chan", cfg.H,  # noqa: E731
                                              cfg.dropout, rng)
        return _residual(x, attend, p, f"layer{k}.ln1", cfg.post_norm)


def _swap_seq_channel(x: Tensor) -> Tensor:
    nd = x.ndim
    return transpose(x, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))


def time_attention_block(x: Tensor, p: Mapping[str, Tensor], k: int, cfg: ModelConfig,
                         rng=None) -> Tensor:
    """Bidirectional attention across sequence positions within each channel."""
    with counting.scope(f"layer{k}.time"):
        def attend(y: Tensor) -> Tensor:
            out = attention_sublayer(_swap_seq_channel(y), p, f"layer{k}.time", cfg.H,
                                     cfg.dropout, rng)
            return _swap_seq_channel(out)

        return _residual(x, attend, p, f"layer{k}.ln2", cfg.post_norm)


def joint_attention_block(x: Tensor, p: Mapping[str, Tensor], k: int, cfg: ModelConfig,
                          which: str, rng=None) -> Tensor:
    """Ablation: one attention over all N * M tokens, in place of ``which``."""
    ln = "ln1" if which == "chan" else "ln2"
    with counting.scope(f"layer{k}.{which}"):
        def attend(y: Tensor) -> Tensor:
            *lead, N, M, d = y.shape
            flat = reshape(y, tuple(lead) + (N * M, d))
            out = attention_sublayer(flat, p, f"layer{k}.{which}", cfg.H, cfg.dropout, rng)
            return reshape(out, tuple(lead) + (N, M, d))

        return _residual(x, attend, p, f"layer{k}.{ln}", cfg.post_norm)


def ffn_block(x: Tensor, p: Mapping[str, Tensor], k: int, cfg: ModelConfig, rng=None) -> Tensor:
    drop = _dropout(cfg.dropout, rng)

    def mlp(y: Tensor) -> Tensor:
        h = gelu(matmul(y, p[f"layer{k}.ffn.w1"]))
        if drop is not None:
            h = drop(h)
        return matmul(h, p[f"layer{k}.ffn.w2"])

    with counting.scope(f"layer{k}.ffn"):
        return _residual(x, mlp, p, f"layer{k}.ln3", cfg.post_norm)


def health_token(T_out: Tensor, task_len: int) -> Tensor:
    """Mean of the final ``task_len`` output positions: ``(..., M, d)``."""
    N = T_out.shape[-3]
    return T_out[..., N - task_len:, :, :].mean(axis=-3)


def forward(seq: TokenSequence, cfg: ModelConfig, p: Mapping[str, Tensor],
            rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Run the K-layer stack; returns ``(T_out, health token)``.

    ``rng`` enables dropout (training); ``None`` is deterministic evaluation.
    """
    x = seq.tokens
    for k in range(cfg.K):
        if cfg.attention == "factored":
            x = channel_attention_block(x, p, k, cfg, rng)
            x = time_attention_block(x, p, k, cfg, rng)
        else:
            x = joint_attention_block(x, p, k, cfg, "chan", rng)
            x = joint_attention_block(x, p, k, cfg, "time", rng)
        x = ffn_block(x, p, k, cfg, rng)
    return x, health_token(x, seq.span("task"))
