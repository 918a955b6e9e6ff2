"""Resampling, windowing and per-channel standardization."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_FLOOR = 1e-8


@dataclass
class SignalWindow:
    values: np.ndarray  # (L, M), standardized
    mu: np.ndarray  # (M,)
    sigma: np.ndarray  # (M,), floored at SIGMA_FLOOR
    source: tuple[str, int, int] = ("", -1, -1)


def antialias_taps(ratio: float) -> int:
    """Odd FIR length: at least 63, growing with the decimation ratio."""
    return max(63, 2 * math.ceil(20 * ratio) + 1)


def lowpass_fir(cutoff: float, taps: int) -> np.ndarray:
    """Hamming-windowed sinc, ``cutoff`` in cycles per sample, unit DC gain."""
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * np.hamming(taps)
    return h / h.sum()


def resample(raw: np.ndarray, from_hz: float, to_hz: float) -> np.ndarray:
    """Downsample ``raw`` (L_raw, M) from ``from_hz`` to ``to_hz``.

    Each channel is low-passed at 0.45 * to_hz with a zero-phase FIR
    (reflect-padded at the edges), then linearly interpolated onto the new
    grid. Output length is ``floor(L_raw * to_hz / from_hz)``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    if to_hz <= 0 or from_hz <= 0:
        raise ValueError("sample rates must be positive")
    if to_hz > from_hz:
        raise ValueError(f"upsampling not supported ({from_hz} Hz -> {to_hz} Hz)")
    if not np.isfinite(raw).all():
        raise ValueError("non-finite samples in input")
    if to_hz == from_hz:
        return raw.copy()
    ratio = from_hz / to_hz
    L_raw = raw.shape[0]
    L_out = math.floor(L_raw * to_hz / from_hz + 1e-9)
    taps = antialias_taps(ratio)
    h = lowpass_fir(0.45 * to_hz / from_hz, taps)
    pad = taps // 2
    mode = "reflect" if L_raw > pad else "edge"
    grid = np.arange(L_out) * ratio
    out = np.empty((L_out, raw.shape[1]))
    for m in range(raw.shape[1]):
        padded = np.pad(raw[:, m], pad, mode=mode)
        filtered = np.convolve(padded, h, mode="valid")
        out[:, m] = np.interp(grid, np.arange(L_raw), filtered)
    return out


def window_count(L_total: int, L: int, hop: int) -> int:
    return (L_total - L) // hop + 1


def window_signal(signal: np.ndarray, L: int, hop: int | None = None) -> np.ndarray:
    """Slice ``signal`` (L_total, M) into raw windows of shape (n, L, M)."""
    hop = L if hop is None else hop
    if hop < 1:
        raise ValueError("hop must be >= 1")
    L_total = signal.shape[0]
    if L_total < L:
        raise ValueError(f"signal of length {L_total} shorter than window {L}")
    starts = np.arange(window_count(L_total, L, hop)) * hop
    return np.stack([signal[s:s + L] for s in starts])


def standardize_arrays(x: np.ndarray, axis: int = -2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-channel ``(x - mu) / max(sigma, floor)`` along the time ``axis``."""
    mu = x.mean(axis=axis, keepdims=True)
    sigma = np.maximum(x.std(axis=axis, keepdims=True), SIGMA_FLOOR)
    flat = x.max(axis=axis, keepdims=True) == x.min(axis=axis, keepdims=True)
    values = np.where(flat, 0.0, (x - mu) / sigma)
    return values, mu.squeeze(axis), sigma.squeeze(axis)


def standardize(raw: np.ndarray, source: tuple[str, int, int] = ("", -1, -1)) -> SignalWindow:
    values, mu, sigma = standardize_arrays(np.asarray(raw, dtype=np.float64), axis=0)
    return SignalWindow(values, mu, sigma, source)


def window_and_standardize(signal: np.ndarray, L: int, hop: int | None = None,
                           dataset: str = "", record: int = -1) -> list[SignalWindow]:
    hop = L if hop is None else hop
    windows = window_signal(np.asarray(signal, dtype=np.float64), L, hop)
    return [standardize(w, (dataset, record, i * hop)) for i, w in enumerate(windows)]
