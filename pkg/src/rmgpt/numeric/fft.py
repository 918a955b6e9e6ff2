"""Iterative radix-2 FFT, vectorized over leading axes."""
from __future__ import annotations

import functools
import math

import numpy as np

from . import counting


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@functools.lru_cache(maxsize=32)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Complex DFT along the last axis (length must be a power of two)."""
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"transform length {n} is not a power of two")
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverse(n)]
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        size *= 2
    counting.record("fft", int(5 * n * math.log2(n)) * int(np.prod(lead, dtype=np.int64)))
    return a


def rfft(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude and phase of the non-negative-frequency bins of real ``x``.

    Returns two arrays of length ``L // 2 + 1`` along the last axis. Bins
    whose magnitude is numerically zero (relative to the signal's L1 mass)
    get phase 0.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = fft(x)[..., : n // 2 + 1]
    mag = np.abs(spec)
    tol = 1e-10 * np.abs(x).sum(axis=-1, keepdims=True)
    phase = np.where(mag > tol, np.arctan2(spec.imag, spec.real), 0.0)
    return mag, phase
