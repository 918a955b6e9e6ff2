"""Signal, prompt and time-frequency token construction, and the patch decoder.

All maps accept arbitrary leading batch axes. Weight arguments are
:class:`~rmgpt.numeric.Tensor` objects; signal inputs are plain arrays.
"""
from __future__ import annotations

import numpy as np

from .numeric import Tensor, as_tensor, broadcast_to, concat, matmul, reshape, rfft


def patch_count(L: int, P: int, S: int) -> int:
    if P > L:
        raise ValueError(f"patch length {P} exceeds window length {L}")
    if P < 1 or S < 1:
        raise ValueError("patch length and stride must be positive")
    return (L - P) // S + 1


def patchify(values: np.ndarray, P: int, S: int) -> np.ndarray:
    """``(..., L, M)`` -> ``(..., l_s, M, P)``; patch j covers samples [j*S, j*S + P)."""
    L = values.shape[-2]
    l_s = patch_count(L, P, S)
    idx = (np.arange(l_s) * S)[:, None] + np.arange(P)[None, :]
    return np.swapaxes(values[..., idx, :], -1, -2)


def embed_patches(patches, W_e: Tensor, W_pos: Tensor) -> Tensor:
    """Shared linear patch projection plus a learned position row per patch."""
    l_s, d = patches.shape[-3], W_e.shape[-1]
    if l_s > W_pos.shape[0]:
        raise ValueError(f"{l_s} patches exceed the positional table ({W_pos.shape[0]} rows)")
    x_t = matmul(as_tensor(patches, like=W_e), W_e)
    return x_t + reshape(W_pos[:l_s], (l_s, 1, d))


def prompt_inputs(mu: np.ndarray, sigma: np.ndarray, E_p: Tensor, W_stat: Tensor) -> Tensor:
    """Learned prompt rows plus a per-channel projection of ``[mu, log sigma]``.

    ``mu`` and ``sigma`` have shape ``(..., M)``; the result is
    ``(..., l_p, M, d)``.
    """
    stats = np.stack([mu, np.log(sigma)], axis=-1).astype(W_stat.dtype)
    proj = matmul(stats, W_stat)  # (..., M, d)
    l_p, d = E_p.shape
    lead = proj.shape[:-2]
    proj = reshape(proj, lead + (1,) + proj.shape[-2:])
    return reshape(E_p, (l_p, 1, d)) + proj


def spectral_input(values: np.ndarray) -> np.ndarray:
    """``(..., L, M)`` -> ``(..., M, L + 2)``: magnitudes then phases (radians)."""
    mag, phase = rfft(np.swapaxes(values, -1, -2))
    return np.concatenate([mag, phase], axis=-1)


def spectral_bands(width: int, n_spec: int) -> list[np.ndarray]:
    """Column indices of each contiguous frequency band in a ``[mag; phase]`` row."""
    half = width // 2
    edges = np.linspace(0, half, n_spec + 1).round().astype(int)
    return [np.concatenate([np.arange(lo, hi), half + np.arange(lo, hi)])
            for lo, hi in zip(edges[:-1], edges[1:])]


def task_inputs(spec: np.ndarray, e_cls: Tensor, W_f: Tensor, n_spec: int) -> Tensor:
    """Learned leading token followed by ``n_spec`` spectral tokens per channel.

    ``spec`` is the ``(..., M, L + 2)`` output of :func:`spectral_input`.
    """
    lead, M = spec.shape[:-2], spec.shape[-2]
    d = e_cls.shape[-1]
    first = broadcast_to(reshape(e_cls, (1, 1, d)), lead + (1, M, d))
    if n_spec == 0:
        return first
    spec = spec.astype(W_f.dtype)
    if n_spec == 1:
        tokens = [matmul(spec, W_f)]
    else:
        tokens = [matmul(spec[..., cols], W_f[cols]) for cols in spectral_bands(spec.shape[-1], n_spec)]
    tokens = [reshape(t, lead + (1, M, d)) for t in tokens]
    return concat([first] + tokens, axis=-3)


def decode_patch(z: Tensor, G_w: Tensor) -> Tensor:
    """Project latent ``(..., M, d)`` back to patch space ``(..., M, P)``."""
    return matmul(z, G_w)
