import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmgpt.numeric import Tensor
from rmgpt.tokenizer import (decode_patch, embed_patches, patch_count, patchify, prompt_inputs,
                             spectral_bands, spectral_input, task_inputs)


def brute_patch_count(L, P, S):
    """Enumerate every start s = 0, S, 2S, ... whose patch still fits."""
    n, s = 0, 0
    while s + P <= L:
        n, s = n + 1, s + S
    return n


@given(st.integers(1, 5000), st.data())
def test_patch_count_matches_enumeration(L, data):
    P = data.draw(st.integers(1, L))
    S = data.draw(st.integers(1, L))
    assert patch_count(L, P, S) == brute_patch_count(L, P, S)


def test_default_window_gives_eight_patches():
    assert patch_count(2048, 256, 256) == 8


@pytest.mark.parametrize("L,P,S", [(10, 11, 1), (10, 0, 1), (10, 2, 0)])
def test_patch_count_rejects_bad_geometry(L, P, S):
    with pytest.raises(ValueError):
        patch_count(L, P, S)


@given(st.integers(4, 64), st.integers(1, 8), st.integers(1, 8), st.integers(1, 3))
def test_patchify_copies_the_right_samples(L, P, S, M):
    P = min(P, L)
    x = np.arange(L * M, dtype=np.float64).reshape(L, M)
    patches = patchify(x, P, S)
    assert patches.shape == (patch_count(L, P, S), M, P)
    for j in range(patches.shape[0]):
        for m in range(M):
            np.testing.assert_array_equal(patches[j, m], x[j * S:j * S + P, m])


def test_embed_patches_adds_one_position_row_per_patch():
    rng = np.random.default_rng(0)
    patches = rng.normal(size=(2, 3, 4, 5))  # (B, l_s, M, P)
    W_e, W_pos = Tensor(rng.normal(size=(5, 6))), Tensor(rng.normal(size=(7, 6)))
    out = embed_patches(patches, W_e, W_pos).data
    for b in range(2):
        for j in range(3):
            for m in range(4):
                np.testing.assert_allclose(out[b, j, m], patches[b, j, m] @ W_e.data + W_pos.data[j])
    with pytest.raises(ValueError, match="positional table"):
        embed_patches(patches, W_e, Tensor(W_pos.data[:2]))


def test_prompt_inputs_project_mean_and_log_sigma():
    rng = np.random.default_rng(1)
    mu, sigma = rng.normal(size=(2, 3)), rng.uniform(0.5, 2, size=(2, 3))
    E_p, W_stat = Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=(2, 5)))
    out = prompt_inputs(mu, sigma, E_p, W_stat).data
    assert out.shape == (2, 4, 3, 5)
    for b in range(2):
        for i in range(4):
            for m in range(3):
                expect = E_p.data[i] + mu[b, m] * W_stat.data[0] + np.log(sigma[b, m]) * W_stat.data[1]
                np.testing.assert_allclose(out[b, i, m], expect)


def test_spectral_input_layout():
    L, k0 = 32, 3
    t = np.arange(L)
    x = np.stack([np.sin(2 * np.pi * k0 * t / L), np.zeros(L)], axis=-1)  # (L, 2)
    spec = spectral_input(x)
    assert spec.shape == (2, L + 2)
    mag, phase = spec[0, :L // 2 + 1], spec[0, L // 2 + 1:]
    assert np.argmax(mag) == k0
    assert mag[k0] == pytest.approx(L / 2)
    assert phase[k0] == pytest.approx(-np.pi / 2)
    assert np.all(spec[1] == 0.0)


@given(st.sampled_from([8, 16, 64, 2048]), st.integers(1, 4))
def test_spectral_bands_partition_both_halves(L, n_spec):
    width = L + 2
    bands = spectral_bands(width, n_spec)
    assert len(bands) == n_spec
    cols = np.sort(np.concatenate(bands))
    np.testing.assert_array_equal(cols, np.arange(width))


def test_task_inputs_stack_class_token_and_spectral_projection():
    rng = np.random.default_rng(2)
    spec = rng.normal(size=(2, 3, 10))  # (B, M, L+2)
    e_cls, W_f = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=(10, 4)))
    out = task_inputs(spec, e_cls, W_f, n_spec=1).data
    assert out.shape == (2, 2, 3, 4)
    np.testing.assert_allclose(out[:, 0], np.broadcast_to(e_cls.data, (2, 3, 4)))
    np.testing.assert_allclose(out[:, 1], spec @ W_f.data)
    two = task_inputs(spec, e_cls, W_f, n_spec=2).data
    assert two.shape == (2, 3, 3, 4)
    np.testing.assert_allclose(two[:, 1] + two[:, 2], spec @ W_f.data)
    assert task_inputs(spec, e_cls, W_f, n_spec=0).shape == (2, 1, 3, 4)


def test_decode_patch_is_linear():
    rng = np.random.default_rng(3)
    z, G = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 6))
    np.testing.assert_allclose(decode_patch(Tensor(z), Tensor(G)).data, z @ G)


# ------------------------------------------------------------------ worked examples

def test_single_patch_and_odd_stride_geometry():
    assert all(patch_count(300, 300, s) == 1 for s in (1, 7, 300))
    assert patch_count(1000, 256, 128) == 6
    starts = [s for s in range(1000) if s % 128 == 0 and s + 256 <= 1000]
    assert starts == [0, 128, 256, 384, 512, 640]
    x = np.arange(1000.0)[:, None]
    np.testing.assert_array_equal(patchify(x, 256, 128)[:, 0, 0], starts)


def test_zero_projection_and_shared_channel_weights():
    rng = np.random.default_rng(0)
    patches = rng.normal(size=(3, 2, 5))
    patches[:, 1] = patches[:, 0]  # two identical channels
    W_pos = Tensor(rng.normal(size=(4, 6)))
    zero = embed_patches(patches, Tensor(np.zeros((5, 6))), W_pos).data
    np.testing.assert_array_equal(zero, np.broadcast_to(W_pos.data[:3, None], (3, 2, 6)))
    out = embed_patches(patches, Tensor(rng.normal(size=(5, 6))), W_pos).data
    np.testing.assert_array_equal(out[:, 0], out[:, 1])


def test_embedding_scalar_loop_oracle():
    rng = np.random.default_rng(1)
    patch, W_e, W_pos = rng.normal(size=(1, 1, 3)), rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
    out = embed_patches(patch, Tensor(W_e), Tensor(W_pos)).data[0, 0]
    for c in range(4):
        assert abs(out[c] - (sum(patch[0, 0, i] * W_e[i, c] for i in range(3)) + W_pos[0, c])) < 1e-12


def test_prompt_without_stats_is_channel_uniform():
    rng = np.random.default_rng(2)
    E_p = Tensor(rng.normal(size=(3, 4)))
    out = prompt_inputs(rng.normal(size=5), rng.uniform(1, 2, size=5), E_p, Tensor(np.zeros((2, 4))))
    np.testing.assert_array_equal(out.data, np.broadcast_to(E_p.data[:, None], (3, 5, 4)))


def test_scaling_a_window_moves_prompt_tokens_not_signal_tokens():
    from rmgpt.model import prepare_inputs
    from conftest import tiny_config

    cfg = tiny_config()
    x = np.random.default_rng(3).normal(size=(1, cfg.L, 2))
    a, b = prepare_inputs(x, cfg), prepare_inputs(3.0 * x, cfg)
    np.testing.assert_allclose(a["patches"], b["patches"], atol=1e-12)
    np.testing.assert_allclose(np.log(b["sigma"]) - np.log(a["sigma"]), np.log(3.0))
    rng = np.random.default_rng(4)
    E_p, W_stat = Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(2, 4)))
    assert not np.allclose(prompt_inputs(a["mu"], a["sigma"], E_p, W_stat).data,
                           prompt_inputs(b["mu"], b["sigma"], E_p, W_stat).data)


def test_task_tokens_embedding_only_and_dc_input():
    rng = np.random.default_rng(5)
    e_cls = Tensor(rng.normal(size=4))
    only = task_inputs(np.zeros((3, 18)), e_cls, Tensor(np.zeros((18, 4))), n_spec=0).data
    np.testing.assert_array_equal(only[0], np.broadcast_to(e_cls.data, (3, 4)))
    spec = spectral_input(np.full((16, 1), 2.0))
    assert spec[0, 0] == pytest.approx(32.0) and np.all(spec[0, 1:9] < 1e-9)


def test_spectral_token_composition_oracle():
    rng = np.random.default_rng(6)
    L = 16
    x = rng.normal(size=(L, 1))
    W_f, e_cls = rng.normal(size=(L + 2, 3)), Tensor(np.zeros(3))
    tok = task_inputs(spectral_input(x), e_cls, Tensor(W_f), n_spec=1).data[1, 0]
    X = [sum(x[t, 0] * np.exp(-2j * np.pi * k * t / L) for t in range(L))
         for k in range(L // 2 + 1)]
    X[0], X[-1] = X[0].real, X[-1].real  # DC and Nyquist bins are exactly real
    feats = [abs(v) for v in X] + [np.angle(v) if abs(v) > 1e-9 else 0.0 for v in X]
    for c in range(3):
        assert abs(tok[c] - sum(f * W_f[i, c] for i, f in enumerate(feats))) < 1e-12


def test_decoder_identity_zero_and_oracle():
    z = np.random.default_rng(7).normal(size=(2, 6))
    np.testing.assert_array_equal(decode_patch(Tensor(z), Tensor(np.eye(6))).data, z)
    assert np.all(decode_patch(Tensor(np.zeros((2, 4))), Tensor(np.ones((4, 6)))).data == 0)
    z, G = np.random.default_rng(8).normal(size=4), np.random.default_rng(9).normal(size=(4, 6))
    out = decode_patch(Tensor(z[None]), Tensor(G)).data[0]
    for c in range(6):
        assert abs(out[c] - sum(z[i] * G[i, c] for i in range(4))) < 1e-12
