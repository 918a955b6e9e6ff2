"""End-to-end acceptance checks, one test per criterion.

Every test records a one-line PASS/FAIL verdict with its measured numbers;
the lines are printed together at the end of the pytest run. The slow
behavioral checks (synthetic diagnosis, few-shot, prognosis) share one
pretrained desk encoder and take roughly half an hour on one CPU core.
"""
import dataclasses
import time

import numpy as np
import pytest

from rmgpt import backbone
from rmgpt.config import preset
from rmgpt.data import build_windows
from rmgpt.evaluation import bench_efficiency, fewshot_inversions
from rmgpt.experiments import (diagnosis_experiment, fewshot_experiment, pretrained_model,
                               prognosis_experiment, synthesize)
from rmgpt.model import DatasetHead, RmGPT
from rmgpt.numeric import (OpCounter, Tensor, factored_score_macs, grad_check,
                           joint_score_macs, softmax_attention)
from rmgpt.training import run_phase
from rmgpt.tokenizer import patch_count

from conftest import record_acceptance
from test_backbone import loop_attention
from test_numeric import PRIMITIVES
from test_tokenizer import brute_patch_count

DESK = preset("desk")
PAPER = preset("paper")


def verdict(n, ok, detail):
    record_acceptance(n, bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


# ------------------------------------------------------------------ 1

def test_criterion_01_tokenizer_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    mismatches = 0
    for _ in range(1000):
        L = int(rng.integers(1, 5000))
        P, S = int(rng.integers(1, L + 1)), int(rng.integers(1, L + 1))
        mismatches += patch_count(L, P, S) != brute_patch_count(L, P, S)
    seconds = time.perf_counter() - start
    l_s = patch_count(2048, 256, 256)
    verdict(1, l_s == 8 and mismatches == 0 and seconds < 1.0,
            f"l_s={l_s}, {mismatches}/1000 mismatches, {seconds:.3f}s")


# ------------------------------------------------------------------ 2

def test_criterion_02_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_prim = 0.0
    for fn, shapes in PRIMITIVES.values():
        params = {"a": rng.normal(size=shapes[0]), "b": rng.normal(size=shapes[1])}
        worst_prim = max(worst_prim, grad_check(fn, params, h=1e-4))
    cfg = dataclasses.replace(DESK.model, d=8, H=2, d_ff=16, dropout=0.0)
    model = RmGPT.create(cfg, [DatasetHead("a", "diagnosis", 2, 4),
                               DatasetHead("r", "prognosis", 2, 4)], seed=0)
    params = {n: model.store[n].astype(np.float64) for n in model.store.names()}
    for n in params:  # unit-scale prototypes keep the cosine away from its flat regime
        if n.endswith("prototypes"):
            params[n] = rng.normal(size=params[n].shape)
    x = rng.normal(size=(2, cfg.L, 2))
    losses = {
        "pretrain": lambda p: model.pretrain_loss(p, x, "a"),
        "diagnosis": lambda p: model.adapt_loss(p, x, np.array([0, 3]), "a"),
        "prognosis": lambda p: model.adapt_loss(p, x, np.array([0.2, 0.9]), "r"),
    }
    worst_model = {k: grad_check(f, params, h=1e-4) for k, f in losses.items()}
    seconds = time.perf_counter() - start
    worst = max(worst_prim, *worst_model.values())
    verdict(2, worst < 1e-5 and seconds < 120,
            f"max rel err (4th-order stencil, h=1e-4) primitives={worst_prim:.1e}, model="
            + ", ".join(f"{k}:{v:.1e}" for k, v in worst_model.items()) + f", {seconds:.1f}s")


# ------------------------------------------------------------------ 3

def test_criterion_03_attention_invariants():
    rng = np.random.default_rng(3)
    d, worst_loop, worst_row, convex_ok = 8, 0.0, 0.0, True
    for N in range(1, 9):
        for M in range(1, 5):
            for H in (1, 2, 4):
                x = rng.normal(size=(N, M, d))
                p = {f"{b}.{w}": Tensor(rng.normal(size=(d, d)) / np.sqrt(d))
                     for b in ("chan", "time") for w in "qkvo"}
                W = {k: v.data for k, v in p.items()}
                chan = backbone.attention_sublayer(Tensor(x), p, "chan", H).data
                tim = backbone.attention_sublayer(Tensor(np.swapaxes(x, 0, 1)), p, "time", H).data
                for n in range(N):
                    ref = loop_attention(x[n], *(W[f"chan.{w}"] for w in "qkvo"), H)
                    worst_loop = max(worst_loop, np.abs(chan[n] - ref).max())
                for m in range(M):
                    ref = loop_attention(x[:, m], *(W[f"time.{w}"] for w in "qkvo"), H)
                    worst_loop = max(worst_loop, np.abs(tim[m] - ref).max())
            for T, lead in ((M, (N,)), (N, (M,))):
                q, k, v = (Tensor(3 * rng.normal(size=lead + (2, T, 4))) for _ in range(3))
                out, w = softmax_attention(q, k, v, return_weights=True)
                worst_row = max(worst_row, np.abs(w.data.sum(axis=-1) - 1).max())
                lo, hi = v.data.min(axis=-2, keepdims=True), v.data.max(axis=-2, keepdims=True)
                convex_ok &= bool(np.all(out.data >= lo - 1e-12) and np.all(out.data <= hi + 1e-12))
    verdict(3, worst_loop <= 1e-10 and worst_row <= 1e-6 and convex_ok,
            f"loop oracle max err={worst_loop:.1e}, row-sum err={worst_row:.1e}, "
            f"convex={'ok' if convex_ok else 'violated'}")


# ------------------------------------------------------------------ 4

def test_criterion_04_mask_leakage():
    cfg = DESK.model
    M = 3
    model = RmGPT.create(cfg, [DatasetHead("x", "unlabeled", M)], seed=0)
    p = model.store.tensors()
    rng = np.random.default_rng(4)
    raw = rng.normal(size=(2, cfg.L, M)).astype(np.float32)
    base = model.encode(p, raw, "x", masked=True).T_out.data
    start = (cfg.l_s - 1) * cfg.S
    identical = []
    for m in range(M):
        moved = raw.copy()
        moved[:, start:start + cfg.P, m] = 1e3 * rng.normal(size=(2, cfg.P))
        identical.append(np.array_equal(model.encode(p, moved, "x", masked=True).T_out.data, base))
    verdict(4, all(identical), f"bit-identical per channel: {identical}")


# ------------------------------------------------------------------ 5

def test_criterion_05_factored_attention_complexity():
    d, H = 8, 2
    d_k = d // H
    cfg = dataclasses.replace(DESK.model, d=d, H=H, d_ff=16, K=1, dropout=0.0)
    params = RmGPT.create(cfg, [], seed=0).store.tensors()
    exact, not_below = True, []
    for N in (2, 4, 8, 16):
        for M in (2, 4, 8, 16):
            x = Tensor(np.random.default_rng(N * M).normal(size=(1, N, M, d)))
            t = N - cfg.task_len
            seq = backbone.TokenSequence(x, {"prompt": (0, 0), "signal": (0, t), "task": (t, N)})
            with OpCounter() as counter:
                backbone.forward(seq, cfg, params)
            counted = counter.count("attn_score", "layer0") // 2  # 2 flops per MAC
            formula = H * (N * M * M * d_k + M * N * N * d_k)
            exact &= counted == formula == factored_score_macs(N, M, H, d_k)
            if not counted < joint_score_macs(N, M, H, d_k):
                not_below.append((N, M))
    detail = f"counts exact={exact}; not strictly below joint at (N,M)={not_below or 'none'}"
    if not_below == [(2, 2)]:
        detail += " (N+M = NM there, so the two counts coincide)"
    verdict(5, exact and not not_below, detail)


# ------------------------------------------------------------------ 6

def test_criterion_06_efficiency_ratios():
    reps = {r.variant: r for r in bench_efficiency(PAPER.model, channels=2, measure=False)}
    patch_ratio = reps["without_patch"].flops / reps["orin"].flops
    tc_more = reps["without_tc"].flops > reps["orin"].flops
    frac = reps["orin"].prompt_fraction
    verdict(6, patch_ratio >= 40 and tc_more and frac < 0.05,
            f"without-patch/patch flops={patch_ratio:.1f}x, without-TC "
            f"{reps['without_tc'].flops / 1e9:.2f} vs factored {reps['orin'].flops / 1e9:.2f} GFLOP, "
            f"prompt-trainable fraction={100 * frac:.2f}%")


# ------------------------------------------------------------------ shared desk encoder

@pytest.fixture(scope="module")
def desk_encoder(tmp_path_factory):
    """Desk encoder pretrained on 400 unlabeled synthetic windows."""
    work = tmp_path_factory.mktemp("desk")
    start = time.perf_counter()
    unlabeled = synthesize(work / "unlabeled", "unlabeled", 100, seed=0)
    windows = len(build_windows(unlabeled, DESK.model.L, task="unlabeled"))
    model, log = pretrained_model(DESK.model, DESK.train, unlabeled, seed=0)
    return {"model": model, "log": log, "windows": windows, "work": work,
            "seconds": time.perf_counter() - start}


@pytest.fixture(scope="module")
def desk_diagnosis(desk_encoder):
    res = diagnosis_experiment(desk_encoder["work"] / "diag", DESK.model, DESK.train, seed=0,
                               encoder=desk_encoder["model"])
    res.extras["total_seconds"] = desk_encoder["seconds"] + res.seconds
    return res


# ------------------------------------------------------------------ 7

@pytest.mark.slow
def test_criterion_07_synthetic_diagnosis(desk_encoder, desk_diagnosis):
    acc = desk_diagnosis.report.accuracy
    total = desk_diagnosis.extras["total_seconds"]
    epochs = len(desk_encoder["log"].epoch_losses)
    verdict(7, acc >= 0.95 and total < 600 and desk_encoder["windows"] == 400 and epochs == 20,
            f"test accuracy={acc:.3f} on {desk_diagnosis.report.n} windows, pretrain "
            f"{epochs} epochs on {desk_encoder['windows']} windows, {total:.0f}s total")


# ------------------------------------------------------------------ 8

@pytest.mark.slow
def test_criterion_08_pretraining_benefit(desk_encoder):
    res = fewshot_experiment(desk_encoder["work"] / "fewshot", DESK.model, DESK.train, seed=0,
                             encoder=desk_encoder["model"])
    pre, rnd = res["pretrained"], res["random"]
    gain = pre[0].mean - rnd[0].mean
    inversions = fewshot_inversions(pre)
    curve = ", ".join(f"k={r.k}:{r.mean:.3f}" for r in pre)
    verdict(8, gain >= 0.10 and inversions <= 2,
            f"1-shot pretrained={pre[0].mean:.3f} vs random={rnd[0].mean:.3f} "
            f"(gain {100 * gain:+.1f} points); pretrained curve {curve}; {inversions} inversions")


# ------------------------------------------------------------------ 9

@pytest.mark.slow
def test_criterion_09_synthetic_prognosis(tmp_path):
    report, extra = prognosis_experiment(tmp_path, DESK.model, DESK.train, seed=0, lives=20)
    verdict(9, report.mae <= 0.15 and extra["seconds"] < 600,
            f"held-out MAE={report.mae:.4f} (MSE {report.mse:.4f}) on {report.n} windows, "
            f"{extra['seconds']:.0f}s")


# ------------------------------------------------------------------ 10

def test_criterion_10_determinism_and_persistence(tmp_path):
    train = dataclasses.replace(DESK.train, pretrain_epochs=2)
    unlabeled = synthesize(tmp_path / "u", "unlabeled", 4, seed=5)
    windows = build_windows(unlabeled, DESK.model.L, task="unlabeled")
    blobs = []
    for run in ("a", "b"):
        model = RmGPT.create(DESK.model, [DatasetHead(unlabeled.name, "unlabeled", 2)], seed=5)
        log = run_phase(model, [windows], train, "pretrain", seed=5,
                        checkpoint=tmp_path / f"{run}.ckpt")
        blobs.append((tmp_path / f"{run}.ckpt").read_bytes())
    same_ckpt = blobs[0] == blobs[1]
    loaded = RmGPT.load(tmp_path / "a.ckpt", DESK.model)
    restored = RmGPT.load(tmp_path / "a.ckpt")
    x = windows.windows[:3]
    same_fwd = np.array_equal(loaded.encode(loaded.store.tensors(), x, unlabeled.name).T_out.data,
                              restored.encode(restored.store.tensors(), x,
                                              unlabeled.name).T_out.data)
    same_fwd &= np.array_equal(
        model.encode(model.store.tensors(), x, unlabeled.name).T_out.data,
        loaded.encode(loaded.store.tensors(), x, unlabeled.name).T_out.data)
    verdict(10, same_ckpt and same_fwd and len(log.step_losses) > 0,
            f"checkpoints identical={same_ckpt} ({len(blobs[0])} bytes), "
            f"round-trip forward identical={same_fwd}")


# ------------------------------------------------------------------ 11

@pytest.mark.slow
def test_criterion_11_token_space_separation(desk_diagnosis):
    tok, raw = desk_diagnosis.separation_tokens, desk_diagnosis.separation_raw
    verdict(11, tok > raw, f"inter/intra ratio: health tokens={tok:.3f}, raw windows={raw:.3f}")


# ------------------------------------------------------------------ 12

def test_criterion_12_prompt_freeze(tmp_path):
    labeled = synthesize(tmp_path / "d", "diagnosis", 2, seed=6)
    windows = build_windows(labeled, DESK.model.L)
    model = RmGPT.create(DESK.model, [DatasetHead(labeled.name, "diagnosis", 2, 4)], seed=6)
    frozen = model.store.names(("backbone", "tokenizer", "decoder"))
    before = {n: model.store[n].copy() for n in frozen}
    train = dataclasses.replace(DESK.train, prompt_epochs=2, min_adapt_steps=0)
    log = run_phase(model, [windows], train, "prompt", seed=6)
    changed = [n for n in frozen if not np.array_equal(before[n], model.store[n])]
    moved = not np.array_equal(model.store[f"E_p.{labeled.name}"],
                               RmGPT.create(DESK.model, [DatasetHead(labeled.name, "diagnosis", 2, 4)],
                                            seed=6).store[f"E_p.{labeled.name}"])
    verdict(12, not changed and moved,
            f"{len(frozen)} frozen tensors, {len(changed)} changed after "
            f"{len(log.step_losses)} prompt steps; prompt rows updated={moved}")
