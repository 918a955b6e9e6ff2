import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmgpt.numeric import Tensor, grad_check
from rmgpt.token_space import (FaultPrototypeBank, diagnose, diagnosis_loss, min_distance,
                               predict_rul, prognosis_loss, similarity)


def loop_cosine(h, f):
    h, f = h.reshape(-1), f.reshape(-1)
    dot = sum(a * b for a, b in zip(h, f))
    nh = math.sqrt(sum(a * a for a in h))
    nf = math.sqrt(sum(b * b for b in f))
    return dot / (nh * nf)


def test_similarity_matches_scalar_loop():
    rng = np.random.default_rng(0)
    T_h, protos = rng.normal(size=(5, 2, 4)), rng.normal(size=(3, 2, 4))
    s = similarity(T_h, protos).data
    for i in range(5):
        for c in range(3):
            assert abs(s[i, c] - loop_cosine(T_h[i], protos[c])) < 1e-12


def test_self_similarity_and_scale_invariance():
    rng = np.random.default_rng(1)
    protos = rng.normal(size=(4, 2, 3))
    s = similarity(protos[2], protos).data
    assert s[2] == pytest.approx(1.0) and diagnose(protos[2], protos) == 2
    h = rng.normal(size=(2, 3))
    np.testing.assert_allclose(similarity(7.5 * h, protos).data, similarity(h, protos).data)


def test_diagnose_orthogonal_and_ties():
    protos = np.eye(4).reshape(4, 1, 4)
    assert diagnose(np.array([[2.0, 0.1, 0, 0]]), protos) == 0
    tie = np.array([[1.0, 1.0, 0.0, 0.0]])
    assert diagnose(tie, protos) == 0  # lowest index wins
    assert similarity(np.zeros((1, 4)), protos).data.tolist() == [0.0] * 4


def test_diagnose_agrees_with_brute_force_over_random_banks():
    rng = np.random.default_rng(2)
    for _ in range(100):
        C = int(rng.integers(2, 6))
        protos, h = rng.normal(size=(C, 2, 3)), rng.normal(size=(2, 3))
        scores = [loop_cosine(h, protos[c]) for c in range(C)]
        assert diagnose(h, protos) == max(range(C), key=lambda c: (scores[c], -c))


def test_min_distance_and_rul_head():
    rng = np.random.default_rng(3)
    protos, T_h = rng.normal(size=(4, 2, 3)), rng.normal(size=(6, 2, 3))
    d = min_distance(T_h, protos).data
    for i in range(6):
        ref = min(math.sqrt(sum((a - b) ** 2 for a, b in zip(T_h[i].ravel(), protos[c].ravel())))
                  for c in range(4))
        assert abs(d[i] - ref) < 1e-12
    assert predict_rul(protos[1], protos, 0.3, 0.8).data == pytest.approx(0.8)
    assert predict_rul(protos[1], protos, 0.3, 1.7).data == 1.0  # clamped
    np.testing.assert_array_equal(predict_rul(T_h, protos, 0.0, 0.4).data, np.full(6, 0.4))
    y = predict_rul(T_h, protos, 0.2, 0.9).data
    np.testing.assert_allclose(y, np.clip(0.9 - 0.2 * d, 0, 1))


def test_diagnosis_loss_uniform_and_limit():
    protos = np.eye(3).reshape(3, 1, 3)
    h = np.zeros((4, 1, 3))  # zero token scores 0 against every class
    assert diagnosis_loss(h, [0, 1, 2, 0], protos).data == pytest.approx(math.log(3))
    aligned = np.array([[[1.0, 0, 0]]]) - np.array([[[0, 1.0, 1.0]]])
    protos = np.array([[[1.0, 0, 0]], [[-1.0, 1, 1]], [[-1.0, 1, 1]]])
    assert diagnosis_loss(aligned, [0], protos, temperature=0.01).data < 1e-6


def test_diagnosis_loss_matches_scalar_loop_and_gradients():
    rng = np.random.default_rng(4)
    h, protos, labels = rng.normal(size=(5, 2, 3)), rng.normal(size=(3, 2, 3)), [0, 2, 1, 1, 0]
    tau = 0.5
    ref = 0.0
    for i, y in enumerate(labels):
        z = [loop_cosine(h[i], protos[c]) / tau for c in range(3)]
        ref -= z[y] - math.log(sum(math.exp(v) for v in z))
    assert diagnosis_loss(h, labels, protos, tau).data == pytest.approx(ref / 5, abs=1e-12)
    loss = lambda p: diagnosis_loss(p["h"], labels, p["f"], tau)  # noqa: E731
    assert grad_check(loss, {"h": h, "f": protos}) < 1e-6


def test_prognosis_loss_cases():
    t = np.array([0.1, 0.5, 0.9])
    assert prognosis_loss(Tensor(t), t).data == 0.0
    assert prognosis_loss(Tensor(t + 0.05), t).data == pytest.approx(0.0025)
    rng = np.random.default_rng(5)
    p, y = rng.uniform(size=7), rng.uniform(size=7)
    assert abs(prognosis_loss(Tensor(p), y).data - sum((a - b) ** 2 for a, b in zip(p, y)) / 7) < 1e-12
    with pytest.raises(ValueError, match="outside"):
        prognosis_loss(Tensor(t), t + 1)


def test_validation_errors():
    with pytest.raises(ValueError, match="temperature"):
        diagnosis_loss(np.ones((1, 1, 2)), [0], np.ones((2, 1, 2)), temperature=0)
    with pytest.raises(ValueError, match="out of range"):
        diagnosis_loss(np.ones((1, 1, 2)), [2], np.ones((2, 1, 2)))
    with pytest.raises(ValueError, match="does not match"):
        similarity(np.ones((1, 3, 2)), np.ones((2, 1, 2)))
    with pytest.raises(ValueError, match="C>=2"):
        FaultPrototypeBank("x", np.ones((1, 2, 3)))
    with pytest.raises(ValueError, match="non-finite"):
        FaultPrototypeBank("x", np.full((2, 2, 3), np.nan))
    assert FaultPrototypeBank("x", np.ones((3, 2, 4))).num_classes == 3


@given(st.integers(2, 6), st.floats(0.01, 100))
def test_similarity_bounded(C, scale):
    rng = np.random.default_rng(C)
    s = similarity(scale * rng.normal(size=(3, 2, 2)), rng.normal(size=(C, 2, 2))).data
    assert np.all(np.abs(s) <= 1 + 1e-12)
