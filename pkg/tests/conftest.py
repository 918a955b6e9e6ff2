import dataclasses

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmgpt.config import ModelConfig
from rmgpt.experiments import synthesize
from rmgpt.model import DatasetHead, RmGPT

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    """Store the one-line verdict of an acceptance criterion for the run summary."""
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])


def tiny_config(**overrides) -> ModelConfig:
    """Small encoder for fast structural tests (L=256, 4 patches of 64)."""
    base = ModelConfig(d=8, K=1, H=2, d_ff=16, P=64, S=64, L=256, l_p=2, task_len=2,
                       l_s_max=16, dropout=0.0)
    return dataclasses.replace(base, **overrides)


def float64_model(cfg: ModelConfig, heads, seed: int = 0) -> RmGPT:
    model = RmGPT.create(cfg, heads, seed)
    model.store = model.store.astype(np.float64)
    return model


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    return tiny_config()


@pytest.fixture
def tiny_model(tiny_cfg) -> RmGPT:
    heads = [DatasetHead("diag", "diagnosis", 2, 3), DatasetHead("prog", "prognosis", 2, 4),
             DatasetHead("free", "unlabeled", 3)]
    return RmGPT.create(tiny_cfg, heads, seed=0)


@pytest.fixture(scope="session")
def synth_dirs(tmp_path_factory):
    """Small on-disk synthetic datasets shared by data, CLI and evaluation tests."""
    root = tmp_path_factory.mktemp("synth")
    return {
        "diagnosis": synthesize(root / "diagnosis", "diagnosis", 6, seed=3),
        "prognosis": synthesize(root / "prognosis", "prognosis", 5, seed=3, life_steps=6),
        "unlabeled": synthesize(root / "unlabeled", "unlabeled", 2, seed=3),
    }
