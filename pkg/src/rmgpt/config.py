"""Run configuration: dataclasses, presets and the ``.cfg`` text format.

Config files are INI-style with ``[model]``, ``[train]``, ``[data]`` and
``[output]`` sections. An optional top-level ``[run]`` section names the
preset that supplies every value the file leaves out.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ModelConfig:
    d: int = 64
    K: int = 2
    H: int = 4
    d_ff: int = 256
    P: int = 256
    S: int = 256
    L: int = 2048
    l_p: int = 10
    task_len: int = 2
    prototype_len: int = 1
    l_s_max: int = 2048
    dropout: float = 0.1
    attention: str = "factored"
    post_norm: bool = True

    @property
    def l_s(self) -> int:
        return (self.L - self.P) // self.S + 1

    @property
    def n_spec(self) -> int:
        return self.task_len - 1

    @property
    def N(self) -> int:
        return self.l_p + self.l_s + self.task_len

    @property
    def d_k(self) -> int:
        return self.d // self.H

    def validate(self) -> None:
        for name in ("d", "H", "d_ff", "P", "S", "L", "task_len", "l_s_max"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name}", "must be positive")
        if self.K < 0 or self.l_p < 0:
            raise ConfigError("model.K" if self.K < 0 else "model.l_p", "must be non-negative")
        if self.d % self.H:
            raise ConfigError("model.d", f"d not divisible by H (d={self.d}, H={self.H})")
        if self.P > self.L:
            raise ConfigError("model.P", f"patch length {self.P} exceeds window length {self.L}")
        if self.l_s > self.l_s_max:
            raise ConfigError("model.l_s_max", f"{self.l_s} patches exceed positional table {self.l_s_max}")
        if self.L & (self.L - 1):
            raise ConfigError("model.L", f"window length {self.L} is not a power of two")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("model.dropout", "must lie in [0, 1)")
        if self.attention not in ("factored", "joint"):
            raise ConfigError("model.attention", f"unknown attention kind {self.attention!r}")
        if self.prototype_len != 1:
            raise ConfigError("model.prototype_len", "only single-vector prototypes are supported")


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    pretrain_epochs: int = 20
    finetune_epochs: int = 3
    prompt_epochs: int = 5
    min_adapt_steps: int = 0
    adapt_learning_rate: float = 0.0  # 0 means learning_rate
    adapt_batch_size: int = 0  # 0 means batch_size
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    temperature: float = 0.07
    mode: str = "pretrain"
    checkpoint_every_epoch: bool = False

    def phase_values(self, mode: str) -> tuple[int, float]:
        """``(batch_size, learning_rate)`` in effect for phase ``mode``."""
        if mode == "pretrain":
            return self.batch_size, self.learning_rate
        return (self.adapt_batch_size or self.batch_size,
                self.adapt_learning_rate or self.learning_rate)

    def validate(self) -> None:
        for name in ("batch_size", "learning_rate", "eps", "temperature"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"train.{name}", "must be positive")
        for name in ("pretrain_epochs", "finetune_epochs", "prompt_epochs", "min_adapt_steps",
                     "weight_decay", "adapt_learning_rate", "adapt_batch_size"):
            if getattr(self, name) < 0:
                raise ConfigError(f"train.{name}", "must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("train.beta1", "betas must lie in [0, 1)")
        if self.mode not in ("pretrain", "prompt", "finetune"):
            raise ConfigError("train.mode", f"unknown mode {self.mode!r}")


@dataclass
class DataConfig:
    manifests: list[str] = field(default_factory=list)
    target_hz: float = 5000.0
    hop: int = 0  # 0 means hop = L

    def validate(self, check_paths: bool = True) -> None:
        if self.target_hz <= 0:
            raise ConfigError("data.target_hz", "must be positive")
        if self.hop < 0:
            raise ConfigError("data.hop", "must be non-negative")
        if check_paths:
            for p in self.manifests:
                if not Path(p).exists():
                    raise ConfigError("data.manifests", f"no such file: {p}")


@dataclass
class OutputConfig:
    run_dir: str = "runs/default"
    checkpoint: str = ""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    preset: str = "desk"

    def validate(self, check_paths: bool = True) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        self.data.validate(check_paths)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _preset_values() -> dict[str, RunConfig]:
    # Large pretraining batches give stable next-patch descent in 20 epochs;
    # adaptation runs at least 300 steps at a higher rate so the prototype
    # bank and RUL head converge on small labeled sets.
    desk = RunConfig(
        train=TrainConfig(batch_size=256, learning_rate=1e-3, min_adapt_steps=300,
                          adapt_learning_rate=3e-3),
        preset="desk",
    )
    paper = RunConfig(
        model=ModelConfig(d=512, K=4, H=8, d_ff=2048, P=256, S=256, L=2048, l_p=10, task_len=2),
        train=TrainConfig(batch_size=256, learning_rate=3e-7, pretrain_epochs=20,
                          finetune_epochs=3, prompt_epochs=5),
        preset="paper",
    )
    return {"desk": desk, "paper": paper}


PRESETS = tuple(_preset_values())


def preset(name: str) -> RunConfig:
    table = _preset_values()
    if name not in table:
        raise ConfigError("run.preset", f"unknown preset {name!r} (choose from {', '.join(table)})")
    return table[name]


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [s.strip() for s in raw.split(",") if s.strip()]
        return raw.strip()
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {type(default).__name__}") from None


_SECTIONS = ("model", "train", "data", "output")


def parse_config(text: str) -> RunConfig:
    """Parse ``.cfg`` text into a RunConfig (no validation)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (K vs k)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    name = parser.get("run", "preset", fallback="desk")
    cfg = preset(name)
    for section in parser.sections():
        if section == "run":
            extra = set(parser["run"]) - {"preset"}
            if extra:
                raise ConfigError(f"run.{sorted(extra)[0]}", "unknown key")
            continue
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        target = getattr(cfg, section)
        known = {f.name: f for f in fields(target)}
        for key, raw in parser[section].items():
            if key not in known:
                raise ConfigError(f"{section}.{key}", "unknown key")
            setattr(target, key, _coerce(f"{section}.{key}", raw, getattr(target, key)))
    return cfg


def dump_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (K vs k)
    parser["run"] = {"preset": cfg.preset}
    for section in _SECTIONS:
        block = {}
        for f in fields(getattr(cfg, section)):
            value = getattr(getattr(cfg, section), f.name)
            block[f.name] = ", ".join(value) if isinstance(value, list) else repr(value) \
                if isinstance(value, float) else str(value)
        parser[section] = block
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def validate_config(path: str | Path, check_paths: bool = True) -> RunConfig:
    """Load ``path``, fill defaults from its preset and run cross-field checks."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"no such file: {path}")
    return parse_config(path.read_text()).validate(check_paths)


def check_compatible(cfg: ModelConfig, stored: dict) -> None:
    """Raise if a checkpoint's model section disagrees with ``cfg``."""
    for key in ("d", "K", "H", "d_ff", "P", "S", "L", "l_p", "task_len", "l_s_max", "attention"):
        if key in stored and stored[key] != getattr(cfg, key):
            raise ConfigError(f"model.{key}",
                              f"checkpoint has {key}={stored[key]} but config has {key}={getattr(cfg, key)}")
