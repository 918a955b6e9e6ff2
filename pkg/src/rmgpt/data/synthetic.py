"""Desk-scale bearing vibration generator.

A fault is an impulse train at a fixed multiple of the shaft rate; every
impulse rings the structural mode of its defect location with exponential
decay.
Inner-race impulses are amplitude modulated at the shaft rate and ball
impulses at the cage rate. A second channel sees an attenuated, delayed copy.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .manifest import DatasetManifest, RecordEntry

FAULT_MULTIPLES = {"inner": 5.4, "outer": 3.6, "ball": 4.7}
# The defect location sets the transmission path, so each fault type rings
# a different structural mode (as a multiple of ``resonance_hz``).
RESONANCE_SCALE = {"inner": 1.3, "outer": 0.65, "ball": 1.0}
CAGE_RATIO = 0.4
MODES = ("diagnosis", "prognosis", "unlabeled")


@dataclass
class SyntheticSpec:
    mode: str = "diagnosis"
    classes: tuple[str, ...] = ("healthy", "inner", "outer", "ball")
    sample_rate_hz: float = 5000.0
    record_length: int = 2048
    channels: int = 2
    shaft_rate_hz: float = 25.0
    resonance_hz: float = 1700.0
    impulse_decay_s: float = 0.002
    noise_std: float = 0.6
    fault_amplitude: float = 1.0
    speed_jitter: float = 0.03
    life_steps: int = 20
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode: unknown synthetic mode {self.mode!r}")
        nyq = self.sample_rate_hz / 2
        top = self.shaft_rate_hz * (1 + self.speed_jitter) * max(FAULT_MULTIPLES.values())
        top_mode = self.resonance_hz * max(RESONANCE_SCALE.values())
        for name, rate in (("shaft_rate_hz", self.shaft_rate_hz), ("resonance_hz", top_mode),
                           ("fault rate", top)):
            if not 0 < rate < nyq:
                raise ValueError(f"{name}: {rate} Hz not below Nyquist {nyq} Hz")
        for c in self.classes:
            if c != "healthy" and c not in FAULT_MULTIPLES:
                raise ValueError(f"classes: unknown class {c!r}")
        if self.mode == "prognosis" and self.life_steps < 2:
            raise ValueError("life_steps must be >= 2 in prognosis mode")
        if self.channels < 1 or self.record_length < 1:
            raise ValueError("channels and record_length must be positive")
        if self.noise_std < 0 or self.impulse_decay_s <= 0:
            raise ValueError("noise_std must be >= 0 and impulse_decay_s > 0")


def _rng(spec: SyntheticSpec, *keys) -> np.random.Generator:
    words = [spec.seed, zlib.crc32(spec.mode.encode())] + [
        zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(words))


def _fault_source(spec: SyntheticSpec, kind: str, amplitude: float,
                  rng: np.random.Generator) -> np.ndarray:
    fs, n = spec.sample_rate_hz, spec.record_length
    shaft = spec.shaft_rate_hz * (1 + spec.speed_jitter * rng.uniform(-1, 1))
    rate = FAULT_MULTIPLES[kind] * shaft
    period = 1.0 / rate
    count = int(n / fs * rate) + 2
    times = rng.uniform(0, period) + np.arange(count) * period
    times = times + rng.normal(0, 0.01 * period, size=count)
    amps = amplitude * (1 + 0.1 * rng.normal(size=count))
    if kind == "inner":
        amps = amps * (1 + 0.5 * np.cos(2 * np.pi * shaft * times + rng.uniform(0, 2 * np.pi)))
    elif kind == "ball":
        amps = amps * (1 + 0.5 * np.cos(2 * np.pi * CAGE_RATIO * shaft * times
                                        + rng.uniform(0, 2 * np.pi)))
    idx = np.floor(times * fs).astype(np.int64)
    keep = (idx >= 0) & (idx < n)
    train = np.zeros(n)
    np.add.at(train, idx[keep], amps[keep])
    j = np.arange(int(6 * spec.impulse_decay_s * fs) + 1)
    ring = np.exp(-j / (spec.impulse_decay_s * fs)) * np.sin(2 * np.pi * RESONANCE_SCALE[kind] * spec.resonance_hz * j / fs)
    return np.convolve(train, ring)[:n]


def synth_record(spec: SyntheticSpec, kind: str, amplitude: float,
                 rng: np.random.Generator) -> np.ndarray:
    """One (record_length, channels) float32 record of class ``kind``."""
    n, M = spec.record_length, spec.channels
    source = np.zeros(n) if kind == "healthy" else _fault_source(spec, kind, amplitude, rng)
    out = np.empty((n, M))
    for m in range(M):
        gain, delay = 0.6 ** m, 2 * m
        out[:, m] = gain * np.roll(source, delay)
        if delay:
            out[:delay, m] = 0.0
    if spec.noise_std > 0:
        out += spec.noise_std * rng.normal(size=(n, M))
    return out.astype(np.float32)


def generate_synthetic(spec: SyntheticSpec, n_per_class: int
                       ) -> tuple[DatasetManifest, dict[str, np.ndarray]]:
    """Build a manifest and its payloads (not yet written to disk).

    Diagnosis and unlabeled modes emit ``n_per_class`` records per class.
    Prognosis mode emits ``n_per_class`` run-to-failure lives of
    ``life_steps`` snapshots each; the impulse amplitude grows linearly with
    life fraction and ``rul = 1 - life_fraction``.
    """
    spec.validate()
    payloads: dict[str, np.ndarray] = {}
    records: list[RecordEntry] = []
    faults = [c for c in spec.classes if c != "healthy"]
    if spec.mode in ("diagnosis", "unlabeled"):
        for c, kind in enumerate(spec.classes):
            for i in range(n_per_class):
                path = f"{kind}_{i:04d}.f32"
                payloads[path] = synth_record(spec, kind, spec.fault_amplitude, _rng(spec, kind, i))
                label = c if spec.mode == "diagnosis" else None
                records.append(RecordEntry(path, label=label, condition_tag=kind))
        manifest = DatasetManifest(
            name=f"synth_{spec.mode}", task=spec.mode, channels=spec.channels,
            sample_rate_hz=spec.sample_rate_hz, records=records,
            class_names=list(spec.classes) if spec.mode == "diagnosis" else [])
    else:
        if not faults:
            raise ValueError("prognosis mode needs at least one fault class")
        for life in range(n_per_class):
            life_rng = _rng(spec, "life", life)
            kind = faults[life_rng.integers(len(faults))]
            peak = spec.fault_amplitude * life_rng.uniform(0.8, 1.2)
            for step in range(spec.life_steps):
                frac = step / (spec.life_steps - 1)
                path = f"life{life:03d}_step{step:03d}.f32"
                payloads[path] = synth_record(spec, kind, peak * frac, _rng(spec, "snap", life, step))
                records.append(RecordEntry(path, rul=round(1.0 - frac, 12),
                                           condition_tag=f"life{life:03d}"))
        manifest = DatasetManifest(
            name="synth_prognosis", task="prognosis", channels=spec.channels,
            sample_rate_hz=spec.sample_rate_hz, records=records, anchor_count=4)
    return manifest.validate(check_payloads=False), payloads
