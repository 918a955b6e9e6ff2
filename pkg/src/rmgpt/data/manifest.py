"""Dataset manifests: a JSON description of records plus raw payload files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TASKS = ("diagnosis", "prognosis", "unlabeled")
PAYLOAD_KINDS = ("f32", "csv")


class ManifestError(ValueError):
    pass


@dataclass
class RecordEntry:
    path: str
    label: int | None = None
    rul: float | None = None
    condition_tag: str | None = None


@dataclass
class DatasetManifest:
    name: str
    task: str
    channels: int
    sample_rate_hz: float
    records: list[RecordEntry]
    class_names: list[str] = field(default_factory=list)
    anchor_count: int | None = None
    payload_kind: str = "f32"
    root: Path = field(default_factory=Path)

    @property
    def num_classes(self) -> int:
        """C: class count for diagnosis, anchor count for prognosis."""
        if self.task == "diagnosis":
            return len(self.class_names)
        if self.task == "prognosis":
            return int(self.anchor_count or 0)
        return 0

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def validate(self, check_payloads: bool = True) -> "DatasetManifest":
        if self.task not in TASKS:
            raise ManifestError(f"task: unknown task {self.task!r}")
        if self.channels < 1:
            raise ManifestError("channels: must be >= 1")
        if self.sample_rate_hz <= 0:
            raise ManifestError("sample_rate_hz: must be positive")
        if self.payload_kind not in PAYLOAD_KINDS:
            raise ManifestError(f"payload_kind: unknown kind {self.payload_kind!r}")
        if not self.records:
            raise ManifestError("empty dataset")
        if self.task != "unlabeled" and self.num_classes < 2:
            raise ManifestError(f"{self.task} needs at least 2 classes, got {self.num_classes}")
        C = self.num_classes
        for i, rec in enumerate(self.records):
            has_label, has_rul = rec.label is not None, rec.rul is not None
            if has_label and has_rul:
                raise ManifestError(f"record {i}: mixes label and rul")
            if self.task == "diagnosis":
                if not has_label:
                    raise ManifestError(f"record {i}: diagnosis record without label")
                if not 0 <= rec.label < C:
                    raise ManifestError(f"record {i}: label out of range ({rec.label} not in [0, {C}))")
            elif self.task == "prognosis":
                if not has_rul:
                    raise ManifestError(f"record {i}: prognosis record without rul")
                if not 0.0 <= rec.rul <= 1.0:
                    raise ManifestError(f"record {i}: rul {rec.rul} outside [0, 1]")
            elif has_label or has_rul:
                raise ManifestError(f"record {i}: unlabeled record carries a target")
            if check_payloads and not (self.root / rec.path).exists():
                raise ManifestError(f"record {i}: missing payload {rec.path}")
        return self

    def to_dict(self) -> dict:
        out = {"name": self.name, "task": self.task, "channels": self.channels,
               "sample_rate_hz": self.sample_rate_hz, "payload_kind": self.payload_kind}
        if self.task == "diagnosis":
            out["class_names"] = list(self.class_names)
        if self.task == "prognosis":
            out["anchor_count"] = self.anchor_count
        out["records"] = [{k: v for k, v in vars(r).items() if v is not None} for r in self.records]
        return out


def manifest_from_dict(raw: dict, root: Path | str = ".") -> DatasetManifest:
    try:
        records = [RecordEntry(path=str(r["path"]),
                               label=None if r.get("label") is None else int(r["label"]),
                               rul=None if r.get("rul") is None else float(r["rul"]),
                               condition_tag=r.get("condition_tag"))
                   for r in raw.get("records", [])]
        return DatasetManifest(
            name=str(raw["name"]), task=str(raw["task"]), channels=int(raw["channels"]),
            sample_rate_hz=float(raw["sample_rate_hz"]), records=records,
            class_names=[str(c) for c in raw.get("class_names", [])],
            anchor_count=raw.get("anchor_count"), payload_kind=raw.get("payload_kind", "f32"),
            root=Path(root))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed manifest: {exc!r}") from None


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse {path}: {exc}") from None
    return manifest_from_dict(raw, root=path.parent).validate()


def write_manifest(manifest: DatasetManifest, payloads: dict[str, np.ndarray],
                   out_dir: str | Path) -> Path:
    """Write payload files and ``manifest.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rel, arr in payloads.items():
        write_payload(out_dir / rel, arr, manifest.payload_kind)
    manifest.root = out_dir
    target = out_dir / "manifest.json"
    target.write_text(json.dumps(manifest.to_dict(), indent=1))
    return target


def write_payload(path: Path, arr: np.ndarray, kind: str) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    if kind == "f32":
        arr.astype("<f4").tofile(path)
    else:
        np.savetxt(path, arr, delimiter=",", fmt="%.9g")


def load_payload(manifest: DatasetManifest, index: int) -> np.ndarray:
    """Raw samples of record ``index`` as a float64 ``(L_raw, M)`` array."""
    path = manifest.root / manifest.records[index].path
    M = manifest.channels
    if manifest.payload_kind == "f32":
        flat = np.fromfile(path, dtype="<f4")
        if flat.size % M:
            raise ManifestError(f"record {index}: {flat.size} floats not divisible by {M} channels")
        arr = flat.reshape(-1, M)
    else:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
        if arr.shape[1] != M:
            raise ManifestError(f"record {index}: {arr.shape[1]} columns, expected {M}")
    return arr.astype(np.float64)
