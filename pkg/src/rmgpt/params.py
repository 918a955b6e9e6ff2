"""Named parameter storage with partitions, and the binary checkpoint format.

Checkpoint layout::

    b"RMGPT\\0"              magic
    uint32 LE               format version
    uint64 LE               header length in bytes
    header                  UTF-8 JSON: {"meta": {...}, "entries": [...]}
    payload                 raw little-endian float32 tensors, back to back

Each entry records ``name``, ``dtype``, ``shape``, ``offset`` (bytes from
the payload start) and ``partition``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .numeric import Tensor

PARTITIONS = ("backbone", "tokenizer", "prompt", "task_embed", "fault_bank", "rul_head", "decoder")
TRAINABLE = {
    "pretrain": frozenset({"backbone", "tokenizer", "decoder", "prompt", "task_embed"}),
    "prompt": frozenset({"prompt", "task_embed", "fault_bank", "rul_head"}),
    "finetune": frozenset(PARTITIONS),
}
MAGIC = b"RMGPT\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ParameterStore:
    def __init__(self) -> None:
        self.values: dict[str, np.ndarray] = {}
        self.partition: dict[str, str] = {}

    def add(self, name: str, value: np.ndarray, partition: str) -> None:
        if partition not in PARTITIONS:
            raise ValueError(f"unknown partition {partition!r}")
        if name in self.values:
            raise ValueError(f"duplicate parameter {name!r}")
        self.values[name] = np.asarray(value)
        self.partition[name] = partition

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self.values:
            raise KeyError(name)
        if value.shape != self.values[name].shape:
            raise ValueError(f"{name}: shape {value.shape} != {self.values[name].shape}")
        self.values[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def names(self, partitions: Iterable[str] | None = None) -> list[str]:
        if partitions is None:
            return list(self.values)
        wanted = set(partitions)
        return [n for n in self.values if self.partition[n] in wanted]

    def trainable_names(self, mode: str) -> list[str]:
        return self.names(TRAINABLE[mode])

    def count(self, names: Iterable[str] | None = None) -> int:
        names = self.values if names is None else names
        return int(sum(self.values[n].size for n in names))

    def tensors(self, trainable: Iterable[str] = ()) -> dict[str, Tensor]:
        """Wrap every parameter as a named leaf; ``trainable`` ones require grad."""
        trainable = set(trainable)
        return {n: Tensor(v, requires_grad=n in trainable, name=n) for n, v in self.values.items()}

    def astype(self, dtype) -> "ParameterStore":
        out = ParameterStore()
        for n, v in self.values.items():
            out.add(n, v.astype(dtype), self.partition[n])
        return out

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for n, v in self.values.items():
            out.add(n, v.copy(), self.partition[n])
        return out

    def checksum(self, names: Iterable[str] | None = None) -> str:
        h = hashlib.sha256()
        for n in (self.values if names is None else names):
            h.update(n.encode())
            h.update(np.ascontiguousarray(self.values[n]).tobytes())
        return h.hexdigest()


def checkpoint_bytes(store: ParameterStore, meta: dict | None = None) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, value in store.values.items():
        blob = np.ascontiguousarray(value, dtype="<f4").tobytes()
        entries.append({"name": name, "dtype": "float32", "shape": list(value.shape),
                        "offset": offset, "partition": store.partition[name]})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "entries": entries}, sort_keys=True).encode()
    return b"".join([MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(header)), header] + blobs)


def save_checkpoint(store: ParameterStore, path: str | Path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(store, meta))
    return path


def load_checkpoint(path: str | Path) -> tuple[ParameterStore, dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic")
    pos = len(MAGIC)
    version, header_len = struct.unpack_from("<IQ", data, pos)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos += struct.calcsize("<IQ")
    header = json.loads(data[pos:pos + header_len].decode())
    base = pos + header_len
    store = ParameterStore()
    for e in header["entries"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=base + e["offset"])
        store.add(e["name"], arr.astype(np.float32).reshape(e["shape"]), e["partition"])
    return store, header["meta"]
