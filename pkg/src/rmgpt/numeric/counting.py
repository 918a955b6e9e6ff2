"""Runtime FLOP instrumentation.

Ops in :mod:`rmgpt.numeric.tensor` report their cost here while a
:class:`OpCounter` is active. Counting conventions (shared with the closed
form in :mod:`rmgpt.numeric.flops`):

* one multiply-accumulate is 2 flops;
* softmax, layer normalization and activations cost 5 flops per element;
* a length-``n`` radix-2 transform costs ``5 n log2 n``;
* elementwise adds, scales and reshapes are free.
"""
from __future__ import annotations

import contextlib
from collections import defaultdict

_ACTIVE: list["OpCounter"] = []
_SCOPE: list[str] = []


class OpCounter:
    """Accumulates flops keyed by ``(module scope, op class)``."""

    def __init__(self) -> None:
        self.flops: dict[tuple[str, str], int] = defaultdict(int)

    def __enter__(self) -> "OpCounter":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def add(self, op_class: str, n: int) -> None:
        scope = ".".join(_SCOPE) if _SCOPE else "other"
        self.flops[(scope, op_class)] += int(n)

    @property
    def total(self) -> int:
        return sum(self.flops.values())

    def by_class(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for (_, cls), n in self.flops.items():
            out[cls] += n
        return dict(out)

    def by_module(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for (mod, _), n in self.flops.items():
            out[mod] += n
        return dict(out)

    def count(self, op_class: str, module_prefix: str = "") -> int:
        return sum(n for (mod, cls), n in self.flops.items()
                   if cls == op_class and mod.startswith(module_prefix))


def record(op_class: str, n: int) -> None:
    for counter in _ACTIVE:
        counter.add(op_class, n)


@contextlib.contextmanager
def scope(name: str):
    """Attribute flops recorded inside the block to module ``name``."""
    _SCOPE.append(name)
    try:
        yield
    finally:
        _SCOPE.pop()
