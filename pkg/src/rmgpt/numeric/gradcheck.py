"""Central finite-difference oracle for tape gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tape, Tensor, backward


def grad_check(loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
               params: Mapping[str, np.ndarray], h: float = 1e-4,
               n_coords: int = 200, seed: int = 0,
               rtol: float = 1e-5, atol: float = 1e-7, order: int = 4) -> float:
    """Worst relative error between reverse-mode and central differences.

    ``order`` selects the central stencil: 2 is ``(f(x+h) - f(x-h)) / 2h``
    with O(h^2) truncation error; 4 (the default) combines steps h and 2h,
    ``(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h``, with O(h^4) error.
    At a fixed step the fourth-order stencil keeps truncation error below
    the comparison tolerance for sharply curved losses such as a
    low-temperature softmax over cosine scores.

    ``loss_fn`` maps named leaf tensors to a scalar. Coordinates are sampled
    uniformly over all parameters (every coordinate when there are fewer than
    ``n_coords``). The error for one coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, atol / rtol)``, so a
    value below ``rtol`` means the pair agrees to ``rtol`` relative or
    ``atol`` absolute.
    """
    if order not in (2, 4):
        raise ValueError(f"stencil order must be 2 or 4, got {order}")
    for name, value in params.items():
        if value.dtype != np.float64:
            raise TypeError(f"gradient check needs float64 parameters ({name} is {value.dtype})")
    values = {k: v.copy() for k, v in params.items()}

    def evaluate() -> float:
        leaves = {k: Tensor(v, name=k) for k, v in values.items()}
        return float(loss_fn(leaves).data)

    leaves = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in values.items()}
    with Tape() as tape:
        loss = loss_fn(leaves)
    grads = backward(tape, loss, leaves)

    coords = [(k, i) for k, v in values.items() for i in range(v.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > n_coords:
        pick = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    floor = atol / rtol
    worst = 0.0
    for name, i in coords:
        flat = values[name].reshape(-1)
        orig = flat[i]

        def diff(step: float) -> float:
            flat[i] = orig + step
            f_plus = evaluate()
            flat[i] = orig - step
            f_minus = evaluate()
            flat[i] = orig
            return f_plus - f_minus

        if order == 2:
            numeric = diff(h) / (2 * h)
        else:
            numeric = (8 * diff(h) - diff(2 * h)) / (12 * h)
        analytic = float(grads[name].reshape(-1)[i])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
    return worst
