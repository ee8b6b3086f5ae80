"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(f: Callable[[], float], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. every entry of ``x.data``."""
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Largest ``|a-b| / max(|a|, |b|, floor)`` over all entries."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                    eps: float = 1e-5, max_entries: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``loss_fn()`` against finite differences.

    ``max_entries`` limits the number of probed coordinates per tensor
    (sampled with ``rng``). Returns the worst relative error.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    def f():
        return float(loss_fn().data)

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        num = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + eps
            fp = f()
            flat[i] = old - eps
            fm = f()
            flat[i] = old
            num[j] = (fp - fm) / (2.0 * eps)
        worst = max(worst, max_rel_error(ga.reshape(-1)[idx], num))
    return worst
