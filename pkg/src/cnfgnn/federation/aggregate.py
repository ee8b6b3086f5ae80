"""Server-side reductions: FedAvg and the FMTL cluster regulariser."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .. import numerics as nx
from ..errors import ContractError, DimensionError


def fedavg(models: Sequence, counts: Sequence) -> object:
    """Sample-weighted mean ``sum_i (N_i / N) theta_i``.

    ``models`` holds arrays or dicts of arrays with identical structure.
    Accumulation runs in ascending client order so the result does not
    depend on arrival order.
    """
    if len(models) == 0:
        raise ContractError("fedavg needs at least one model")
    if len(counts) != len(models):
        raise DimensionError(f"{len(models)} models but {len(counts)} sample counts")
    counts = [int(c) for c in counts]
    if min(counts) <= 0:
        raise ContractError("sample counts must be positive")
    total = sum(counts)
    if isinstance(models[0], Mapping):
        keys = list(models[0])
        for m in models[1:]:
            if list(m) != keys:
                raise DimensionError("models have different parameter names")
        return {k: fedavg([m[k] for m in models], counts) for k in keys}
    arrays = [np.asarray(getattr(m, "data", m), dtype=np.float64) for m in models]
    shape = arrays[0].shape
    acc = np.zeros(shape)
    for a, c in zip(arrays, counts):
        if a.shape != shape:
            raise DimensionError(f"model shapes differ: {shape} vs {a.shape}")
        acc += (c / total) * a
    return acc


def neighbour_weights(adjacency: np.ndarray) -> np.ndarray:
    """Off-diagonal cluster weights ``alpha[i, j]``."""
    alpha = np.array(adjacency, dtype=np.float64)
    np.fill_diagonal(alpha, 0.0)
    return alpha


def fmtl_regularizer(weights, adjacency, lambda1: float = 0.1) -> float:
    """``lambda1 * sum_i sum_{j != i} alpha_ij <w_i, w_i - w_j>``.

    ``weights`` is ``(V, P)``: one flattened parameter vector per node.
    """
    w = np.asarray(weights, dtype=np.float64)
    alpha = np.asarray(adjacency, dtype=np.float64)
    if w.ndim != 2:
        raise DimensionError(f"weights must be (nodes, params), got {w.shape}")
    if alpha.shape != (w.shape[0], w.shape[0]):
        raise DimensionError(f"adjacency {alpha.shape} does not match {w.shape[0]} nodes")
    alpha = neighbour_weights(alpha)
    total = 0.0
    for i in range(w.shape[0]):
        for j in np.nonzero(alpha[i])[0]:
            total += alpha[i, j] * float(w[i] @ (w[i] - w[j]))
    return lambda1 * total


def fmtl_surrogate(params: Mapping[str, nx.Tensor], snapshot: Mapping[str, np.ndarray],
                   adjacency: np.ndarray, lambda1: float) -> nx.Tensor:
    """Differentiable stand-in whose gradient for node ``i`` equals the regulariser's.

    Neighbour weights are the round-start ``snapshot`` each node received,
    so node ``i`` only reads its own live parameters.
    """
    alpha = neighbour_weights(adjacency)
    both = alpha + alpha.T
    degree = alpha.sum(axis=1)
    total = None
    for name, p in params.items():
        v = p.shape[0]
        w = nx.reshape(p, (v, p.size // v))
        w_hat = snapshot[name].reshape(v, -1)
        pull = both @ w_hat
        term = nx.tsum(nx.square(w) * degree[:, None]) - nx.tsum(w * pull)
        total = term if total is None else total + term
    return total * lambda1
