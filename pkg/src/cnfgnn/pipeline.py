"""Series ingestion, windowing, splitting, normalisation, synthesis, RMSE."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, DimensionError
from .graphs import SensorGraph, row_normalized

WINDOW = 24
INPUT_STEPS = 12
SPLIT_RATIOS = (0.7, 0.1, 0.2)
SELF_COEF = 0.5
DIFFUSION_COEF = 0.4


@dataclass(frozen=True)
class Stats:
    mean: float
    std: float


@dataclass
class SeriesDataset:
    """Raw readings of shape ``(V, T, D)``."""
    readings: np.ndarray
    node_ids: tuple
    timestamps: tuple | None = None

    def __post_init__(self):
        self.readings = np.asarray(self.readings, dtype=np.float64)
        if self.readings.ndim == 2:
            self.readings = self.readings[..., None]
        if self.readings.ndim != 3 or self.readings.shape[0] != len(self.node_ids):
            raise DimensionError(f"readings {self.readings.shape} do not match {len(self.node_ids)} nodes")

    @property
    def num_nodes(self) -> int:
        return self.readings.shape[0]

    @property
    def length(self) -> int:
        return self.readings.shape[1]

    def select_nodes(self, index) -> "SeriesDataset":
        index = np.asarray(index)
        return SeriesDataset(self.readings[index], tuple(self.node_ids[i] for i in index), self.timestamps)


@dataclass
class WindowedDataset:
    """Normalised windows per split; arrays are ``(V, N, steps, D)``."""
    train: tuple
    val: tuple
    test: tuple
    stats: Stats
    node_ids: tuple

    @property
    def num_nodes(self) -> int:
        return self.train[0].shape[0]

    def select_nodes(self, index) -> "WindowedDataset":
        index = np.asarray(index)
        pick = lambda pair: (pair[0][index], pair[1][index])  # noqa: E731
        return WindowedDataset(pick(self.train), pick(self.val), pick(self.test), self.stats,
                               tuple(self.node_ids[i] for i in index))


def window(series, win: int = WINDOW, m: int = INPUT_STEPS, stride: int = 1):
    """Sliding windows over the time axis.

    ``series`` is ``(T,)`` or ``(..., T, D)``. Returns ``(x, y)`` with the
    window index on the axis where time was: ``x`` holds the first ``m``
    frames of each window and ``y`` the remaining ``win - m``.
    """
    s = np.asarray(series, dtype=np.float64)
    flat = s.ndim == 1
    if flat:
        s = s[:, None]
    t = s.shape[-2]
    if t < win:
        raise DegenerateInputError(f"series of length {t} is shorter than window {win}")
    if not 0 < m < win:
        raise DegenerateInputError(f"input steps m={m} must lie in (0, {win})")
    w = sliding_window_view(s, win, axis=-2)[..., ::stride, :, :]
    w = np.swapaxes(w, -1, -2)  # (..., Nw, win, D)
    x, y = w[..., :m, :].copy(), w[..., m:, :].copy()
    if flat:
        x, y = x[..., 0], y[..., 0]
    return x, y


def split_counts(n: int, ratios=SPLIT_RATIOS) -> tuple[int, int, int]:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DegenerateInputError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = n - n_train - n_val
    for name, k in (("train", n_train), ("val", n_val), ("test", n_test)):
        if k <= 0:
            raise DegenerateInputError(f"{name} split is empty ({n} windows, ratios {ratios})")
    return n_train, n_val, n_test


def split(windows, ratios=SPLIT_RATIOS, axis: int = 0):
    """Chronological train/val/test split along ``axis``.

    ``windows`` is an array or a tuple of arrays split identically. The test
    split absorbs the rounding remainder.
    """
    arrays = windows if isinstance(windows, tuple) else (windows,)
    n = arrays[0].shape[axis]
    n_train, n_val, _ = split_counts(n, ratios)
    cuts = []
    for a in arrays:
        cuts.append(np.split(a, [n_train, n_train + n_val], axis=axis))
    if isinstance(windows, tuple):
        return tuple(tuple(c[k] for c in cuts) for k in range(3))
    return tuple(cuts[0])


def compute_stats(readings: np.ndarray, n_train_windows: int, win: int = WINDOW) -> Stats:
    """Mean/std over the readings covered by the training windows only."""
    portion = np.asarray(readings)[..., : n_train_windows + win - 1, :]
    return Stats(float(portion.mean()), float(portion.std()))


def normalize(data, stats: Stats):
    if not stats.std > 0:
        raise DegenerateInputError("cannot normalise with zero standard deviation")
    return (np.asarray(data, dtype=np.float64) - stats.mean) / stats.std


def denormalize(data, stats: Stats):
    if not stats.std > 0:
        raise DegenerateInputError("cannot denormalise with zero standard deviation")
    return np.asarray(data, dtype=np.float64) * stats.std + stats.mean


def rmse(pred, target, stats: Stats | None = None) -> float:
    """Root mean squared error on de-normalised values (identity if no stats)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    if stats is not None:
        pred, target = denormalize(pred, stats), denormalize(target, stats)
    return float(np.sqrt(np.mean(np.square(pred - target))))


def prepare(dataset: SeriesDataset, win: int = WINDOW, m: int = INPUT_STEPS,
            ratios=SPLIT_RATIOS, stats: Stats | None = None) -> WindowedDataset:
    """Window every node, split chronologically and z-score with train stats.

    Pass ``stats`` to normalise with statistics computed elsewhere (e.g. on
    the nodes visible during inductive training).
    """
    x, y = window(dataset.readings, win, m)
    n_train, _, _ = split_counts(x.shape[1], ratios)
    if stats is None:
        stats = compute_stats(dataset.readings, n_train, win)
    if not stats.std > 0:
        raise DegenerateInputError("training readings are constant")
    x, y = normalize(x, stats), normalize(y, stats)
    train, val, test = split((x, y), ratios, axis=1)
    return WindowedDataset(train, val, test, stats, dataset.node_ids)


def diffusion_operator(adjacency: np.ndarray) -> np.ndarray:
    """``0.5 I + 0.4 A_hat`` with ``A_hat`` the row-normalised neighbour weights.

    Self-weights are excluded from ``A_hat``; the identity term already
    carries each node's own state.
    """
    a = np.array(adjacency, dtype=np.float64)
    np.fill_diagonal(a, 0.0)
    a_hat = row_normalized(a)
    return SELF_COEF * np.eye(a_hat.shape[0]) + DIFFUSION_COEF * a_hat


def synthesize(graph: SensorGraph, T: int, noise: float = 1.0, seed: int = 0,
               amplitude: float = 1.0, period: int = 288, burn_in: int = 100,
               initial=None) -> SeriesDataset:
    """Graph-diffusion autoregressive series plus a shared daily sinusoid.

    ``s[t+1] = 0.5 s[t] + 0.4 A_hat s[t] + eps`` with ``A_hat`` the
    row-normalised neighbour adjacency and ``eps ~ N(0, noise^2)``. Readings are
    ``s[t] + amplitude * sin(2 pi t / period)``. ``burn_in`` steps are
    simulated and discarded first.
    """
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    op = diffusion_operator(graph.adjacency)
    s = rng.standard_normal(n) if initial is None else np.asarray(initial, dtype=np.float64).copy()
    for _ in range(burn_in):
        s = op @ s + noise * rng.standard_normal(n)
    out = np.empty((n, T))
    for t in range(T):
        out[:, t] = s
        s = op @ s + noise * rng.standard_normal(n)
    daily = amplitude * np.sin(2.0 * np.pi * np.arange(T) / period)
    return SeriesDataset(out + daily[None, :], graph.node_ids, tuple(range(T)))


def read_series_csv(path) -> SeriesDataset:
    """One column per node, one row per step; an optional leading ``timestamp`` column."""
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if len(rows) < 2:
        raise DegenerateInputError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    has_ts = header[0].lower() == "timestamp"
    ids = tuple(header[1:] if has_ts else header)
    body = rows[1:]
    ts = tuple(r[0] for r in body) if has_ts else None
    vals = np.array([[float(v) for v in (r[1:] if has_ts else r)] for r in body])
    if vals.shape[1] != len(ids):
        raise DimensionError(f"{path}: {vals.shape[1]} value columns for {len(ids)} node ids")
    return SeriesDataset(vals.T[..., None], ids, ts)


def write_series_csv(path, dataset: SeriesDataset) -> None:
    if dataset.readings.shape[2] != 1:
        raise DimensionError("CSV export supports one feature per node")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        with_ts = dataset.timestamps is not None
        w.writerow((["timestamp"] if with_ts else []) + list(dataset.node_ids))
        vals = dataset.readings[..., 0].T
        for t, row in enumerate(vals):
            w.writerow(([dataset.timestamps[t]] if with_ts else []) + [repr(float(v)) for v in row])
