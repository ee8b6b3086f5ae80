"""Sensor graphs: Gaussian-kernel adjacency, longitude subgraphs, CSV I/O.

Adjacency convention: ``adjacency[r, s]`` is the weight of the directed edge
from sender ``s`` to receiver ``r``. Edge arrays list ``(senders[k],
receivers[k], weights[k])`` and always agree with the nonzero pattern of the
adjacency matrix.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import DegenerateInputError, DimensionError, GraphConsistencyError

DEFAULT_KAPPA = 0.1


@dataclass(frozen=True, eq=False)
class SensorGraph:
    node_ids: tuple
    adjacency: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    weights: np.ndarray
    coords: np.ndarray | None = field(default=None)

    def __post_init__(self):
        n = len(self.node_ids)
        if self.adjacency.shape != (n, n):
            raise GraphConsistencyError(f"adjacency {self.adjacency.shape} does not match {n} nodes")
        if not (len(self.senders) == len(self.receivers) == len(self.weights)):
            raise GraphConsistencyError("edge arrays differ in length")
        if len(self.senders) and (self.senders.min() < 0 or self.receivers.min() < 0
                                  or max(self.senders.max(), self.receivers.max()) >= n):
            raise GraphConsistencyError("edge index out of range")
        if self.coords is not None and self.coords.shape != (n, 2):
            raise GraphConsistencyError(f"coords must be ({n}, 2), got {self.coords.shape}")
        if np.count_nonzero(self.adjacency) != len(self.weights) or (
                len(self.weights) and not np.array_equal(self.adjacency[self.receivers, self.senders], self.weights)):
            raise GraphConsistencyError("edge list and adjacency disagree")

    @classmethod
    def from_adjacency(cls, adjacency, node_ids=None, coords=None) -> "SensorGraph":
        """Build with edges in row-major (receiver, sender) order."""
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise DimensionError(f"adjacency must be square, got {adjacency.shape}")
        n = adjacency.shape[0]
        recv, send = np.nonzero(adjacency)
        ids = tuple(node_ids) if node_ids is not None else tuple(str(i) for i in range(n))
        return cls(ids, adjacency, send.astype(np.intp), recv.astype(np.intp),
                   adjacency[recv, send], None if coords is None else np.asarray(coords, dtype=np.float64))

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.weights)

    @property
    def num_nonself_edges(self) -> int:
        return int(np.count_nonzero(self.senders != self.receivers))

    def permute(self, perm) -> "SensorGraph":
        """Relabel nodes so new node ``j`` is old node ``perm[j]``.

        The edge list keeps its order; only indices are rewritten.
        """
        perm = np.asarray(perm, dtype=np.intp)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return SensorGraph(tuple(self.node_ids[i] for i in perm), self.adjacency[np.ix_(perm, perm)],
                           inv[self.senders], inv[self.receivers], self.weights.copy(),
                           None if self.coords is None else self.coords[perm])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SensorGraph):
            return NotImplemented
        same_coords = (self.coords is None and other.coords is None) or (
            self.coords is not None and other.coords is not None and np.array_equal(self.coords, other.coords))
        return (self.node_ids == other.node_ids and np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.senders, other.senders)
                and np.array_equal(self.receivers, other.receivers)
                and np.array_equal(self.weights, other.weights) and same_coords)

    __hash__ = None


def kernel_sigma(dist: np.ndarray) -> float:
    """Population std of the finite off-diagonal distances."""
    off = ~np.eye(dist.shape[0], dtype=bool)
    vals = dist[off]
    vals = vals[np.isfinite(vals)]
    return float(np.std(vals)) if vals.size else float("nan")


def build_adjacency(dist, kappa: float = DEFAULT_KAPPA, node_ids=None, coords=None) -> SensorGraph:
    """Thresholded Gaussian kernel ``exp(-dist^2 / sigma^2)`` over road distances.

    Entries below ``kappa`` are dropped. ``inf`` marks unreachable pairs.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise DimensionError(f"distance matrix must be square, got {dist.shape}")
    if np.isnan(dist).any() or (dist < 0).any():
        raise DegenerateInputError("distances must be non-negative and not NaN")
    if not 0.0 <= kappa <= 1.0:
        raise DegenerateInputError(f"kappa must lie in [0, 1], got {kappa}")
    n = dist.shape[0]
    sigma = kernel_sigma(dist)
    if n > 1 and not np.isnan(sigma) and sigma == 0.0:
        raise DegenerateInputError("all distances are equal; kernel width is zero")
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.isnan(sigma):
            # no finite off-diagonal pairs: only zero distances produce weight 1
            d = np.where(dist == 0.0, 1.0, 0.0)
        else:
            d = np.exp(-np.square(dist) / sigma ** 2)
    w = np.where(d >= kappa, d, 0.0)
    return SensorGraph.from_adjacency(w, node_ids, coords)


def subgraph_by_longitude(g: SensorGraph, eta: float) -> tuple[SensorGraph, np.ndarray]:
    """Induced subgraph on the ``floor(eta * |V|)`` westernmost sensors.

    Returns the subgraph and ``index_map`` with ``index_map[j]`` = original
    index of sub-node ``j``. Kept nodes retain their original relative order.
    """
    if g.coords is None:
        raise DegenerateInputError("subgraph_by_longitude needs node coordinates")
    if not 0.0 < eta <= 1.0:
        raise DegenerateInputError(f"eta must lie in (0, 1], got {eta}")
    n = g.num_nodes
    k = math.floor(eta * n + 1e-9)
    if k == 0:
        raise DegenerateInputError(f"eta={eta} keeps no nodes out of {n}")
    order = np.argsort(g.coords[:, 0], kind="stable")
    keep = np.sort(order[:k])
    remap = np.full(n, -1, dtype=np.intp)
    remap[keep] = np.arange(k)
    mask = (remap[g.senders] >= 0) & (remap[g.receivers] >= 0)
    sub = SensorGraph(tuple(g.node_ids[i] for i in keep), g.adjacency[np.ix_(keep, keep)],
                      remap[g.senders[mask]], remap[g.receivers[mask]], g.weights[mask],
                      g.coords[keep])
    return sub, keep


def row_normalized(adjacency: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; all-zero rows stay zero."""
    s = adjacency.sum(axis=1, keepdims=True)
    return np.divide(adjacency, s, out=np.zeros_like(adjacency), where=s != 0)


# -- synthetic road networks -------------------------------------------

def synthetic_road_network(num_nodes: int, seed: int = 0, k_nearest: int = 3,
                           reach: float = 4.0, bbox=(-118.5, -118.0, 34.0, 34.3)):
    """Random sensors joined by a k-nearest-neighbour road network.

    Returns ``(node_ids, coords, dist)`` where ``dist`` holds shortest-path
    road distances (km-like units) and ``inf`` for pairs farther apart than
    ``reach`` times the median road-segment length, mimicking distance tables
    that list only nearby sensor pairs.
    """
    rng = np.random.default_rng(seed)
    lon = rng.uniform(bbox[0], bbox[1], num_nodes)
    lat = rng.uniform(bbox[2], bbox[3], num_nodes)
    coords = np.stack([lon, lat], axis=1)
    km = coords * np.array([92.0, 111.0])
    euclid = np.linalg.norm(km[:, None, :] - km[None, :, :], axis=-1)
    if num_nodes == 1:
        return ("s0",), coords, np.zeros((1, 1))
    k = min(k_nearest, num_nodes - 1)
    nbrs = np.argsort(euclid, axis=1, kind="stable")[:, 1:k + 1]
    road = np.zeros_like(euclid)
    rows = np.repeat(np.arange(num_nodes), k)
    road[rows, nbrs.ravel()] = euclid[rows, nbrs.ravel()]
    road = np.maximum(road, road.T)
    dist = shortest_path(csr_matrix(road), method="D", directed=False)
    seg = np.median(road[road > 0])
    dist[dist > reach * seg] = np.inf
    np.fill_diagonal(dist, 0.0)
    ids = tuple(f"s{i}" for i in range(num_nodes))
    return ids, coords, dist


# -- CSV I/O -----------------------------------------------------------

def read_distance_csv(path) -> tuple[tuple, np.ndarray]:
    """Header row of node ids followed by a square numeric body."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DegenerateInputError(f"{path}: empty distance file")
    ids = tuple(s.strip() for s in rows[0])
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    if body.shape != (len(ids), len(ids)):
        raise DimensionError(f"{path}: expected {len(ids)}x{len(ids)} body, got {body.shape}")
    return ids, body


def write_distance_csv(path, node_ids, dist) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(node_ids)
        for row in np.asarray(dist):
            w.writerow([repr(float(v)) for v in row])


def read_nodes_csv(path) -> tuple[tuple, np.ndarray]:
    """Columns ``id, longitude, latitude`` with a header row."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        recs = [(r["id"].strip(), float(r["longitude"]), float(r["latitude"])) for r in reader]
    return tuple(r[0] for r in recs), np.array([[r[1], r[2]] for r in recs]).reshape(-1, 2)


def write_nodes_csv(path, node_ids, coords) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "longitude", "latitude"])
        for nid, (lon, lat) in zip(node_ids, coords):
            w.writerow([nid, repr(float(lon)), repr(float(lat))])


def load_graph(distance_path, nodes_path=None, kappa: float = DEFAULT_KAPPA) -> SensorGraph:
    ids, dist = read_distance_csv(distance_path)
    coords = None
    if nodes_path is not None:
        nids, c = read_nodes_csv(nodes_path)
        lookup = dict(zip(nids, c))
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise GraphConsistencyError(f"node table lacks coordinates for {missing[:5]}")
        coords = np.array([lookup[i] for i in ids])
    return build_adjacency(dist, kappa, ids, coords)


def export_edges_csv(g: SensorGraph, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sender", "receiver", "weight"])
        for s, r, wt in zip(g.senders, g.receivers, g.weights):
            w.writerow([g.node_ids[s], g.node_ids[r], repr(float(wt))])
