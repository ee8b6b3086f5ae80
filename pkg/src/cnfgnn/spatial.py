"""Server-side Graph Network: edge, node and global updates.

Incoming edges are summed per node; the global update averages over edges
and nodes.

Features carry a sample-batch axis ``B`` after the entity axis: node features
are ``(V, B, W_v)``, edge features ``(E, B, W_e)`` and globals ``(B, W_u)``.
A width of zero is allowed for globals and simply concatenates as nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import DimensionError, GraphConsistencyError
from .graphs import SensorGraph
from .numerics import Tensor

DEFAULT_MLP_HIDDEN = (256, 256, 128)


class MLP:
    """ReLU hidden layers, linear output."""

    def __init__(self, sizes, rng: np.random.Generator):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(max(fan_in, 1))
            self.weights.append(Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True))
            self.biases.append(Tensor(rng.uniform(-bound, bound, (fan_out,)), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.sizes[0]:
            raise DimensionError(f"MLP expects input width {self.sizes[0]}, got {x.shape}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = nx.matmul(x, w) + b
            if i < last:
                x = nx.relu(x)
        return x

    def parameters(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]


@dataclass
class GraphFeatures:
    nodes: Tensor
    edges: Tensor
    globals: Tensor
    senders: np.ndarray
    receivers: np.ndarray

    def __post_init__(self):
        n, e = self.nodes.shape[0], self.edges.shape[0]
        if len(self.senders) != e or len(self.receivers) != e:
            raise GraphConsistencyError(f"{e} edge rows but {len(self.senders)} senders / "
                                        f"{len(self.receivers)} receivers")
        for idx in (self.senders, self.receivers):
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise GraphConsistencyError(f"edge endpoint out of range for {n} nodes")


@dataclass
class GNLayerParams:
    """Update functions of one layer; ``global_mlp=None`` skips the global update."""
    edge_mlp: MLP
    node_mlp: MLP
    global_mlp: MLP | None = None

    def phi_e(self, e, v_r, v_s, u):
        return self.edge_mlp(nx.concat([e, v_r, v_s, u], axis=-1))

    def phi_v(self, e_agg, v, u):
        return self.node_mlp(nx.concat([e_agg, v, u], axis=-1))

    @property
    def phi_u(self):
        if self.global_mlp is None:
            return None
        return lambda e_bar, v_bar, u: self.global_mlp(nx.concat([e_bar, v_bar, u], axis=-1))

    def parameters(self) -> list[Tensor]:
        mlps = [self.edge_mlp, self.node_mlp] + ([self.global_mlp] if self.global_mlp else [])
        return [p for m in mlps for p in m.parameters()]


def _expand(t: Tensor, rows: int) -> Tensor:
    return nx.broadcast_to(t, (rows,) + t.shape)


def _sorted_mean(x: Tensor) -> Tensor:
    # empty sets give zeros, like the per-receiver sum
    return nx.sorted_sum(x) * (1.0 / max(x.shape[0], 1))


def gn_layer(f: GraphFeatures, p) -> GraphFeatures:
    """One synchronous GN block.

    ``p`` needs ``phi_e(e, v_r, v_s, u)``, ``phi_v(e_agg, v, u)`` and a
    ``phi_u(e_bar, v_bar, u)`` attribute that may be ``None``. All edge
    updates read the layer-input node features.

    Incoming edges are summed per receiver. The global update sees the mean
    over all edges and all nodes, so its inputs do not grow with graph size
    and a GN trained on a subgraph transfers to the full graph.
    """
    n_nodes, n_edges = f.nodes.shape[0], f.edges.shape[0]
    v_r = nx.take(f.nodes, f.receivers, axis=0)
    v_s = nx.take(f.nodes, f.senders, axis=0)
    e_new = p.phi_e(f.edges, v_r, v_s, _expand(f.globals, n_edges))
    e_agg = nx.segment_sum(e_new, f.receivers, n_nodes)
    v_new = p.phi_v(e_agg, f.nodes, _expand(f.globals, n_nodes))
    u_new = f.globals
    if p.phi_u is not None:
        e_bar = _sorted_mean(e_new)
        v_bar = _sorted_mean(v_new)
        u_new = p.phi_u(e_bar, v_bar, f.globals)
    return GraphFeatures(v_new, e_new, u_new, f.senders, f.receivers)


@dataclass
class GNParams:
    layers: list
    adapters: list = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        out = []
        for layer, adapter in zip(self.layers, self.adapters):
            out.extend(layer.parameters())
            if adapter is not None:
                out.append(adapter)
        return out

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for li, (layer, adapter) in enumerate(zip(self.layers, self.adapters)):
            for kind in ("edge", "node", "global"):
                mlp = getattr(layer, f"{kind}_mlp")
                if mlp is None:
                    continue
                for j, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
                    named.append((f"layer{li}.{kind}.{j}.w", w))
                    named.append((f"layer{li}.{kind}.{j}.b", b))
            if adapter is not None:
                named.append((f"layer{li}.adapter", adapter))
        return named


def init_gn_params(node_in: int, node_out: int, rng: np.random.Generator,
                   edge_width: int | None = None, global_width: int | None = None,
                   hidden=DEFAULT_MLP_HIDDEN, num_layers: int = 2) -> GNParams:
    """Stacked GN layers mapping ``node_in``-wide encodings to ``node_out`` embeddings.

    Input edges are scalar weights and the input global is empty. The last
    layer has no global update because nothing downstream reads it.
    """
    edge_width = node_out if edge_width is None else edge_width
    global_width = node_out if global_width is None else global_width
    hidden = tuple(hidden)
    layers, adapters = [], []
    we, wv, wu = 1, node_in, 0
    for li in range(num_layers):
        last = li == num_layers - 1
        edge = MLP((we + 2 * wv + wu,) + hidden + (edge_width,), rng)
        node = MLP((edge_width + wv + wu,) + hidden + (node_out,), rng)
        glob = None if last else MLP((edge_width + node_out + wu,) + hidden + (global_width,), rng)
        layers.append(GNLayerParams(edge, node, glob))
        if wv != node_out:
            bound = 1.0 / np.sqrt(wv)
            adapters.append(Tensor(rng.uniform(-bound, bound, (wv, node_out)), requires_grad=True))
        else:
            adapters.append(None)
        we, wv, wu = edge_width, node_out, (0 if last else global_width)
    return GNParams(layers, adapters)


def input_features(h_all: Tensor, g: SensorGraph) -> GraphFeatures:
    """Nodes carry temporal encodings, edges their adjacency weight, globals are empty."""
    batch = h_all.shape[1]
    e = np.broadcast_to(g.weights[:, None, None], (g.num_edges, batch, 1)).copy()
    return GraphFeatures(h_all, Tensor(e), Tensor(np.zeros((batch, 0))), g.senders, g.receivers)


def gn_forward(h_all, g: SensorGraph, params: GNParams) -> Tensor:
    """Per-node embeddings from a residual stack of GN layers.

    ``h_all`` is ``(V, H)`` or ``(V, B, H)``; the output keeps the same rank.
    """
    h_all = nx.as_tensor(h_all)
    squeeze = h_all.ndim == 2
    if squeeze:
        h_all = nx.reshape(h_all, (h_all.shape[0], 1, h_all.shape[1]))
    if h_all.shape[0] != g.num_nodes:
        raise GraphConsistencyError(f"{h_all.shape[0]} feature rows for a {g.num_nodes}-node graph")
    f = input_features(h_all, g)
    for layer, adapter in zip(params.layers, params.adapters):
        skip = f.nodes if adapter is None else nx.matmul(f.nodes, adapter)
        out = gn_layer(f, layer)
        out.nodes = out.nodes + skip
        f = out
    v = f.nodes
    if squeeze:
        v = nx.reshape(v, (v.shape[0], v.shape[2]))
    return v
