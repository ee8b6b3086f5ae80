"""Simulated nodes.

:class:`ClientPool` keeps every node's encoder-decoder stacked along a leading
node axis so that one batched forward/backward pass updates all nodes at
once. Node ``i`` only ever reads slice ``i`` of the data and its own
parameter slice, and the summed loss separates exactly into per-node
gradients, so this is arithmetically the same as running the nodes one by
one. Communication is recorded per node.

The single-node functions :func:`client_update`, :func:`client_encode` and
:func:`client_backward` wrap a one-node pool around a :class:`NodeState`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as nx
from ..comms import SERVER, CommLedger
from ..errors import DegenerateInputError, DimensionError, NumericFailure
from ..numerics import Tensor, make_optimizer
from ..temporal import PARAM_ORDER, decode, decoder_state, encode, predict, stacked_node_loss


def batches(n: int, batch_size: int | None, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Index batches covering ``range(n)`` once; shuffled when ``rng`` is given."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    if batch_size is None or batch_size >= n:
        return [order]
    return [order[k:k + batch_size] for k in range(0, n, batch_size)]


def send_each(ledger: CommLedger | None, phase: str, kind: str, arrays, round: int, up: bool) -> None:
    """One message per node carrying ``arrays[i]`` (node -> server if ``up``)."""
    if ledger is None:
        return
    for i in range(len(arrays)):
        src, dst = (i, SERVER) if up else (SERVER, i)
        ledger.send(src, dst, phase, arrays[i], kind, round)


def frozen(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """Constant views of the parameters, for passes that must not train them."""
    return {k: Tensor(v.data) for k, v in params.items()}


class ClientPool:
    def __init__(self, params: dict[str, Tensor], x: np.ndarray, y: np.ndarray,
                 optimizer: str = "adam", lr: float = 1e-3):
        if x.shape[1] == 0:
            raise DegenerateInputError("nodes hold no training windows")
        self.params = params
        self.x = x
        self.y = y
        self.opt = make_optimizer(optimizer, [params[k] for k in PARAM_ORDER], lr)
        self.h_g = np.zeros(x.shape[:2] + (params["dec.w_hh"].shape[-2] - params["enc.w_hh"].shape[-2],))
        self.h_c = None
        self.version = 0
        self.encoded_version = -1

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def counts(self) -> list[int]:
        return [self.x.shape[1]] * self.num_nodes

    @property
    def horizon(self) -> int:
        return self.y.shape[-2]

    @property
    def shared(self) -> bool:
        return self.params["out.w"].shape[0] != self.num_nodes

    def weights_bytes(self) -> int:
        """Bytes of one node's model."""
        v = self.params["out.w"].shape[0]
        return sum(p.size // v for p in self.params.values()) * 8

    def node_params(self, i: int) -> dict[str, np.ndarray]:
        j = 0 if self.shared else i
        return {k: self.params[k].data[j] for k in PARAM_ORDER}

    def _check(self, loss: Tensor, round: int, phase: str) -> float:
        val = loss.item()
        if not np.isfinite(val):
            raise NumericFailure(f"non-finite loss {val}", round=round, phase=phase)
        return val

    # -- phase 1 ---------------------------------------------------------
    def local_epoch(self, idx_batches, regularizer=None, round: int = 0) -> float:
        """One optimizer pass over the given batches with ``h_g`` held constant."""
        losses = []
        for idx in idx_batches:
            self.opt.zero_grad()
            pred = predict(self.x[:, idx], self.h_g[:, idx], self.params, self.horizon)
            loss = stacked_node_loss(pred, self.y[:, idx])
            losses.append(self._check(loss, round, "client_update") / self.num_nodes)
            if regularizer is not None:
                loss = loss + regularizer(self.params)
            loss.backward()
            self.opt.step()
            self.version += 1
        return float(np.mean(losses))

    # -- phase 2 ---------------------------------------------------------
    def encode_all(self, ledger: CommLedger | None = None, round: int = 0) -> np.ndarray:
        """Temporal encodings of every training window, uploaded once per node."""
        self.h_c = encode(self.x, frozen(self.params)).data
        self.encoded_version = self.version
        send_each(ledger, "encode_up", "encoding", self.h_c, round, up=True)
        return self.h_c

    @property
    def encodings_fresh(self) -> bool:
        return self.h_c is not None and self.encoded_version == self.version

    # -- phase 3 ---------------------------------------------------------
    def embedding_gradient(self, h_g: np.ndarray, idx, round: int = 0) -> tuple[np.ndarray, float]:
        """Gradient of each node's loss with respect to its embedding rows ``idx``.

        Node parameters are read but never updated.
        """
        if h_g.shape[:2] != (self.num_nodes, len(idx)):
            raise DimensionError(f"embeddings {h_g.shape} do not match {self.num_nodes} nodes x {len(idx)} rows")
        leaf = Tensor(h_g, requires_grad=True)
        params = frozen(self.params)
        state = decoder_state(Tensor(self.h_c[:, idx]), leaf)
        pred = decode(self.x[:, idx, -1], state, params, self.horizon)
        loss = stacked_node_loss(pred, self.y[:, idx])
        val = self._check(loss, round, "server_train")
        loss.backward()
        return leaf.grad, val / self.num_nodes

    # -- split learning ----------------------------------------------------
    def split_step(self, server, idx, ledger: CommLedger | None, round: int = 0) -> float:
        """One end-to-end batch: encodings forward, gradients back, both sides step."""
        self.opt.zero_grad()
        server.opt.zero_grad()
        h_c = encode(self.x[:, idx], self.params)
        send_each(ledger, "sl_forward", "encoding", h_c.data, round, up=True)
        h_c_srv = Tensor(h_c.data, requires_grad=True)
        h_g = server.forward(h_c_srv)
        send_each(ledger, "sl_forward", "embedding", h_g.data, round, up=False)
        h_g_cli = Tensor(h_g.data, requires_grad=True)
        pred = decode(self.x[:, idx, -1], decoder_state(h_c, h_g_cli), self.params, self.horizon)
        loss = stacked_node_loss(pred, self.y[:, idx])
        val = self._check(loss, round, "split_learning")
        loss.backward()
        send_each(ledger, "sl_backward", "gradient", h_g_cli.grad, round, up=True)
        nx.backward(h_g, h_g_cli.grad)
        send_each(ledger, "sl_backward", "gradient", h_c_srv.grad, round, up=False)
        nx.backward(h_c, h_c_srv.grad)
        self.opt.step()
        server.opt.step()
        self.version += 1
        return val / self.num_nodes

    # -- evaluation --------------------------------------------------------
    def forecast(self, x: np.ndarray, h_g: np.ndarray | None) -> np.ndarray:
        params = frozen(self.params)
        if h_g is None:
            hg_width = params["dec.w_hh"].shape[-2] - params["enc.w_hh"].shape[-2]
            h_g = np.zeros(x.shape[:2] + (hg_width,))
        return predict(x, h_g, params, self.horizon).data


# -- single-node operations ------------------------------------------------

@dataclass
class NodeState:
    """One node's private view: its model, its windows and cached vectors."""
    index: int
    params: dict
    x: np.ndarray
    y: np.ndarray
    h_c: np.ndarray | None = None
    h_g: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.x.shape[0]


def _pool_of(node: NodeState, optimizer="sgd", lr=1e-3) -> ClientPool:
    stacked = {k: Tensor(np.asarray(getattr(v, "data", v))[None], requires_grad=True)
               for k, v in node.params.items()}
    pool = ClientPool(stacked, node.x[None], node.y[None], optimizer, lr)
    if node.h_g is not None:
        pool.h_g = np.asarray(node.h_g)[None]
    if node.h_c is not None:
        pool.h_c = np.asarray(node.h_c)[None]
        pool.encoded_version = pool.version
    return pool


def _relabel(ledger, node: NodeState):
    """Ledger proxy that rewrites the pool's node index 0 to ``node.index``."""
    if ledger is None:
        return None

    class _Proxy:
        def send(self, src, dst, phase, payload, kind, round=0):
            fix = lambda e: node.index if e == 0 else e  # noqa: E731
            return ledger.send(fix(src), fix(dst), phase, payload, kind, round)

    return _Proxy()


def client_update(node: NodeState, rounds: int = 1, lr: float = 1e-3, optimizer: str = "sgd",
                  batch_size: int | None = None, rng=None) -> dict[str, np.ndarray]:
    """``rounds`` local passes with the node's graph embedding held constant."""
    if node.count == 0:
        raise DegenerateInputError(f"node {node.index} has no local data")
    pool = _pool_of(node, optimizer, lr)
    for _ in range(rounds):
        pool.local_epoch(batches(node.count, batch_size, rng))
    node.params = {k: pool.params[k].data[0].copy() for k in PARAM_ORDER}
    return node.params


def client_encode(node: NodeState, ledger: CommLedger | None = None, round: int = 0) -> np.ndarray:
    pool = _pool_of(node)
    node.h_c = pool.encode_all(_relabel(ledger, node), round)[0]
    return node.h_c


def client_backward(node: NodeState, h_g: np.ndarray, ledger: CommLedger | None = None,
                    round: int = 0) -> np.ndarray:
    """Receive ``h_g``, return the gradient of the node loss with respect to it."""
    if node.h_c is None:
        client_encode(node)
    pool = _pool_of(node)
    proxy = _relabel(ledger, node)
    h_g = np.asarray(h_g, dtype=np.float64)
    send_each(proxy, "embed_down", "embedding", h_g[None], round, up=False)
    grad, _ = pool.embedding_gradient(h_g[None], np.arange(node.count), round)
    send_each(proxy, "grad_up", "gradient", grad, round, up=True)
    return grad[0]
