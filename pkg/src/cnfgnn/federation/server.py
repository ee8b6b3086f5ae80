"""The server's Graph Network and its split-learning training loop."""
from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..comms import CommLedger
from ..errors import ContractError, ProtocolError
from ..graphs import SensorGraph
from ..numerics import Tensor, make_optimizer
from ..spatial import GNParams, gn_forward
from .clients import ClientPool, batches, send_each


class GNServer:
    def __init__(self, gn: GNParams, graph: SensorGraph, optimizer: str = "adam", lr: float = 1e-3):
        self.gn = gn
        self.graph = graph
        self.opt = make_optimizer(optimizer, gn.parameters(), lr)

    def forward(self, h_c) -> Tensor:
        return gn_forward(h_c, self.graph, self.gn)

    def embed(self, h_c: np.ndarray) -> np.ndarray:
        """Embeddings without retaining a graph for backpropagation."""
        params = self.gn.parameters()
        for p in params:
            p.requires_grad = False
        try:
            return self.forward(Tensor(h_c)).data
        finally:
            for p in params:
                p.requires_grad = True

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.gn.parameters()]

    def restore(self, snap) -> None:
        for p, d in zip(self.gn.parameters(), snap):
            p.data = d.copy()


def server_train_gn(server: GNServer, pool: ClientPool, rounds: int, ledger: CommLedger | None = None,
                    round: int = 0, batch_size: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Train the GN for ``rounds`` server rounds on cached encodings.

    Each round sends embeddings down, collects the nodes' embedding
    gradients, backpropagates their sum through the GN and steps. Node models
    stay frozen and the encodings stay fixed. With ``batch_size`` a round is
    one pass over shuffled minibatches; traffic per round is unchanged.
    """
    if rounds < 1:
        raise ContractError("server rounds must be at least 1")
    if not pool.encodings_fresh:
        raise ProtocolError("server training needs encodings uploaded after the latest client update")
    h_c = pool.h_c
    losses = []
    for _ in range(rounds):
        for idx in batches(h_c.shape[1], batch_size, rng if batch_size else None):
            server.opt.zero_grad()
            h_g = server.forward(Tensor(h_c[:, idx]))
            send_each(ledger, "embed_down", "embedding", h_g.data, round, up=False)
            grads, loss = pool.embedding_gradient(h_g.data, idx, round)
            send_each(ledger, "grad_up", "gradient", grads, round, up=True)
            nx.backward(h_g, grads)
            server.opt.step()
            losses.append(loss)
    return float(np.mean(losses))
