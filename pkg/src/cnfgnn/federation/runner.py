"""Global-round orchestration for every training strategy.

Each global round of ``at_fedavg`` runs four barrier-separated phases:

1. node models train locally for ``rounds_client`` epochs with their graph
   embeddings fixed, then the server averages them (FedAvg);
2. nodes upload temporal encodings of their training windows;
3. the server trains the GN for ``rounds_server`` rounds by exchanging
   embeddings and embedding gradients with the frozen nodes;
4. the server sends the final embeddings down.

The other strategies reuse the same pieces. Evaluation traffic is not
recorded: it does not belong to any training protocol being costed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..comms import SERVER, CommLedger, CostParams, reconcile
from ..errors import GraphConsistencyError, NumericFailure
from ..graphs import SensorGraph
from ..pipeline import WindowedDataset, rmse
from ..spatial import init_gn_params
from ..temporal import PARAM_ORDER, encode, init_node_params
from .aggregate import fedavg, fmtl_surrogate
from .clients import ClientPool, batches, frozen, send_each
from .config import ALTERNATING, AVERAGES, SPLIT, USES_GN, TrainingConfig
from .server import GNServer, server_train_gn

Hook = Callable[[str, int, "RunState"], None]


@dataclass
class RunState:
    config: TrainingConfig
    graph: SensorGraph
    pool: ClientPool
    server: GNServer | None
    ledger: CommLedger


@dataclass
class FederationResult:
    config: TrainingConfig
    state: RunState
    history: list = field(default_factory=list)
    best_round: int = 0
    val_rmse: float = float("nan")
    test_rmse: float = float("nan")
    rounds_run: int = 0

    @property
    def ledger(self) -> CommLedger:
        return self.state.ledger

    def cost_params(self, rounds: int | None = None) -> CostParams:
        pool = self.state.pool
        return CostParams(
            num_nodes=pool.num_nodes,
            node_weights_bytes=pool.weights_bytes(),
            hidden_state_bytes=pool.x.shape[1] * self.config.enc_hidden * 8,
            server_round=self.config.rounds_server,
            rounds=self.rounds_run if rounds is None else rounds,
            nonself_directed_edges=self.state.graph.num_nonself_edges,
        )

    def reconcile(self) -> dict:
        return reconcile(self.ledger, self.config.strategy, self.cost_params())


def init_models(cfg: TrainingConfig, input_dim: int, num_nodes: int):
    """Identical initial node weights for every strategy, derived from the seed."""
    node_rng = np.random.default_rng([cfg.seed, 0])
    gn_rng = np.random.default_rng([cfg.seed, 1])
    shared = cfg.strategy == "centralized"
    params = init_node_params(input_dim, cfg.enc_hidden, cfg.gn_hidden, node_rng,
                              num_nodes=1 if shared else num_nodes)
    gn = None
    if cfg.strategy in USES_GN:
        gn = init_gn_params(cfg.enc_hidden, cfg.gn_hidden, gn_rng, hidden=cfg.mlp_hidden,
                            num_layers=cfg.gn_layers)
    return params, gn


def average_nodes(pool: ClientPool, ledger: CommLedger | None, round: int) -> None:
    """FedAvg exchange: every node uploads, the server averages, every node downloads."""
    models = [pool.node_params(i) for i in range(pool.num_nodes)]
    for i, m in enumerate(models):
        if ledger is not None:
            ledger.send(i, SERVER, "fedavg_up", m, "parameters", round)
    avg = fedavg(models, pool.counts)
    for i in range(pool.num_nodes):
        if ledger is not None:
            ledger.send(SERVER, i, "fedavg_down", avg, "parameters", round)
    for k in PARAM_ORDER:
        pool.params[k].data = np.repeat(avg[k][None], pool.num_nodes, axis=0)
    pool.opt.reset()
    pool.version += 1


def exchange_weights(pool: ClientPool, graph: SensorGraph, ledger: CommLedger | None, round: int) -> dict:
    """Each node sends its weights along every outgoing non-self edge; returns the snapshot."""
    snap = {k: pool.params[k].data.copy() for k in PARAM_ORDER}
    if ledger is not None:
        for s, r in zip(graph.senders, graph.receivers):
            if s != r:
                ledger.send(int(s), int(r), "fmtl_exchange", pool.node_params(int(s)), "parameters", round)
    return snap


def _snapshot(state: RunState):
    nodes = {k: state.pool.params[k].data.copy() for k in PARAM_ORDER}
    return nodes, (state.server.snapshot() if state.server else None)


def _restore(state: RunState, snap) -> None:
    nodes, gn = snap
    for k in PARAM_ORDER:
        state.pool.params[k].data = nodes[k].copy()
    if gn is not None:
        state.server.restore(gn)


def run_strategy(cfg: TrainingConfig, data: WindowedDataset, graph: SensorGraph,
                 hooks: Hook | None = None, ledger: CommLedger | None = None) -> FederationResult:
    """Train with ``cfg.strategy`` and early stopping on validation RMSE.

    The returned state holds the weights of the best validation round.
    """
    cfg.validate()
    if graph.num_nodes != data.num_nodes or tuple(graph.node_ids) != tuple(data.node_ids):
        raise GraphConsistencyError("graph and dataset list different nodes")
    x, y = data.train
    params, gn = init_models(cfg, x.shape[-1], data.num_nodes)
    pool = ClientPool(params, x, y, cfg.optimizer, cfg.lr_client)
    server = GNServer(gn, graph, cfg.optimizer, cfg.lr_server) if gn is not None else None
    ledger = CommLedger() if ledger is None else ledger
    state = RunState(cfg, graph, pool, server, ledger)
    hook = hooks or (lambda *a: None)
    batch_rng = np.random.default_rng([cfg.seed, 2])
    server_rng = np.random.default_rng([cfg.seed, 3])
    strategy = cfg.strategy

    if strategy == "centralized":
        # pooled training: raw windows are gathered at the server
        for i in range(pool.num_nodes):
            ledger.send(i, SERVER, "raw_upload", {"x": x[i], "y": y[i]}, "raw", 0)

    result = FederationResult(cfg, state)
    best = evaluate(state, data.val, data.stats)
    result.history.append({"round": 0, "strategy": strategy, "val_rmse": best})
    best_snap, result.best_round = _snapshot(state), 0

    for r in range(1, cfg.rounds_global + 1):
        before = ledger.totals_by_phase()
        hook("round_start", r, state)
        record = {"round": r, "strategy": strategy}
        if strategy in SPLIT:
            record["train_loss"] = float(np.mean([
                pool.split_step(server, idx, None if strategy == "centralized" else ledger, r)
                for idx in batches(x.shape[1], cfg.batch_size, batch_rng)]))
            if strategy == "sl_fedavg":
                average_nodes(pool, ledger, r)
        else:
            reg = None
            if strategy == "fmtl":
                snap = exchange_weights(pool, graph, ledger, r)
                reg = lambda p: fmtl_surrogate(p, snap, graph.adjacency, cfg.lambda1)  # noqa: E731
            losses = [pool.local_epoch(batches(x.shape[1], cfg.batch_size, batch_rng), reg, r)
                      for _ in range(cfg.rounds_client)]
            record["train_loss"] = float(np.mean(losses))
            hook("phase1_local_end", r, state)
            if strategy in AVERAGES:
                average_nodes(pool, ledger, r)
            hook("phase1_end", r, state)
            if strategy in ALTERNATING:
                pool.encode_all(ledger, r)
                hook("phase2_end", r, state)
                record["server_loss"] = server_train_gn(server, pool, cfg.rounds_server, ledger, r,
                                                        cfg.server_batch_size, server_rng)
                hook("phase3_end", r, state)
                pool.h_g = server.embed(pool.h_c)
                send_each(ledger, "embed_down", "embedding", pool.h_g, r, up=False)
                hook("phase4_end", r, state)

        val = evaluate(state, data.val, data.stats)
        if not np.isfinite(val):
            raise NumericFailure(f"validation RMSE is {val}", round=r, phase="evaluate")
        after = ledger.totals_by_phase()
        record["val_rmse"] = val
        record["bytes"] = {k: after[k] - before.get(k, 0) for k in after if after[k] != before.get(k, 0)}
        record["bytes_total"] = sum(record["bytes"].values())
        result.history.append(record)
        result.rounds_run = r
        hook("round_end", r, state)
        if val < best:
            best, result.best_round, best_snap = val, r, _snapshot(state)
        elif r - result.best_round >= cfg.patience:
            break

    _restore(state, best_snap)
    result.val_rmse = best
    result.test_rmse = evaluate(state, data.test, data.stats)
    return result


def embeddings_for(state: RunState, x: np.ndarray) -> np.ndarray | None:
    if state.server is None:
        return None
    h_c = encode(x, frozen(state.pool.params)).data
    return state.server.embed(h_c)


def evaluate(state: RunState, split, stats) -> float:
    x, y = split
    pred = state.pool.forecast(x, embeddings_for(state, x))
    return rmse(pred, y, stats)
