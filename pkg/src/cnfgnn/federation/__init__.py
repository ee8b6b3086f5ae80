"""Federated training strategies over simulated nodes and a GN server."""
from .aggregate import fedavg, fmtl_regularizer, fmtl_surrogate, neighbour_weights
from .audit import IsolationAudit
from .clients import (ClientPool, NodeState, batches, client_backward, client_encode,
                      client_update, frozen)
from .config import FEDERATED, STRATEGIES, TrainingConfig
from .runner import FederationResult, RunState, average_nodes, evaluate, run_strategy
from .server import GNServer, server_train_gn

__all__ = [
    "ClientPool", "FEDERATED", "FederationResult", "GNServer", "IsolationAudit", "NodeState",
    "RunState", "STRATEGIES", "TrainingConfig", "average_nodes", "batches", "client_backward",
    "client_encode", "client_update", "evaluate", "fedavg", "fmtl_regularizer", "fmtl_surrogate",
    "frozen", "neighbour_weights", "run_strategy", "server_train_gn",
]
