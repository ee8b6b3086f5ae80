"""Byte-exact ledger of simulated traffic and the analytic cost formulas.

Payload sizes are element counts times 8 (float64) with no framing
overhead. Endpoints are ``"server"`` or an integer node index.
"""
from __future__ import annotations

import csv
import json
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, NoFormulaError

BYTES_PER_ELEMENT = 8
SERVER = "server"

# phase -> (allowed direction, allowed payload kinds)
PHASES = {
    "fedavg_down": ("down", {"parameters"}),
    "fedavg_up": ("up", {"parameters"}),
    "encode_up": ("up", {"encoding"}),
    "embed_down": ("down", {"embedding"}),
    "grad_up": ("up", {"gradient"}),
    "sl_forward": ("any", {"encoding", "embedding"}),
    "sl_backward": ("any", {"gradient"}),
    "fmtl_exchange": ("peer", {"parameters"}),
    "raw_upload": ("up", {"raw"}),  # only the non-federated centralized baseline
}
PAYLOAD_KINDS = ("parameters", "encoding", "embedding", "gradient", "raw")


def payload_nbytes(payload) -> int:
    """Bytes of an array, or of a dict/list of arrays."""
    if isinstance(payload, dict):
        return sum(payload_nbytes(v) for v in payload.values())
    if isinstance(payload, (list, tuple)):
        return sum(payload_nbytes(v) for v in payload)
    return int(np.size(getattr(payload, "data", payload))) * BYTES_PER_ELEMENT


def _direction(src, dst) -> str:
    if src == SERVER and dst != SERVER:
        return "down"
    if dst == SERVER and src != SERVER:
        return "up"
    if src != SERVER and dst != SERVER and src != dst:
        return "peer"
    return "invalid"


@dataclass(frozen=True)
class Message:
    src: object
    dst: object
    phase: str
    payload_bytes: int
    round: int = 0
    kind: str = "parameters"

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ContractError(f"unknown phase {self.phase!r}")
        if self.kind not in PAYLOAD_KINDS:
            raise ContractError(f"unknown payload kind {self.kind!r}")
        if int(self.payload_bytes) <= 0:
            raise ContractError("payload_bytes must be positive")
        want, kinds = PHASES[self.phase]
        got = _direction(self.src, self.dst)
        if got == "invalid" or (want != "any" and want != got) or (want == "any" and got == "peer"):
            raise ContractError(f"phase {self.phase} cannot travel {self.src!r} -> {self.dst!r}")
        if self.kind != "raw" and self.kind not in kinds:
            raise ContractError(f"phase {self.phase} does not carry {self.kind} payloads")


class CommLedger:
    """Append-only message log.

    ``observers`` are called as ``observer(message, payload)`` on every
    record; protocol audits hook in here to inspect actual payload arrays.
    """

    def __init__(self):
        self._messages: list[Message] = []
        self._lock = threading.Lock()
        self.closed = False
        self.observers = []

    def record(self, msg: Message, payload=None) -> None:
        if self.closed:
            raise ContractError("ledger is closed")
        with self._lock:
            self._messages.append(msg)
        for obs in self.observers:
            obs(msg, payload)

    def send(self, src, dst, phase: str, payload, kind: str, round: int = 0) -> Message:
        msg = Message(src, dst, phase, payload_nbytes(payload), round, kind)
        self.record(msg, payload)
        return msg

    def close(self) -> None:
        self.closed = True

    @property
    def messages(self) -> tuple:
        return tuple(self._messages)

    def __len__(self) -> int:
        return len(self._messages)

    def total(self, phase=None, round=None) -> int:
        """Exact integer byte sum, optionally filtered by phase(s) and round."""
        phases = {phase} if isinstance(phase, str) else (set(phase) if phase is not None else None)
        return sum(m.payload_bytes for m in self._messages
                   if (phases is None or m.phase in phases) and (round is None or m.round == round))

    def totals_by_phase(self, round=None) -> dict[str, int]:
        out = defaultdict(int)
        for m in self._messages:
            if round is None or m.round == round:
                out[m.phase] += m.payload_bytes
        return dict(sorted(out.items()))

    def count(self, phase=None) -> int:
        return sum(1 for m in self._messages if phase is None or m.phase == phase)

    def raw_messages(self) -> list[Message]:
        return [m for m in self._messages if m.kind == "raw"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["round", "phase", "src", "dst", "bytes"])
            for m in self._messages:
                w.writerow([m.round, m.phase, m.src, m.dst, m.payload_bytes])

    def summary(self) -> dict:
        rounds = sorted({m.round for m in self._messages})
        return {
            "total_bytes": self.total(),
            "messages": len(self._messages),
            "by_phase": self.totals_by_phase(),
            "by_round": {str(r): self.total(round=r) for r in rounds},
        }

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)


# -- analytic formulas -------------------------------------------------

@dataclass
class CostParams:
    """Inputs to the closed-form costs; any consistent unit (bytes, GB)."""
    num_nodes: float
    node_weights_bytes: float = 0
    hidden_state_bytes: float = 0
    server_round: int = 1
    rounds: float = 1
    nonself_directed_edges: float = 0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ContractError(f"{k} must be non-negative")


def per_round_gn_cost(mode: str, num_nodes, hidden_state_bytes, server_round: int = 1):
    """Traffic per GN training round: split learning vs alternating training."""
    if mode == "sl":
        return 4 * num_nodes * hidden_state_bytes
    if mode == "at":
        return (2 + 2 * server_round) / server_round * num_nodes * hidden_state_bytes
    raise ContractError(f"mode must be 'sl' or 'at', got {mode!r}")


def analytic_total(strategy: str, p: CostParams):
    r, v, w, s = p.rounds, p.num_nodes, p.node_weights_bytes, p.hidden_state_bytes
    if strategy == "fmtl":
        return r * p.nonself_directed_edges * w
    if strategy == "at_fedavg":
        return r * (v * w * 2 + (1 + 2 * p.server_round + 1) * v * s)
    if strategy == "sl":
        return r * 2 * 2 * v * s
    if strategy == "sl_fedavg":
        return r * (v * w * 2 + 2 * 2 * v * s)
    if strategy == "at_no_fedavg":
        return r * (1 + 2 * p.server_round + 1) * v * s
    raise NoFormulaError(f"no communication-cost formula for strategy {strategy!r}")


def reconcile(ledger: CommLedger, strategy: str, p: CostParams) -> dict:
    """Compare ledger totals with the closed-form cost and per-round structure.

    ``p`` must be expressed in bytes with the run's actual payload sizes;
    ``p.rounds`` is the number of global rounds executed.
    """
    total = ledger.total()
    try:
        expected = analytic_total(strategy, p)
    except NoFormulaError:
        expected = None
    checks = []
    rounds = sorted({m.round for m in ledger.messages})
    v, w, s = p.num_nodes, p.node_weights_bytes, p.hidden_state_bytes
    for r in rounds:
        by = ledger.totals_by_phase(round=r)
        if strategy in ("at_fedavg", "sl_fedavg", "fedavg_only"):
            checks.append(("fedavg", r, 2 * v * w, by.get("fedavg_down", 0) + by.get("fedavg_up", 0)))
        if strategy in ("at_fedavg", "at_no_fedavg"):
            checks.append(("encode_up", r, v * s, by.get("encode_up", 0)))
            checks.append(("server_rounds", r, 2 * p.server_round * v * s,
                           by.get("grad_up", 0) + by.get("embed_down", 0) - v * s))
        if strategy in ("sl", "sl_fedavg"):
            checks.append(("split_learning", r, 4 * v * s,
                           by.get("sl_forward", 0) + by.get("sl_backward", 0)))
        if strategy == "fmtl":
            checks.append(("fmtl_exchange", r, p.nonself_directed_edges * w, by.get("fmtl_exchange", 0)))
    return {
        "strategy": strategy,
        "ledger_total": total,
        "analytic_total": expected,
        "match": None if expected is None else expected == total,
        "by_phase": ledger.totals_by_phase(),
        "checks": [{"name": n, "round": r, "expected": e, "actual": a, "ok": e == a}
                   for n, r, e, a in checks],
    }
