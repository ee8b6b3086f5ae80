"""Protocol audit: no raw node data may leave a node."""
from __future__ import annotations

import numpy as np

from ..comms import CommLedger, Message


class IsolationAudit:
    """Ledger observer flagging messages that carry raw windows.

    A message is flagged when it is tagged ``raw`` or when any payload array
    equals one of the node's raw input or target arrays.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.raw = [a for i in range(x.shape[0]) for a in (x[i], y[i])]
        self.violations: list[Message] = []
        self.checked = 0

    def attach(self, ledger: CommLedger) -> "IsolationAudit":
        ledger.observers.append(self)
        return self

    def __call__(self, msg: Message, payload) -> None:
        self.checked += 1
        if msg.kind == "raw" or any(self._is_raw(a) for a in _arrays(payload)):
            self.violations.append(msg)

    def _is_raw(self, a) -> bool:
        return any(a.shape == r.shape and np.array_equal(a, r) for r in self.raw)


def _arrays(payload):
    if isinstance(payload, dict):
        for v in payload.values():
            yield from _arrays(v)
    elif isinstance(payload, (list, tuple)):
        for v in payload:
            yield from _arrays(v)
    elif payload is not None:
        yield np.asarray(getattr(payload, "data", payload))
