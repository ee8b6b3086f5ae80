import csv
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnfgnn.comms import (SERVER, CommLedger, CostParams, Message, analytic_total, payload_nbytes,
                          per_round_gn_cost, reconcile)
from cnfgnn.errors import ContractError, NoFormulaError


def test_empty_ledger():
    assert CommLedger().total() == 0


def test_two_messages():
    led = CommLedger()
    led.record(Message(0, SERVER, "encode_up", 100, kind="encoding"))
    led.record(Message(SERVER, 0, "embed_down", 24, kind="embedding"))
    assert led.total() == 124
    assert led.total("encode_up") == 100


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 10**12), min_size=1, max_size=12), st.randoms())
def test_totals_ignore_recording_order(sizes, rnd):
    msgs = [Message(i, SERVER, "grad_up", s, kind="gradient") for i, s in enumerate(sizes)]
    a, b = CommLedger(), CommLedger()
    for m in msgs:
        a.record(m)
    shuffled = msgs[:]
    rnd.shuffle(shuffled)
    for m in shuffled:
        b.record(m)
    assert a.total() == b.total() == sum(sizes)
    assert isinstance(a.total(), int)


def test_closed_ledger_rejects_records():
    led = CommLedger()
    led.close()
    with pytest.raises(ContractError):
        led.record(Message(0, SERVER, "grad_up", 8, kind="gradient"))


@pytest.mark.parametrize("src,dst,phase,kind", [
    (SERVER, 0, "encode_up", "encoding"),
    (0, SERVER, "embed_down", "embedding"),
    (0, 0, "fmtl_exchange", "parameters"),
    (0, SERVER, "grad_up", "parameters"),
    (0, SERVER, "teleport", "gradient"),
])
def test_message_validation(src, dst, phase, kind):
    with pytest.raises(ContractError):
        Message(src, dst, phase, 8, kind=kind)


def test_payload_bytes_are_element_count_times_eight():
    assert payload_nbytes(np.zeros((3, 4))) == 96
    assert payload_nbytes({"a": np.zeros(2), "b": np.zeros((1, 5))}) == 56


def test_per_round_costs():
    assert per_round_gn_cost("at", 7, 3.0, 1) == per_round_gn_cost("sl", 7, 3.0) == 84.0
    assert math.isclose(per_round_gn_cost("at", 325, 2.173e-3, 20), 2.1 * 325 * 2.173e-3, rel_tol=1e-12)
    assert round(per_round_gn_cost("at", 325, 2.173e-3, 20), 3) == 1.483
    assert round(per_round_gn_cost("sl", 325, 2.173e-3), 3) == 2.825


def test_fmtl_table_value():
    p = CostParams(num_nodes=325, node_weights_bytes=2.347e-4, rounds=104, nonself_directed_edges=2369)
    assert abs(analytic_total("fmtl", p) - 57.823) / 57.823 < 1e-3


def test_sl_formula_value():
    p = CostParams(num_nodes=325, hidden_state_bytes=2.173e-3, rounds=31)
    assert math.isclose(analytic_total("sl", p), 31 * 4 * 325 * 2.173e-3, rel_tol=1e-12)
    assert round(analytic_total("sl", p), 2) == 87.57


@pytest.mark.parametrize("strategy", ["fmtl", "at_fedavg", "sl", "sl_fedavg", "at_no_fedavg"])
def test_zero_rounds_cost_nothing(strategy):
    p = CostParams(num_nodes=5, node_weights_bytes=10, hidden_state_bytes=3, server_round=4,
                   rounds=0, nonself_directed_edges=7)
    assert analytic_total(strategy, p) == 0


@pytest.mark.parametrize("strategy", ["centralized", "local", "fedavg_only"])
def test_no_formula(strategy):
    with pytest.raises(NoFormulaError):
        analytic_total(strategy, CostParams(num_nodes=3))


def test_cost_params_nonnegative():
    with pytest.raises(ContractError):
        CostParams(num_nodes=-1)


def _at_round(led, v, w, s, rs, r):
    for i in range(v):
        led.send(i, SERVER, "fedavg_up", np.zeros(w), "parameters", r)
        led.send(SERVER, i, "fedavg_down", np.zeros(w), "parameters", r)
        led.send(i, SERVER, "encode_up", np.zeros(s), "encoding", r)
    for _, i in itertools.product(range(rs), range(v)):
        led.send(SERVER, i, "embed_down", np.zeros(s), "embedding", r)
        led.send(i, SERVER, "grad_up", np.zeros(s), "gradient", r)
    for i in range(v):
        led.send(SERVER, i, "embed_down", np.zeros(s), "embedding", r)


def test_reconcile_alternating_schedule():
    v, w, s, rs = 3, 11, 5, 4
    led = CommLedger()
    for r in (1, 2):
        _at_round(led, v, w, s, rs, r)
    p = CostParams(num_nodes=v, node_weights_bytes=8 * w, hidden_state_bytes=8 * s, server_round=rs, rounds=2)
    rep = reconcile(led, "at_fedavg", p)
    assert rep["match"] and all(c["ok"] for c in rep["checks"])
    assert rep["ledger_total"] == 2 * (2 * v * 8 * w + (2 + 2 * rs) * v * 8 * s)


def test_reconcile_local_is_zero():
    rep = reconcile(CommLedger(), "local", CostParams(num_nodes=4))
    assert rep["ledger_total"] == 0 and rep["analytic_total"] is None


def test_exports(tmp_path):
    led = CommLedger()
    _at_round(led, 2, 3, 2, 1, 1)
    led.to_csv(tmp_path / "l.csv")
    rows = list(csv.reader(open(tmp_path / "l.csv")))
    assert rows[0] == ["round", "phase", "src", "dst", "bytes"]
    assert sum(int(r[4]) for r in rows[1:]) == led.total()
    led.to_json(tmp_path / "l.json")
    summary = json.loads((tmp_path / "l.json").read_text())
    assert summary["total_bytes"] == led.total() == sum(summary["by_phase"].values())


def test_observers_see_payloads():
    led = CommLedger()
    seen = []
    led.observers.append(lambda m, p: seen.append((m.phase, p.shape)))
    led.send(0, SERVER, "encode_up", np.zeros((2, 3)), "encoding")
    assert seen == [("encode_up", (2, 3))]
