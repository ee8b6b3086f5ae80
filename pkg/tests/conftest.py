import numpy as np
import pytest

from cnfgnn.federation import TrainingConfig
from cnfgnn.graphs import build_adjacency, synthetic_road_network
from cnfgnn.pipeline import prepare, synthesize


def tiny_problem(num_nodes=5, T=160, seed=0):
    ids, coords, dist = synthetic_road_network(num_nodes, seed=seed)
    if num_nodes == 1:
        from cnfgnn.graphs import SensorGraph
        g = SensorGraph.from_adjacency(np.ones((1, 1)), ids, coords)
    else:
        g = build_adjacency(dist, 0.1, ids, coords)
    return g, prepare(synthesize(g, T, seed=seed))


def tiny_config(strategy="at_fedavg", **kw):
    base = dict(strategy=strategy, rounds_global=2, rounds_server=2, enc_hidden=4, gn_hidden=4,
                mlp_hidden=(8,), batch_size=32, lr_client=0.01, lr_server=0.01)
    base.update(kw)
    return TrainingConfig(**base)


@pytest.fixture
def problem():
    return tiny_problem()


# -- acceptance report ------------------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line each in the terminal summary.

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "notes": []})
    if call.excinfo is not None:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {call.excinfo.typename}")
    for key, value in item.user_properties:
        if key == "detail":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(dict.fromkeys(e["notes"]))
        terminalreporter.write_line(f"criterion {n:2d} {status}  {e['title']}" + (f"  [{notes}]" if notes else ""))
