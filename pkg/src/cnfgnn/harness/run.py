"""End-to-end experiment drivers: plain runs, inductive runs and (R_c, R_s) sweeps."""
from __future__ import annotations

import copy
import csv
import json
import time
from pathlib import Path

import numpy as np

from ..comms import CostParams, NoFormulaError, analytic_total
from ..errors import ConfigError, ContractError, DegenerateInputError, GraphConsistencyError
from ..federation import GNServer, run_strategy
from ..graphs import SensorGraph, build_adjacency, load_graph, subgraph_by_longitude, synthetic_road_network
from ..numerics import Tensor
from ..pipeline import SeriesDataset, prepare, read_series_csv, rmse, synthesize
from ..temporal import PARAM_ORDER, encode, predict
from .checkpoint import save_run_state
from .config import ExperimentConfig

# strategies whose node model is one shared set of weights and so transfers to unseen nodes
INDUCTIVE_STRATEGIES = ("centralized", "fedavg_only", "sl_fedavg", "at_fedavg")


def synthetic_network(cfg: ExperimentConfig) -> tuple[SensorGraph, np.ndarray]:
    """Seeded road network for a synthetic dataset; returns the graph and road distances."""
    spec = cfg.dataset["synthetic"]
    ids, coords, dist = synthetic_road_network(int(spec["num_nodes"]), seed=cfg.seed,
                                               k_nearest=int(spec["k_nearest"]), reach=float(spec["reach"]))
    if len(ids) == 1:
        return SensorGraph.from_adjacency(np.ones((1, 1)), ids, coords), dist
    return build_adjacency(dist, cfg.graph.get("kappa", 0.1), ids, coords), dist


def build_experiment(cfg: ExperimentConfig) -> tuple[SensorGraph, SeriesDataset]:
    """Load or generate the graph and the raw series, in matching node order."""
    kappa = cfg.graph.get("kappa", 0.1)
    if "synthetic" in cfg.dataset:
        spec = cfg.dataset["synthetic"]
        graph, _ = synthetic_network(cfg)
        series = synthesize(graph, int(spec["T"]), noise=float(spec["noise"]), seed=cfg.seed,
                            amplitude=float(spec["amplitude"]))
        return graph, series
    graph = load_graph(cfg.graph["distance_csv"], cfg.graph.get("nodes_csv"), kappa)
    series = read_series_csv(cfg.dataset["csv"])
    if set(series.node_ids) != set(graph.node_ids):
        raise GraphConsistencyError("series columns and graph nodes differ")
    pos = {n: i for i, n in enumerate(series.node_ids)}
    return graph, series.select_nodes([pos[n] for n in graph.node_ids])


def _prepare_out(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("metrics.jsonl", "timings.jsonl"):
        (out / name).unlink(missing_ok=True)
    return out


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _analytic(strategy: str, p: CostParams):
    try:
        return analytic_total(strategy, p)
    except NoFormulaError:
        return None


def _train(cfg: ExperimentConfig, graph, series, out: Path, run_id: str):
    """Shared core of ``run`` and ``run_inductive``: train, persist, summarise."""
    data = prepare(series)
    _dump(out / "config.json", cfg.to_dict())
    clock = {}

    def hook(event, r, state):
        if event == "round_start":
            clock[r] = time.perf_counter()
        elif event == "round_end":
            with open(out / "timings.jsonl", "a") as f:
                f.write(json.dumps({"round": r, "wall_clock_s": time.perf_counter() - clock[r]}) + "\n")

    res = run_strategy(cfg.training, data, graph, hooks=hook)
    ledger = res.ledger
    with open(out / "metrics.jsonl", "w") as f:
        for rec in res.history:
            r = rec["round"]
            bytes_ = rec.get("bytes", ledger.totals_by_phase(round=0) if r == 0 else {})
            row = {"run_id": run_id, "strategy": rec["strategy"], "round": r, "split": "val",
                   "rmse": rec["val_rmse"], "bytes": bytes_, "bytes_total": sum(bytes_.values())}
            f.write(json.dumps(row, sort_keys=True) + "\n")
    ledger.to_csv(out / "ledger.csv")
    ledger.to_json(out / "ledger.json")
    save_run_state(out / "checkpoint", res.state)

    rec = res.reconcile()
    at_best = res.cost_params(rounds=res.best_round)
    summary = {
        "run_id": run_id,
        "strategy": cfg.training.strategy,
        "seed": cfg.seed,
        "num_nodes": graph.num_nodes,
        "rounds_run": res.rounds_run,
        "best_round": res.best_round,
        "val_rmse": res.val_rmse,
        "test_rmse": res.test_rmse,
        "comm": {
            "ledger_total_bytes": rec["ledger_total"],
            "by_phase": rec["by_phase"],
            "analytic_total_bytes": rec["analytic_total"],
            "analytic_matches_ledger": rec["match"],
            "per_round_checks_ok": all(c["ok"] for c in rec["checks"]),
            "analytic_total_bytes_at_best_round": _analytic(cfg.training.strategy, at_best),
            "cost_params": {k: getattr(at_best, k) for k in
                            ("num_nodes", "node_weights_bytes", "hidden_state_bytes", "server_round",
                             "nonself_directed_edges")},
        },
    }
    return res, data, summary


def run(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Train one strategy and write metrics, ledger, checkpoints and a summary."""
    cfg.validate()
    run_id = cfg.run_id()
    out = _prepare_out(out_dir or Path(cfg.out) / run_id)
    graph, series = build_experiment(cfg)
    _, _, summary = _train(cfg, graph, series, out, run_id)
    _dump(out / "summary.json", summary)
    summary["out_dir"] = str(out)
    return summary


def shared_node_params(pool_params: dict, num_nodes: int) -> dict:
    """Broadcast a shared node model to ``num_nodes`` rows.

    Raises if the trained rows differ, i.e. the strategy kept personalised models.
    """
    out = {}
    for k in PARAM_ORDER:
        stacked = pool_params[k].data
        row = stacked[0]
        if not (stacked == row[None]).all():
            raise ContractError(f"node models differ in {k}; no shared model to transfer")
        out[k] = Tensor(np.repeat(row[None], num_nodes, axis=0))
    return out


def forecast_graph(state, graph: SensorGraph, x: np.ndarray) -> np.ndarray:
    """Apply the trained shared node model and GN to every node of ``graph``."""
    params = shared_node_params(state.pool.params, graph.num_nodes)
    h_g = None
    if state.server is not None:
        h_c = encode(x, params).data
        h_g = GNServer(state.server.gn, graph).embed(h_c)
    if h_g is None:
        width = params["dec.w_hh"].shape[-2] - params["enc.w_hh"].shape[-2]
        h_g = np.zeros(x.shape[:2] + (width,))
    return predict(x, h_g, params, state.pool.horizon).data


def run_inductive(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Train on the westernmost ``eta`` share of sensors, evaluate on all of them.

    Normalisation statistics come from the visible nodes only. Unseen nodes
    reuse the shared node model; the GN runs over the full graph.
    """
    cfg.validate()
    eta = 1.0 if cfg.eta is None else cfg.eta
    if cfg.training.strategy not in INDUCTIVE_STRATEGIES:
        raise ConfigError(f"inductive runs need a shared node model; use one of {INDUCTIVE_STRATEGIES}")
    run_id = cfg.run_id()
    out = _prepare_out(out_dir or Path(cfg.out) / f"{run_id}-inductive")
    graph, series = build_experiment(cfg)
    sub, keep = subgraph_by_longitude(graph, eta)
    if len(keep) < 2:
        raise DegenerateInputError(f"eta={eta} keeps {len(keep)} of {graph.num_nodes} nodes; need at least 2")
    res, sub_data, summary = _train(cfg, sub, series.select_nodes(keep), out, run_id)

    full = prepare(series, stats=sub_data.stats)
    seen = np.zeros(graph.num_nodes, dtype=bool)
    seen[keep] = True
    result = {}
    for split in ("val", "test"):
        x, y = getattr(full, split)
        pred = forecast_graph(res.state, graph, x)
        result[split] = {
            "full_rmse": rmse(pred, y, full.stats),
            "seen_rmse": rmse(pred[seen], y[seen], full.stats),
            "unseen_rmse": rmse(pred[~seen], y[~seen], full.stats) if (~seen).any() else None,
        }
    summary["inductive"] = {"eta": eta, "visible_nodes": [graph.node_ids[i] for i in keep],
                            "num_visible": len(keep), "num_total": graph.num_nodes,
                            "evaluated_nodes": graph.num_nodes, **result}
    _dump(out / "summary.json", summary)
    summary["out_dir"] = str(out)
    return summary


def sweep_cells(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    grid = cfg.sweep or {"rounds_client": [cfg.training.rounds_client],
                         "rounds_server": [cfg.training.rounds_server]}
    if not grid["rounds_client"] or not grid["rounds_server"]:
        raise ConfigError("sweep grid is empty")
    return [(rc, rs) for rc in grid["rounds_client"] for rs in grid["rounds_server"]]


def run_sweep(cfg: ExperimentConfig, out_dir=None, fixed_rounds: bool = True) -> list[dict]:
    """One run per (R_c, R_s) cell with a shared seed.

    With ``fixed_rounds`` every cell runs exactly ``rounds_global`` rounds so
    communication totals compare at equal round counts.
    """
    cfg.validate()
    cells = sweep_cells(cfg)
    out = Path(out_dir or Path(cfg.out) / f"{cfg.run_id()}-sweep")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rc, rs in cells:
        cell = copy.deepcopy(cfg)
        cell.sweep = None
        cell.training.rounds_client, cell.training.rounds_server = rc, rs
        if fixed_rounds:
            cell.training.patience = cell.training.rounds_global + 1
        s = run(cell, out / f"rc{rc}_rs{rs}")
        rows.append({"rounds_client": rc, "rounds_server": rs, "ratio": rc / rs,
                     "val_rmse": s["val_rmse"], "test_rmse": s["test_rmse"],
                     "rounds_run": s["rounds_run"], "best_round": s["best_round"],
                     "comm_bytes": s["comm"]["ledger_total_bytes"], "run_id": s["run_id"]})
    _dump(out / "sweep.json", rows)
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return rows
