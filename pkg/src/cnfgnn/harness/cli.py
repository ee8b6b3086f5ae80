"""Command-line entry point: ``cnfgnn {run,inductive,sweep,synth,validate-config}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import (CNFGNNError, ConfigError, DegenerateInputError, DimensionError,
                      GraphConsistencyError, NumericFailure)
from ..graphs import write_distance_csv, write_nodes_csv
from ..pipeline import write_series_csv
from .config import ExperimentConfig, apply_overrides, load_config
from .run import build_experiment, run, run_inductive, run_sweep, synthetic_network

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
# bad or inconsistent input is reported like a config error
INPUT_ERRORS = (ConfigError, DegenerateInputError, DimensionError, GraphConsistencyError,
                FileNotFoundError, ValueError)


def _int_list(text: str):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by commas, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals if len(vals) > 1 else vals[0]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cnfgnn", description="Cross-node federated GNN simulator")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "run": "train one strategy end to end",
        "inductive": "train on a longitude-ordered subgraph, evaluate on the full graph",
        "sweep": "one run per (R_c, R_s) grid cell",
        "synth": "write a synthetic dataset as CSV files",
        "validate-config": "check a config file and print it with defaults filled in",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="JSON experiment config")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--strategy")
        s.add_argument("--eta", type=float, help="visible share of sensors for inductive runs")
        s.add_argument("--rc", type=_int_list, help="client rounds; a comma list defines a sweep axis")
        s.add_argument("--rs", type=_int_list, help="server rounds; a comma list defines a sweep axis")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, seed=args.seed, out=args.out, strategy=args.strategy, eta=args.eta,
                          rc=args.rc, rs=args.rs)
    return cfg.validate()


def synth(cfg: ExperimentConfig) -> dict:
    if "synthetic" not in cfg.dataset:
        raise ConfigError("synth needs a synthetic dataset spec")
    graph, series = build_experiment(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(out / "readings.csv", series)
    _, dist = synthetic_network(cfg)
    write_distance_csv(out / "distances.csv", graph.node_ids, dist)
    write_nodes_csv(out / "nodes.csv", graph.node_ids, graph.coords)
    return {"readings": str(out / "readings.csv"), "distances": str(out / "distances.csv"),
            "nodes": str(out / "nodes.csv"), "num_nodes": graph.num_nodes, "T": series.length}


def _report(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=float))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "validate-config":
            _report(cfg.to_dict())
        elif args.command == "synth":
            _report(synth(cfg))
        elif args.command == "run":
            _report(run(cfg))
        elif args.command == "inductive":
            _report(run_inductive(cfg))
        elif args.command == "sweep":
            _report(run_sweep(cfg))
    except NumericFailure as e:
        print(f"numeric failure at round {e.round}, phase {e.phase}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except INPUT_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CNFGNNError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
