"""Experiment configuration: JSON schema, defaults and flag overrides.

Schema (all keys optional except one dataset source)::

    {
      "dataset": {"csv": "readings.csv"}
               | {"synthetic": {"num_nodes": 20, "T": 2000, "noise": 1.0,
                                "amplitude": 2.0, "k_nearest": 5, "reach": 8.0}},
      "graph": {"distance_csv": "dist.csv", "nodes_csv": "nodes.csv", "kappa": 0.1},
      "training": {... TrainingConfig fields ...},
      "eta": 0.5,
      "sweep": {"rounds_client": [1, 10, 20], "rounds_server": [1, 10, 20]},
      "out": "runs",
      "seed": 0
    }

A CSV dataset needs ``graph.distance_csv``; a synthetic dataset builds its own
road network and only reads ``graph.kappa``. The top-level ``seed`` seeds both
the synthetic data and training.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..federation import TrainingConfig
from ..graphs import DEFAULT_KAPPA

SYNTHETIC_DEFAULTS = {"num_nodes": 20, "T": 2000, "noise": 1.0, "amplitude": 2.0,
                      "k_nearest": 5, "reach": 8.0}
TOP_KEYS = {"dataset", "graph", "training", "eta", "sweep", "out", "seed"}
GRAPH_KEYS = {"distance_csv", "nodes_csv", "kappa"}


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": dict(SYNTHETIC_DEFAULTS)})
    graph: dict = field(default_factory=lambda: {"kappa": DEFAULT_KAPPA})
    training: TrainingConfig = field(default_factory=TrainingConfig)
    eta: float | None = None
    sweep: dict | None = None
    out: str = "runs"
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.dataset, dict) or len(self.dataset) != 1 or \
                next(iter(self.dataset)) not in ("csv", "synthetic"):
            raise ConfigError("dataset must hold exactly one of 'csv' or 'synthetic'")
        if "synthetic" in self.dataset:
            spec = self.dataset["synthetic"]
            unknown = set(spec) - set(SYNTHETIC_DEFAULTS)
            if unknown:
                raise ConfigError(f"unknown synthetic dataset keys: {sorted(unknown)}")
            if int(spec.get("num_nodes", 1)) < 1 or int(spec.get("T", 1)) < 1:
                raise ConfigError("synthetic num_nodes and T must be positive")
        elif not self.graph.get("distance_csv"):
            raise ConfigError("a csv dataset needs graph.distance_csv")
        unknown = set(self.graph) - GRAPH_KEYS
        if unknown:
            raise ConfigError(f"unknown graph keys: {sorted(unknown)}")
        kappa = self.graph.get("kappa", DEFAULT_KAPPA)
        if not 0.0 <= kappa <= 1.0:
            raise ConfigError(f"graph.kappa must lie in [0, 1], got {kappa}")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if self.sweep is not None:
            if set(self.sweep) - {"rounds_client", "rounds_server"}:
                raise ConfigError("sweep accepts only rounds_client and rounds_server")
            for k in ("rounds_client", "rounds_server"):
                vals = self.sweep.get(k)
                if not vals or any(not isinstance(v, int) or v < 1 for v in vals):
                    raise ConfigError(f"sweep.{k} must be a nonempty list of positive integers")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        self.training.seed = self.seed
        self.training.validate()
        return self

    def to_dict(self) -> dict:
        return {"dataset": copy.deepcopy(self.dataset), "graph": dict(self.graph),
                "training": self.training.to_dict(), "eta": self.eta,
                "sweep": copy.deepcopy(self.sweep), "out": self.out, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        if "dataset" in d:
            ds = copy.deepcopy(d["dataset"])
            if isinstance(ds, dict) and isinstance(ds.get("synthetic"), dict):
                ds["synthetic"] = {**SYNTHETIC_DEFAULTS, **ds["synthetic"]}
            cfg.dataset = ds
        if "graph" in d:
            cfg.graph = {"kappa": DEFAULT_KAPPA, **d["graph"]}
        training = dict(d.get("training") or {})
        cfg.training = TrainingConfig.from_dict(training)
        cfg.eta = d.get("eta")
        cfg.sweep = copy.deepcopy(d.get("sweep"))
        cfg.out = d.get("out", cfg.out)
        cfg.seed = d.get("seed", training.get("seed", cfg.seed))
        return cfg

    def run_id(self) -> str:
        """Stable hash of everything that affects results (the output path excluded)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return ExperimentConfig.from_dict(raw)


def apply_overrides(cfg: ExperimentConfig, seed=None, out=None, strategy=None, eta=None,
                    rc=None, rs=None) -> ExperimentConfig:
    """Command-line values win over file values. ``rc``/``rs`` are ints or lists."""
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out = out
    if strategy is not None:
        cfg.training.strategy = strategy
    if eta is not None:
        cfg.eta = eta
    for key, val in (("rounds_client", rc), ("rounds_server", rs)):
        if val is None:
            continue
        vals = list(val) if isinstance(val, (list, tuple)) else [val]
        setattr(cfg.training, key, vals[0])
        if cfg.sweep is not None or len(vals) > 1:
            cfg.sweep = dict(cfg.sweep or {"rounds_client": [cfg.training.rounds_client],
                                           "rounds_server": [cfg.training.rounds_server]})
            cfg.sweep[key] = vals
    return cfg
