"""Experiment harness: configs, runs, inductive evaluation, sweeps and the CLI."""
from .checkpoint import load_arrays, restore_run_state, save_arrays, save_run_state
from .config import ExperimentConfig, apply_overrides, load_config
from .presets import DESK_TRAINING, REFERENCE_TRAINING, desk_config
from .run import (INDUCTIVE_STRATEGIES, build_experiment, forecast_graph, run, run_inductive, run_sweep,
                  shared_node_params, sweep_cells, synthetic_network)

__all__ = ["load_arrays", "restore_run_state", "save_arrays", "save_run_state", "ExperimentConfig",
           "apply_overrides", "load_config", "INDUCTIVE_STRATEGIES", "build_experiment", "forecast_graph",
           "run", "run_inductive", "run_sweep", "shared_node_params", "sweep_cells", "synthetic_network",
           "DESK_TRAINING", "REFERENCE_TRAINING", "desk_config"]
