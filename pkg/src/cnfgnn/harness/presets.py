"""Named configurations.

``desk`` sizes finish a 20-node, T=2000 run in well under a minute on one CPU
core. ``reference`` sizes are the large-scale model widths (64-unit GRUs, a
256-256-128 MLP stack) and are far slower in this pure-numpy implementation.
"""
from __future__ import annotations

from ..federation import TrainingConfig
from .config import SYNTHETIC_DEFAULTS, ExperimentConfig

DESK_TRAINING = dict(rounds_global=12, enc_hidden=8, gn_hidden=8, mlp_hidden=(16, 16),
                     batch_size=128, server_batch_size=128, lr_client=0.005, lr_server=0.005)
REFERENCE_TRAINING = dict(rounds_global=100, enc_hidden=64, gn_hidden=64, mlp_hidden=(256, 256, 128),
                          batch_size=64, lr_client=1e-3, lr_server=1e-3)


def desk_config(strategy: str = "at_fedavg", seed: int = 0, dataset: dict | None = None,
                **training) -> ExperimentConfig:
    """A validated desk-scale experiment; keyword arguments override training fields."""
    t = {**DESK_TRAINING, "strategy": strategy, "seed": seed, **training}
    cfg = ExperimentConfig(dataset={"synthetic": {**SYNTHETIC_DEFAULTS, **(dataset or {})}},
                           training=TrainingConfig(**t), seed=seed)
    return cfg.validate()
