"""Training hyperparameters and strategy names."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError

STRATEGIES = ("centralized", "local", "fedavg_only", "sl", "sl_fedavg",
              "at_no_fedavg", "at_fedavg", "fmtl")
FEDERATED = tuple(s for s in STRATEGIES if s != "centralized")
USES_GN = ("centralized", "sl", "sl_fedavg", "at_no_fedavg", "at_fedavg")
AVERAGES = ("fedavg_only", "sl_fedavg", "at_fedavg")
ALTERNATING = ("at_no_fedavg", "at_fedavg")
SPLIT = ("sl", "sl_fedavg", "centralized")


@dataclass
class TrainingConfig:
    strategy: str = "at_fedavg"
    rounds_global: int = 20
    rounds_client: int = 1
    rounds_server: int = 1
    lr_client: float = 1e-3
    lr_server: float = 1e-3
    lambda1: float = 0.1
    seed: int = 0
    batch_size: int = 64
    server_batch_size: int | None = None  # None: one full-batch step per server round
    optimizer: str = "adam"
    enc_hidden: int = 64
    gn_hidden: int = 64
    mlp_hidden: tuple = field(default=(256, 256, 128))
    gn_layers: int = 2
    patience: int = 10

    def __post_init__(self):
        self.mlp_hidden = tuple(int(h) for h in self.mlp_hidden)

    def validate(self) -> "TrainingConfig":
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        for name in ("rounds_global", "rounds_client", "rounds_server", "batch_size",
                     "enc_hidden", "gn_hidden", "gn_layers", "patience"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.server_batch_size is not None and self.server_batch_size < 1:
            raise ConfigError("server_batch_size must be positive or null")
        for name in ("lr_client", "lr_server"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda1 < 0:
            raise ConfigError("lambda1 must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if any(h < 1 for h in self.mlp_hidden):
            raise ConfigError("mlp_hidden sizes must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training fields: {sorted(unknown)}")
        return cls(**d)
