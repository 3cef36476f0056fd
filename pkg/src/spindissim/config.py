"""Run configuration: YAML file <-> :class:`RunConfig`, validation and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .lattice import ConfigurationError

SCHEMA_VERSION = 1

# Fields that do not change results and are left out of the config hash.
_NOT_HASHED = {"workers", "out", "checkpoint_every"}


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    L: int = 8
    beta: float = 1.0
    mode: str = "discrete"
    gamma: float = 1.0
    rounds: int = 50
    record_every: int = 1
    t_max: float = 10.0
    n_times: int = 41
    grid: str = "geometric"
    t_first: float | None = None
    replicas: int = 100
    samples_per_chain: int = 50
    warmup: int | None = None
    sample_sweeps: int = 2
    initial: str = "thermal"
    initial_file: str | None = None
    sector: int | None = None
    staggered: list = field(default_factory=lambda: ["Ms2", "Ms4"])
    momenta: list = field(default_factory=list)
    ms_convention: str = "S3"
    sq_convention: str = "sigma"
    n_bins: int = 20
    stream_replicas: bool = False
    seed: int = 0
    workers: int = 1
    out: str = "out"
    checkpoint_every: int = 1
    # oracle only
    oracle_lattice: list = field(default_factory=lambda: [2, 2])
    n_traj: int = 10000
    # thermal command
    samples: int = 1000

    def __post_init__(self):
        for name in ("beta", "gamma", "t_max"):
            v = getattr(self, name)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                setattr(self, name, float(v))
        if isinstance(self.t_first, int) and not isinstance(self.t_first, bool):
            self.t_first = float(self.t_first)
        self.momenta = [list(k) for k in self.momenta]

    def validate(self) -> "RunConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {self.schema_version}")
        if not isinstance(self.L, int) or self.L < 2 or self.L % 2:
            raise ConfigurationError(f"L must be an even integer >= 2, got {self.L!r}")
        if self.mode not in ("discrete", "continuous"):
            raise ConfigurationError(f"mode must be discrete or continuous, got {self.mode!r}")
        if not self.gamma >= 0:
            raise ConfigurationError("gamma must be non-negative")
        if self.beta < 0:
            raise ConfigurationError("beta must be non-negative")
        if self.replicas < 1 or self.samples_per_chain < 1:
            raise ConfigurationError("replicas and samples_per_chain must be >= 1")
        if self.rounds < 0 or self.t_max < 0 or self.n_times < 1:
            raise ConfigurationError("time range must be non-negative")
        if self.grid not in ("geometric", "linear"):
            raise ConfigurationError("grid must be geometric or linear")
        if self.initial not in ("thermal", "neel", "random", "steady", "file"):
            raise ConfigurationError(f"unknown initial state {self.initial!r}")
        if self.initial == "thermal" and self.beta <= 0:
            raise ConfigurationError("thermal initial states need beta > 0; use initial: random")
        if self.initial == "steady" and self.sector is None:
            raise ConfigurationError("initial: steady needs a sector")
        if self.initial == "file" and not self.initial_file:
            raise ConfigurationError("initial: file needs initial_file")
        for k in self.momenta:
            if len(k) != 2:
                raise ConfigurationError(f"momentum {k!r} must be a pair of integers")
        for name in self.staggered:
            if name not in ("Ms", "Ms2", "Ms4"):
                raise ConfigurationError(f"unknown staggered observable {name!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a key-value mapping")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data or {})

    def hash(self) -> str:
        """SHA-256 of the canonical JSON of all result-relevant fields."""
        d = {k: v for k, v in self.to_dict().items() if k not in _NOT_HASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def n_chains(self) -> int:
        return -(-self.replicas // self.samples_per_chain)
