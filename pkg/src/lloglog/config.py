"""Run configuration shared by the command line and the sweeps."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .surface import SurfaceMeasure

FORMAT_VERSION = "1"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    exponents: list = field(default_factory=lambda: [1.0, 2.0])
    surface: str = "parabola:b=2"
    n_work: int = 6
    n: int = 3
    beta: float = 1.0
    alphas: list = None
    k_range: list = None
    c: float = None
    gamma: float = 0.5
    seeds: list = field(default_factory=lambda: [0])
    output: str = "out"
    workers: int = 1

    def validate(self) -> "RunConfig":
        if not self.exponents or any(float(p) <= 0 for p in self.exponents):
            raise ConfigError("exponents must be a nonempty list of positive numbers")
        if int(self.n_work) < 1:
            raise ConfigError("n_work must be at least 1")
        if int(self.n) < 0:
            raise ConfigError("content level n must be nonnegative")
        if float(self.beta) <= 0:
            raise ConfigError("beta must be positive")
        if self.alphas is not None and any(float(a) <= 0 for a in self.alphas):
            raise ConfigError("alphas must be positive")
        if self.k_range is not None:
            if len(self.k_range) != 2 or int(self.k_range[0]) > int(self.k_range[1]):
                raise ConfigError("k_range must be [k_min, k_max] with k_min <= k_max")
        if self.c is not None and not 0 < float(self.c) < 0.5:
            raise ConfigError("c must lie in (0, 1/2)")
        if not 0 < float(self.gamma) <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        try:
            SurfaceMeasure.parse(self.surface)
        except ValueError as e:
            raise ConfigError(f"bad surface spec {self.surface!r}: {e}") from e
        return self

    def surface_measure(self) -> SurfaceMeasure:
        return SurfaceMeasure.parse(self.surface)

    def to_dict(self) -> dict:
        return {"version": FORMAT_VERSION, **asdict(self)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        d = dict(d)
        d.pop("version", None)
        known = set(RunConfig.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return RunConfig(**d).validate()

    @staticmethod
    def load(path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return RunConfig.from_dict(data)
