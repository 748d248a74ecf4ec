"""Run configuration: TOML file format, validation and canonical form.

Example::

    [system]
    n = 14
    mu = 1.0

    [arrival]
    kind = "poisson"
    rate = 10.0

    [retrial]
    kind = "poisson"
    rate = 2.0

    [simulation]
    horizon = 10000.0
    replications = 30
    seed = 1

    [search]
    alpha = 0.0001
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .engine import SystemConfig
from .processes import PointProcessSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProcessSection(_Section):
    kind: Literal["poisson", "deterministic", "renewal"] = "poisson"
    rate: float = Field(ge=0)
    distribution: Literal["uniform", "gamma"] | None = None
    shape: float | None = Field(default=None, gt=0)
    proposal_rate: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _valid_spec(self):
        self.to_spec()
        return self

    def to_spec(self) -> PointProcessSpec:
        return PointProcessSpec(self.kind, self.rate, self.distribution, self.shape, self.proposal_rate)


class SystemSection(_Section):
    n: int = Field(default=1, ge=1)
    mu: float = Field(default=1.0, gt=0)


class SimulationSection(_Section):
    horizon: float | None = Field(default=None, gt=0)
    arrivals: int | None = Field(default=None, ge=1)
    warmup: float | None = Field(default=None, ge=0)
    replications: int = Field(default=30, ge=1)
    seed: int = 0
    estimator: Literal["sdn8", "sdn9", "sdn10", "all"] = "all"
    empirical_rate: bool = False
    confidence: float = Field(default=0.95, gt=0, lt=1)
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _one_horizon(self):
        if self.horizon is None and self.arrivals is None:
            self.horizon = 10_000.0
        if self.horizon is not None and self.arrivals is not None:
            raise ValueError("give either horizon or arrivals, not both")
        if self.horizon is not None and self.warmup is not None and self.warmup >= self.horizon:
            raise ValueError("empty measurement window")
        return self


class SearchSection(_Section):
    alpha: float = Field(default=1e-4, gt=0, le=1)
    n_lower: int = Field(default=1, ge=1)
    n_upper: int | None = Field(default=None, ge=1)
    n_min: int | None = Field(default=None, ge=0)
    n_max: int | None = Field(default=None, ge=0)
    estimator: Literal["sdn8", "sdn9", "sdn10"] = "sdn10"
    max_effort: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.n_upper is not None and self.n_upper < self.n_lower:
            raise ValueError("n_upper must be >= n_lower")
        if self.n_min is not None and self.n_max is not None and self.n_max < self.n_min:
            raise ValueError("n_max must be >= n_min")
        return self


class RunConfig(_Section):
    system: SystemSection = SystemSection()
    arrival: ProcessSection
    retrial: ProcessSection
    simulation: SimulationSection = SimulationSection()
    search: SearchSection = SearchSection()

    def system_config(self, n: int | None = None) -> SystemConfig:
        sim = self.simulation
        return SystemConfig(
            n=self.system.n if n is None else n,
            mu=self.system.mu,
            arrival=self.arrival.to_spec(),
            retrial=self.retrial.to_spec(),
            horizon=sim.horizon,
            arrival_budget=sim.arrivals,
            warmup=sim.warmup,
            seed=sim.seed,
            replications=sim.replications,
        )

    def n_values(self) -> list[int]:
        lo = self.search.n_min if self.search.n_min is not None else self.system.n
        hi = self.search.n_max if self.search.n_max is not None else lo
        return list(range(lo, hi + 1))

    @property
    def markovian(self) -> bool:
        return self.arrival.kind == "poisson" and self.retrial.kind == "poisson"


def parse_config(text: str) -> RunConfig:
    return RunConfig.model_validate(tomllib.loads(text))


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def canonical(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True)


def dump_config(cfg: RunConfig) -> str:
    """Canonical TOML: every section present, defaults resolved, unset values omitted."""
    return tomli_w.dumps(canonical(cfg))


OVERRIDES = {
    "n": ("system", "n"),
    "alpha": ("search", "alpha"),
    "seed": ("simulation", "seed"),
    "replications": ("simulation", "replications"),
    "horizon": ("simulation", "horizon"),
    "arrivals": ("simulation", "arrivals"),
    "warmup": ("simulation", "warmup"),
    "estimator": ("simulation", "estimator"),
    "threads": ("simulation", "threads"),
    "proposal_rate": ("arrival", "proposal_rate"),
    "n_min": ("search", "n_min"),
    "n_max": ("search", "n_max"),
}


def apply_overrides(cfg: RunConfig, **values) -> RunConfig:
    data = canonical(cfg)
    for key, value in values.items():
        if value is None:
            continue
        section, field = OVERRIDES[key]
        data.setdefault(section, {})[field] = value
        if key == "horizon":
            data["simulation"].pop("arrivals", None)
        elif key == "arrivals":
            data["simulation"].pop("horizon", None)
    return RunConfig.model_validate(data)
