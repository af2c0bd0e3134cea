"""Experiment configuration: a strict YAML schema validated with pydantic.

Unknown keys are rejected. Validation errors are reported with the dotted
key path and, when the config came from a file, the line number.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..baselines import AdamConfig, SgdConfig
from ..driver import WeightRule
from ..inner_solver import LineSearchParams, SolverConfig
from ..schedule import SampleSizeSchedule, ToleranceSchedule

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "ScheduleConfig",
    "ToleranceConfig",
    "WeightsConfig",
    "SolverSection",
    "RASection",
    "BaselineSection",
    "EvalSection",
    "OutputSection",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "dump_config",
    "config_fingerprint",
    "with_override",
]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProblemConfig(_Strict):
    kind: Literal["least_squares", "logistic", "nonconvex", "csv"]
    dimension: int | None = Field(None, ge=1)
    n_samples: int | None = Field(None, ge=1)
    seed: int = 0
    condition_number: float | None = Field(None, ge=1)
    amplitude: float = Field(2.5, ge=0)
    frequency: float = 3.0
    noise: float = Field(1.0, ge=0)
    csv_path: str | None = None
    loss: Literal["least_squares", "logistic"] = "least_squares"

    @model_validator(mode="after")
    def _required(self):
        if self.kind == "csv":
            if not self.csv_path:
                raise ValueError("csv problems need csv_path")
        elif self.dimension is None:
            raise ValueError(f"{self.kind} problems need dimension")
        if self.kind in ("least_squares", "logistic") and self.n_samples is None:
            raise ValueError(f"{self.kind} problems need n_samples")
        return self


class ScheduleConfig(_Strict):
    kind: Literal["geometric", "polynomial_factor", "fixed_list"] = "polynomial_factor"
    m1: int = Field(2, ge=1)
    c1: float | None = None
    a: float = 7.0
    b: float = 1.7
    values: list[int] | None = None

    def build(self) -> SampleSizeSchedule:
        if self.kind == "geometric":
            return SampleSizeSchedule.geometric(self.c1 if self.c1 is not None else 2.0, self.m1)
        if self.kind == "polynomial_factor":
            return SampleSizeSchedule.polynomial_factor(self.a, self.b, self.m1)
        return SampleSizeSchedule.fixed_list(self.values or [])


class ToleranceConfig(_Strict):
    kind: Literal["deterministic", "adaptive"] = "adaptive"
    c2: float | None = None
    m_sigma: int | None = Field(None, ge=2)
    recompute_every: int = Field(1, ge=1)
    sigma_floor: float = Field(1e-10, ge=0)

    def build(self) -> ToleranceSchedule:
        if self.kind == "deterministic":
            return ToleranceSchedule.deterministic(self.c2)
        return ToleranceSchedule.adaptive(self.m_sigma, self.recompute_every, self.sigma_floor)


class WeightsConfig(_Strict):
    kind: Literal["last_iterate", "uniform", "custom"] = "last_iterate"
    values: list[float] | None = None

    def build(self) -> WeightRule:
        return WeightRule(self.kind, tuple(self.values or ()))


class SolverSection(_Strict):
    memory: int = Field(10, ge=1)
    c_armijo: float = Field(1e-4, gt=0, lt=1)
    backtrack_factor: float = Field(0.5, gt=0, lt=1)
    initial_step: float = Field(1.0, gt=0)
    max_backtracks: int = Field(50, ge=1)
    inner_cap: int | None = Field(None, ge=1)
    method: Literal["lbfgs", "gd"] = "lbfgs"
    line_search_gradients: bool = True

    def build(self) -> SolverConfig:
        ls = LineSearchParams(self.c_armijo, self.backtrack_factor, self.initial_step, self.max_backtracks)
        return SolverConfig(self.memory, ls, self.inner_cap, self.method, self.line_search_gradients)


class RASection(_Strict):
    outer_iterations: int = Field(10, ge=1)
    warm_start: bool = True
    carry_memory: bool = True
    sample_mode: Literal["fresh", "nested"] = "fresh"


class BaselineSection(_Strict):
    kind: Literal["sgd", "adam"] = "sgd"
    step_size: float | None = Field(None, gt=0)
    batch_size: int = Field(32, ge=1)
    total_steps: int = Field(1000, ge=1)
    eval_cadence: int = Field(50, ge=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps_hat: float = Field(1e-8, gt=0)

    def build(self) -> SgdConfig | AdamConfig:
        if self.kind == "sgd":
            return SgdConfig(self.step_size or 0.01, self.batch_size, self.total_steps)
        return AdamConfig(self.step_size or 0.001, self.beta1, self.beta2, self.eps_hat,
                          self.batch_size, self.total_steps)


class EvalSection(_Strict):
    samples: int = Field(10_000, ge=1)
    seed: int | None = None


class OutputSection(_Strict):
    wall_time: bool = False


class ExperimentConfig(_Strict):
    problem: ProblemConfig
    algorithm: Literal["ra", "baseline"] = "ra"
    schedule: ScheduleConfig = ScheduleConfig()
    tolerance: ToleranceConfig = ToleranceConfig()
    weights: WeightsConfig = WeightsConfig()
    solver: SolverSection = SolverSection()
    ra: RASection = RASection()
    baseline: BaselineSection = BaselineSection()
    eval: EvalSection = EvalSection()
    output: OutputSection = OutputSection()
    replications: int = Field(3, ge=1)
    base_seed: int = 0
    output_dir: str = "runs"
    x0: Literal["zeros"] | list[float] = "zeros"
    workers: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        if self.algorithm == "ra":
            # construct once so schedule/tolerance errors surface at parse time
            self.schedule.build()
            self.tolerance.build()
            self.weights.build()
        return self

    def seed_for(self, replication: int) -> int:
        return self.base_seed + replication

    @property
    def algorithm_name(self) -> str:
        return "ra" if self.algorithm == "ra" else self.baseline.kind


def _node_line(root, loc) -> int | None:
    node = root
    line = None
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for key, value in node.value:
                if key.value == part:
                    line = key.start_mark.line + 1
                    nxt = value
                    break
            if nxt is None:
                return line
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _format_errors(exc: ValidationError, root=None, source="config") -> str:
    lines = []
    for err in exc.errors():
        loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p.startswith(("function-", "literal["))))
        key = ".".join(str(p) for p in loc) or "<root>"
        where = ""
        if root is not None:
            ln = _node_line(root, loc)
            if ln is not None:
                where = f" (line {ln})"
        lines.append(f"{source}: {key}{where}: {err['msg']}")
    return "\n".join(lines)


def parse_config(data: dict, *, source: str = "config", _root=None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, _root, source)) from None


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment file."""
    path = Path(path)
    text = path.read_text()
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data or {}, source=str(path), _root=root)


def dump_config(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


def config_fingerprint(cfg: ExperimentConfig) -> str:
    text = json.dumps(dump_config(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def with_override(cfg: ExperimentConfig, key: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with the dotted ``key`` set to ``value`` (revalidated)."""
    data = dump_config(cfg)
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = value
    return parse_config(data, source=f"override {key}")
