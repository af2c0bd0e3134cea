"""Replicated experiments, parameter sweeps and self-checks."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..baselines import AdamConfig, run_adam, run_sgd
from ..driver import RunTrace, run_ra, verify_tolerance_certificate
from ..oracle import (
    LeastSquaresOracle,
    LogisticOracle,
    SampleId,
    StochasticOracle,
    gradient_check,
    make_least_squares,
    make_logistic,
    make_nonconvex_test,
)
from ..sample_path import resolve_workers
from ..schedule import check_summability
from .config import ExperimentConfig, config_fingerprint, dump_config, with_override
from .traces import aggregate_records, dumps_json, trace_to_csv

__all__ = [
    "build_oracle",
    "initial_point",
    "run_replication",
    "ExperimentResult",
    "run_experiment",
    "sweep",
    "CheckItem",
    "CheckReport",
    "self_check",
]

log = logging.getLogger(__name__)


def build_oracle(cfg: ExperimentConfig) -> StochasticOracle:
    p = cfg.problem
    if p.kind == "least_squares":
        return make_least_squares(p.dimension, p.n_samples, p.seed, p.condition_number)
    if p.kind == "logistic":
        return make_logistic(p.dimension, p.n_samples, p.seed)
    if p.kind == "nonconvex":
        return make_nonconvex_test(p.dimension, p.seed, p.amplitude, p.frequency, p.noise)
    cls = LeastSquaresOracle if p.loss == "least_squares" else LogisticOracle
    return cls.from_csv(p.csv_path)


def initial_point(cfg: ExperimentConfig, oracle: StochasticOracle) -> np.ndarray:
    if cfg.x0 == "zeros":
        return np.zeros(oracle.dimension)
    return oracle.check_point(cfg.x0)


def run_replication(cfg: ExperimentConfig, replication: int, oracle: StochasticOracle | None = None) -> RunTrace:
    oracle = oracle if oracle is not None else build_oracle(cfg)
    x0 = initial_point(cfg, oracle)
    seed = cfg.seed_for(replication)
    common = dict(
        eval_samples=cfg.eval.samples,
        eval_seed=cfg.eval.seed,
        workers=cfg.workers,
        record_wall_time=cfg.output.wall_time,
        config_fingerprint=config_fingerprint(cfg),
    )
    if cfg.algorithm == "ra":
        return run_ra(
            oracle, x0, cfg.schedule.build(), cfg.tolerance.build(), cfg.weights.build(),
            cfg.solver.build(), cfg.ra.outer_iterations, seed,
            warm_start=cfg.ra.warm_start, carry_memory=cfg.ra.carry_memory,
            nested=cfg.ra.sample_mode == "nested", **common,
        )
    bcfg = cfg.baseline.build()
    runner = run_adam if isinstance(bcfg, AdamConfig) else run_sgd
    return runner(oracle, x0, bcfg, seed, cfg.baseline.eval_cadence, **common)


@dataclass
class ExperimentResult:
    traces: dict[int, RunTrace]
    aggregate: dict
    output_dir: Path
    failures: dict[int, str] = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> ExperimentResult:
    """Run all replications and write traces, aggregate and resolved config.

    Files: ``trace_r{r}.csv`` per replication, ``aggregate.json`` and
    ``resolved_config.json``. A failed replication is logged and listed in
    the aggregate's ``warnings``; the rest are still aggregated.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = config_fingerprint(cfg)
    (out / "resolved_config.json").write_text(dumps_json({"config": dump_config(cfg), "fingerprint": fp}))

    def task(r):
        trace = run_replication(cfg, r)
        (out / f"trace_r{r}.csv").write_text(trace_to_csv(trace, r))
        return trace

    traces: dict[int, RunTrace] = {}
    failures: dict[int, str] = {}
    n_workers = min(resolve_workers(cfg.workers), cfg.replications)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = {r: pool.submit(task, r) for r in range(cfg.replications)}
        for r, fut in futures.items():
            try:
                traces[r] = fut.result()
            except Exception as exc:  # keep the other replications
                log.warning("replication %d failed: %s", r, exc)
                failures[r] = f"{type(exc).__name__}: {exc}"

    done = sorted(traces)
    aggregate = {
        "algorithm": cfg.algorithm_name,
        "replications": done,
        "interpolation": "last-value-carried-forward",
        "quantile_rule": "linear",
        "series": aggregate_records([traces[r].records for r in done]),
        "warnings": [f"replication {r} failed: {msg}" for r, msg in sorted(failures.items())],
        "config_fingerprint": fp,
    }
    (out / "aggregate.json").write_text(dumps_json(aggregate))
    return ExperimentResult(traces, aggregate, out, failures)


def sweep(cfg: ExperimentConfig, key: str, values, output_dir=None) -> dict[str, ExperimentResult]:
    """One :func:`run_experiment` per value of the dotted ``key``.

    Results land in ``<output_dir>/<key>=<value>/``.
    """
    base = Path(output_dir if output_dir is not None else cfg.output_dir)
    results = {}
    for raw in values:
        value = yaml.safe_load(raw) if isinstance(raw, str) else raw
        sub = with_override(cfg, key, value)
        label = f"{key}={raw}"
        results[label] = run_experiment(sub, base / label)
    return results


@dataclass(frozen=True)
class CheckItem:
    name: str
    passed: bool
    detail: str


@dataclass
class CheckReport:
    items: list[CheckItem]

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def format(self) -> str:
        return "\n".join(f"[{'PASS' if i.passed else 'FAIL'}] {i.name}: {i.detail}" for i in self.items)


def self_check(
    cfg: ExperimentConfig,
    oracle: StochasticOracle | None = None,
    n_gradient_checks: int = 20,
    gradient_tol: float = 1e-5,
) -> CheckReport:
    """Finite-difference gradients, schedule summability, and a 5-iteration smoke run."""
    oracle = oracle if oracle is not None else build_oracle(cfg)
    rng = np.random.default_rng(cfg.base_seed)
    items = []

    x_base = initial_point(cfg, oracle)
    errs = []
    for _ in range(n_gradient_checks):
        x = x_base + rng.standard_normal(oracle.dimension)
        if oracle.n_samples is not None:
            s = SampleId(0, int(rng.integers(oracle.n_samples)))
        else:
            s = SampleId(int(rng.integers(2**63)), int(rng.integers(2**32)))
        errs.append(gradient_check(oracle, x, s))
    worst = max(errs)
    items.append(CheckItem("gradient", worst <= gradient_tol,
                           f"worst relative error {worst:.3g} over {n_gradient_checks} points (tol {gradient_tol:g})"))

    sched, tol = cfg.schedule.build(), cfg.tolerance.build()
    rep = check_summability(sched, tol, horizon=100)
    items.append(CheckItem("summability", rep.verdict != "not-certified",
                           f"{rep.kind}: verdict {rep.verdict}, partial sum {rep.partial_sum:.6g} "
                           f"over {rep.horizon} terms; tolerance {rep.tolerance_verdict}"))

    nested = cfg.ra.sample_mode == "nested"
    weights = cfg.weights.build() if cfg.weights.kind != "custom" else None
    trace = run_ra(oracle, x_base, sched, tol, weights, cfg.solver.build(), 5, cfg.base_seed,
                   track_true=False, workers=cfg.workers, nested=nested)
    cert = verify_tolerance_certificate(oracle, trace, nested=nested)
    bad = [k for k, ok, _ in cert if not ok]
    items.append(CheckItem("tolerance certificate", not bad,
                           f"{len(cert)} converged outer iterations re-verified" + (f"; violated at k={bad}" if bad else "")))
    return CheckReport(items)
