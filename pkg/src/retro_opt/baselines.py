"""Constant-step SGD and Adam with the same work accounting as the RA driver."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .driver import OuterIterationRecord, RunTrace, fingerprint, measure_true_gradient, stream_rng
from .oracle import StochasticOracle
from .sample_path import SamplePathProblem, draw_sample_set

__all__ = ["SgdConfig", "AdamConfig", "AdamUpdate", "run_sgd", "run_adam", "DIVERGENCE_NORM"]

DIVERGENCE_NORM = 1e12
_BATCH_STREAM = 3


@dataclass(frozen=True)
class SgdConfig:
    step_size: float = 0.01
    batch_size: int = 32
    total_steps: int = 1000

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("batch_size and total_steps must be positive")


@dataclass(frozen=True)
class AdamConfig:
    step_size: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    batch_size: int = 32
    total_steps: int = 1000

    def __post_init__(self):
        if not self.step_size > 0 or not self.eps_hat > 0:
            raise ValueError("step_size and eps_hat must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("batch_size and total_steps must be positive")


class AdamUpdate:
    def __init__(self, cfg: AdamConfig, d: int):
        self.cfg = cfg
        self.m = np.zeros(d)
        self.v = np.zeros(d)
        self.t = 0

    def __call__(self, x, g):
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * g
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * g * g
        m_hat = self.m / (1.0 - c.beta1**self.t)
        v_hat = self.v / (1.0 - c.beta2**self.t)
        return x - c.step_size * m_hat / (np.sqrt(v_hat) + c.eps_hat)


def _run_first_order(
    name, oracle, x0, update, batch_size, total_steps, seed, eval_cadence,
    eval_samples, eval_seed, track_true, workers, record_wall_time, config_fingerprint,
):
    if eval_cadence < 1:
        raise ValueError("eval_cadence must be positive")
    x = oracle.check_point(x0).copy()
    eval_seed = seed if eval_seed is None else eval_seed
    rng = stream_rng(seed, 0, _BATCH_STREAM)
    work0, grads0 = oracle.counter.snapshot()
    trace = RunTrace([], x.copy(), config_fingerprint, int(seed), algorithm=name)
    t_start = time.perf_counter()
    since = 0
    last_norm = math.nan

    def record(t, status):
        nonlocal since
        work, grads = oracle.counter.snapshot()
        loss = gnorm = None
        if track_true and np.all(np.isfinite(x)):
            loss, gnorm = measure_true_gradient(oracle, x, eval_samples, eval_seed)
        trace.records.append(
            OuterIterationRecord(
                k=t,
                M_k=batch_size,
                eps_k=math.nan,
                inner_iterations=since,
                grad_norm_sample_path=last_norm,
                grad_norm_true=gnorm,
                loss_true=loss,
                cumulative_oracle_work=work - work0,
                cumulative_gradient_evals=grads - grads0,
                wall_time_ms=(time.perf_counter() - t_start) * 1e3 if record_wall_time else 0.0,
                inner_status=status,
                grad_calls=since,
            )
        )
        trace.iterates.append(x.copy())
        since = 0

    for t in range(1, total_steps + 1):
        batch = draw_sample_set(oracle, batch_size, t, rng)
        ev = SamplePathProblem(oracle, batch, workers).evaluate(x)
        x = update(x, ev.gradient)
        last_norm = ev.grad_norm
        since += 1
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            record(t, "diverged")
            break
        if t % eval_cadence == 0 or t == total_steps:
            record(t, "ok")
    trace.final_x = x.copy()
    return trace


def run_sgd(
    oracle: StochasticOracle,
    x0,
    cfg: SgdConfig,
    seed: int = 0,
    eval_cadence: int = 100,
    *,
    eval_samples: int = 10_000,
    eval_seed: int | None = None,
    track_true: bool = True,
    workers: int | None = None,
    record_wall_time: bool = False,
    config_fingerprint: str | None = None,
) -> RunTrace:
    """``x <- x - step_size * g`` with fresh mini-batches of ``batch_size``.

    A record is written every ``eval_cadence`` steps and at the last step.
    The run stops with status ``"diverged"`` once ``||x|| > 1e12`` or ``x``
    turns non-finite.
    """
    eta = cfg.step_size
    return _run_first_order(
        "sgd", oracle, x0, lambda x, g: x - eta * g, cfg.batch_size, cfg.total_steps, seed,
        eval_cadence, eval_samples, eval_seed, track_true, workers, record_wall_time,
        config_fingerprint or fingerprint(cfg),
    )


def run_adam(
    oracle: StochasticOracle,
    x0,
    cfg: AdamConfig,
    seed: int = 0,
    eval_cadence: int = 100,
    *,
    eval_samples: int = 10_000,
    eval_seed: int | None = None,
    track_true: bool = True,
    workers: int | None = None,
    record_wall_time: bool = False,
    config_fingerprint: str | None = None,
) -> RunTrace:
    """Adam with bias-corrected moments; instrumented like :func:`run_sgd`."""
    return _run_first_order(
        "adam", oracle, x0, AdamUpdate(cfg, oracle.dimension), cfg.batch_size, cfg.total_steps, seed,
        eval_cadence, eval_samples, eval_seed, track_true, workers, record_wall_time,
        config_fingerprint or fingerprint(cfg),
    )
