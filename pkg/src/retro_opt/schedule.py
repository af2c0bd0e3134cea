"""Sample-size and tolerance schedules for the outer loop.

Sample sizes are always integers: every multiplicative update is rounded up
and the next update multiplies the rounded value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .oracle import StochasticOracle
from .sample_path import SampleSet, estimate_grad_norm_sigma

__all__ = [
    "SampleSizeSchedule",
    "ToleranceSchedule",
    "ToleranceCache",
    "RateCheckConfig",
    "SummabilityReport",
    "DiagnosticUnavailableError",
    "next_sample_size",
    "sample_sizes",
    "next_tolerance",
    "default_m_sigma",
    "check_summability",
    "geometric_rate_bound",
]


class DiagnosticUnavailableError(ValueError):
    """A diagnostic needs constants the user did not supply."""


@dataclass(frozen=True)
class SampleSizeSchedule:
    kind: str
    m1: int = 1
    c1: float | None = None
    a: float | None = None
    b: float | None = None
    values: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == "geometric":
            if self.c1 is None or not self.c1 > 1:
                raise ValueError("geometric schedule needs c1 > 1")
        elif self.kind == "polynomial_factor":
            if self.a is None or self.b is None or self.a <= 0 or self.b <= 0:
                raise ValueError("polynomial_factor schedule needs a > 0 and b > 0")
        elif self.kind == "fixed_list":
            if not self.values or any(int(v) < 1 for v in self.values):
                raise ValueError("fixed_list needs a non-empty list of positive sizes")
            object.__setattr__(self, "values", tuple(int(v) for v in self.values))
            object.__setattr__(self, "m1", self.values[0])
            return
        else:
            raise ValueError(f"unknown sample-size schedule {self.kind!r}")
        if self.m1 < 1:
            raise ValueError("m1 must be positive")

    @classmethod
    def geometric(cls, c1: float, m1: int):
        return cls("geometric", m1=m1, c1=c1)

    @classmethod
    def polynomial_factor(cls, a: float, b: float, m1: int):
        return cls("polynomial_factor", m1=m1, a=a, b=b)

    @classmethod
    def fixed_list(cls, values):
        return cls("fixed_list", values=tuple(values))


def _polynomial_next(a: float, b: float, k: int, M_prev: int) -> int:
    # 50 significant digits; a product within 1e-30 of an integer is taken to
    # be that integer (e.g. (1 + 1/6) * 6), otherwise rounded up
    with localcontext() as ctx:
        ctx.prec = 50
        q = 1 + Decimal(repr(a)) * Decimal(k) ** (-Decimal(repr(b)))
        v = q * M_prev
        n = v.to_integral_value(rounding="ROUND_HALF_EVEN")
        if abs(v - n) <= Decimal("1e-30") * max(v, Decimal(1)):
            return int(n)
        return int(v.to_integral_value(rounding="ROUND_CEILING"))


def next_sample_size(sched: SampleSizeSchedule, k: int, M_prev: int | None = None) -> int:
    """``M_k`` given ``M_{k-1}`` (``M_prev`` is required iff ``k >= 2``)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if sched.kind == "fixed_list":
        if k > len(sched.values):
            raise ValueError(f"fixed_list has only {len(sched.values)} entries")
        return sched.values[k - 1]
    if k == 1:
        return sched.m1
    if M_prev is None or M_prev < 1:
        raise ValueError("M_prev is required for k >= 2")
    if sched.kind == "geometric":
        # decimal reading of c1 so that e.g. 1.1 * 10 is exactly 11
        return math.ceil(Fraction(repr(float(sched.c1))) * M_prev)
    return _polynomial_next(sched.a, sched.b, k, M_prev)


def sample_sizes(sched: SampleSizeSchedule, K: int) -> list[int]:
    out: list[int] = []
    for k in range(1, K + 1):
        out.append(next_sample_size(sched, k, out[-1] if out else None))
    return out


def default_m_sigma(M: int) -> int:
    return min(M, 100)


@dataclass(frozen=True)
class ToleranceSchedule:
    """``deterministic``: ``eps_k = c2 / sqrt(M_k)``.

    ``adaptive``: ``eps_k = max(sigma_hat, sigma_floor) / sqrt(M_k)`` where
    ``sigma_hat`` is the spread of per-sample gradient norms at the warm
    start, refreshed every ``recompute_every`` outer iterations.
    ``m_sigma=None`` uses ``min(M_k, 100)``.
    """

    kind: str
    c2: float | None = None
    m_sigma: int | None = None
    recompute_every: int = 1
    sigma_floor: float = 1e-10

    def __post_init__(self):
        if self.kind == "deterministic":
            if self.c2 is None or not self.c2 > 0:
                raise ValueError("deterministic tolerance needs c2 > 0")
        elif self.kind == "adaptive":
            if self.recompute_every < 1:
                raise ValueError("recompute_every must be >= 1")
            if self.sigma_floor < 0:
                raise ValueError("sigma_floor must be nonnegative")
            if self.m_sigma is not None and self.m_sigma < 2:
                raise ValueError("m_sigma must be >= 2")
        else:
            raise ValueError(f"unknown tolerance schedule {self.kind!r}")

    @classmethod
    def deterministic(cls, c2: float):
        return cls("deterministic", c2=c2)

    @classmethod
    def adaptive(cls, m_sigma=None, recompute_every=1, sigma_floor=1e-10):
        return cls("adaptive", m_sigma=m_sigma, recompute_every=recompute_every, sigma_floor=sigma_floor)


@dataclass
class ToleranceCache:
    """Last computed ``sigma_hat`` and the outer iteration it came from."""

    sigma: float | None = None
    computed_at: int | None = None
    history: list[tuple[int, float]] = field(default_factory=list)


def next_tolerance(
    sched: ToleranceSchedule,
    k: int,
    M_k: int,
    warm_start=None,
    sample_set: SampleSet | None = None,
    oracle: StochasticOracle | None = None,
    *,
    cache: ToleranceCache | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """``eps_k`` for outer iteration ``k``.

    In adaptive mode ``sigma_hat`` is measured at ``warm_start`` on a random
    subset of ``sample_set`` (charged to the oracle's counters) unless
    ``cache`` holds a value younger than ``recompute_every`` iterations.
    """
    if M_k < 1:
        raise ValueError("M_k must be >= 1")
    root = math.sqrt(M_k)
    if sched.kind == "deterministic":
        return sched.c2 / root
    m_sigma = sched.m_sigma if sched.m_sigma is not None else default_m_sigma(M_k)
    if m_sigma > M_k or m_sigma < 2:
        raise ValueError(f"adaptive tolerance needs 2 <= m_sigma <= M_k, got m_sigma={m_sigma}, M_k={M_k}")
    cache = cache if cache is not None else ToleranceCache()
    stale = cache.sigma is None or k - cache.computed_at >= sched.recompute_every
    if stale:
        if sample_set is None or oracle is None or warm_start is None:
            raise ValueError("adaptive tolerance needs warm_start, sample_set and oracle")
        rng = rng if rng is not None else np.random.default_rng(k)
        cache.sigma = estimate_grad_norm_sigma(oracle, sample_set, warm_start, m_sigma, rng)
        cache.computed_at = k
        cache.history.append((k, cache.sigma))
    return max(cache.sigma, sched.sigma_floor) / root


@dataclass(frozen=True)
class SummabilityReport:
    """Outcome of checking ``sum_k M_k^{-1/2} < infinity`` up to a horizon.

    ``verdict`` is ``"summable"`` (analytically certified),
    ``"not-certified"`` or ``"numerical-only"``. ``tolerance_verdict`` says
    the same for the tolerance sequence.
    """

    kind: str
    horizon: int
    partial_sum: float
    verdict: str
    tolerance_verdict: str
    bound: float | None = None
    growth_exponent: float | None = None
    notes: tuple[str, ...] = ()


def check_summability(
    sched: SampleSizeSchedule, tol: ToleranceSchedule | None = None, horizon: int = 100
) -> SummabilityReport:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if sched.kind == "fixed_list":
        horizon = min(horizon, len(sched.values))
    sizes = sample_sizes(sched, horizon)
    partial = math.fsum(1.0 / math.sqrt(m) for m in sizes)
    notes: list[str] = []
    bound = None
    growth = None
    if sched.kind == "geometric":
        # M_k >= m1 c1^(k-1), so the tail is dominated by a geometric series
        bound = 1.0 / (math.sqrt(sched.m1) * (1.0 - 1.0 / math.sqrt(sched.c1)))
        verdict = "summable"
    elif sched.kind == "polynomial_factor":
        verdict = "numerical-only"
        if horizon >= 4:
            half = sizes[horizon // 2 - 1]
            growth = math.log(sizes[-1] / half) / math.log(horizon / (horizon // 2))
            notes.append(f"empirical growth M_k ~ k^{growth:.3g} over k <= {horizon}")
        notes.append("the product of the factors converges; growth past the ceiling effect is not certified")
    else:
        verdict = "not-certified"
    if tol is None:
        tol_verdict = "unknown"
    elif tol.kind == "deterministic":
        tol_verdict = "summable" if verdict == "summable" else verdict
    else:
        tol_verdict = "conditional"
        notes.append("adaptive tolerances are summable only if sigma_hat stays bounded")
    return SummabilityReport(
        kind=sched.kind,
        horizon=horizon,
        partial_sum=partial,
        verdict=verdict,
        tolerance_verdict=tol_verdict,
        bound=bound,
        growth_exponent=growth,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class RateCheckConfig:
    """Geometric-schedule constants plus user-supplied problem estimates."""

    c1: float
    c2: float
    m1: int
    L_estimate: float | None = None
    sigma_estimate: float | None = None
    Lambda_estimate: float | None = None

    def __post_init__(self):
        if not self.c1 > 1 or not self.c2 > 0 or self.m1 < 1:
            raise ValueError("need c1 > 1, c2 > 0, m1 >= 1")


def geometric_rate_bound(cfg: RateCheckConfig, k: int, denominator: str = "sqrt_m1") -> float:
    """Reference bound ``c1^{-(k-1)/2} L (c2 + sigma) / (Lambda D)`` on ``E||grad f(X_k)||``.

    ``D`` is ``sqrt(m1)`` by default or ``m1`` with ``denominator="m1"``.
    Only meant as a reference line next to measured gradient norms.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    missing = [n for n in ("L_estimate", "sigma_estimate", "Lambda_estimate") if getattr(cfg, n) is None]
    if missing:
        raise DiagnosticUnavailableError(f"missing estimates: {', '.join(missing)}")
    if denominator == "sqrt_m1":
        D = math.sqrt(cfg.m1)
    elif denominator == "m1":
        D = float(cfg.m1)
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    pref = cfg.L_estimate * (cfg.c2 + cfg.sigma_estimate) / (cfg.Lambda_estimate * D)
    return (1.0 / math.sqrt(cfg.c1)) ** (k - 1) * pref
