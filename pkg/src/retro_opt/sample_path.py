"""Sample-path problems: fixed bags of sample ids and their exact averages."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .oracle import SampleId, StochasticOracle

__all__ = [
    "SampleSet",
    "SamplePathEval",
    "SamplePathProblem",
    "draw_sample_set",
    "eval_sample_path",
    "estimate_grad_norm_sigma",
    "resolve_workers",
    "CHUNK_SIZE",
]

# Fixed reduction granularity; results never depend on the worker count.
CHUNK_SIZE = 2048
_OPT_STREAM_MASK = (1 << 63) - 1


def resolve_workers(workers: int | None = None) -> int:
    """Worker count, capped by ``RETRO_OPT_THREADS`` when it is set."""
    n = workers if workers is not None else (os.cpu_count() or 1)
    cap = os.environ.get("RETRO_OPT_THREADS")
    if cap:
        n = min(n, int(cap))
    return max(1, int(n))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Frozen, ordered multiset of sample ids for outer iteration ``generation``.

    All ids share one ``stream_seed``; ``indices`` is read-only.
    """

    stream_seed: int
    indices: np.ndarray
    generation: int

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.uint64).reshape(-1)
        if idx.size < 1:
            raise ValueError("a sample set needs at least one id")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.size

    @property
    def ids(self) -> list[SampleId]:
        return [SampleId(self.stream_seed, int(i)) for i in self.indices]

    @cached_property
    def multiplicities(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct indices (sorted) and how often each appears."""
        uniq, counts = np.unique(self.indices, return_counts=True)
        return uniq, counts.astype(np.float64)


@dataclass(frozen=True)
class SamplePathEval:
    value: float
    gradient: np.ndarray
    grad_norm: float


def draw_sample_set(
    oracle: StochasticOracle,
    M: int,
    k: int,
    rng: np.random.Generator,
    previous: SampleSet | None = None,
) -> SampleSet:
    """Draw the ``k``-th sample set of size ``M``.

    Finite datasets are sampled uniformly with replacement. Streaming oracles
    get a fresh 63-bit stream seed and indices ``0..M-1``. Passing
    ``previous`` grows that set by ``M - len(previous)`` new ids instead
    (nested sampling). The current iterate is deliberately not an argument.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if previous is not None:
        extra = M - previous.size
        if extra < 0:
            raise ValueError("a nested sample set cannot shrink")
        if oracle.n_samples is not None:
            new = rng.integers(0, oracle.n_samples, size=extra, dtype=np.uint64)
        else:
            new = np.arange(previous.size, M, dtype=np.uint64)
        return SampleSet(previous.stream_seed, np.concatenate([previous.indices, new]), k)
    if oracle.n_samples is not None:
        idx = rng.integers(0, oracle.n_samples, size=M, dtype=np.uint64)
        return SampleSet(0, idx, k)
    stream_seed = int(rng.integers(0, _OPT_STREAM_MASK, dtype=np.uint64))
    return SampleSet(stream_seed, np.arange(M, dtype=np.uint64), k)


def _kahan(partials):
    total = np.zeros_like(partials[0])
    comp = np.zeros_like(partials[0])
    for part in partials:
        y = part - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


class SamplePathProblem:
    """``f_M`` and ``grad f_M`` for one oracle and one :class:`SampleSet`.

    Every call charges the oracle's work counter: ``M`` oracle work for
    :meth:`value`, ``M`` oracle work and ``M`` gradient evaluations for
    :meth:`evaluate`. Call counts are kept for replayable accounting.
    ``charge=False`` turns the problem into pure instrumentation.
    """

    def __init__(
        self,
        oracle: StochasticOracle,
        sample_set: SampleSet,
        workers: int | None = None,
        charge: bool = True,
    ):
        self.oracle = oracle
        self.charge = charge
        self.sample_set = sample_set
        self.workers = resolve_workers(workers)
        self.value_calls = 0
        self.grad_calls = 0
        uniq, counts = sample_set.multiplicities
        oracle.check_indices(uniq)
        bounds = range(0, uniq.size, CHUNK_SIZE)
        self._chunks = [(uniq[a : a + CHUNK_SIZE], counts[a : a + CHUNK_SIZE]) for a in bounds]

    @property
    def dimension(self) -> int:
        return self.oracle.dimension

    @property
    def size(self) -> int:
        return self.sample_set.size

    def _map(self, fn):
        if self.workers > 1 and len(self._chunks) > 1:
            with ThreadPoolExecutor(max_workers=min(self.workers, len(self._chunks))) as pool:
                return list(pool.map(fn, self._chunks))
        return [fn(c) for c in self._chunks]

    def value(self, x) -> float:
        x = self.oracle.check_point(x)
        seed = self.sample_set.stream_seed

        def part(chunk):
            idx, w = chunk
            return np.array([np.sum(w * self.oracle._values(x, idx, seed))])

        total = _kahan(self._map(part))
        self.value_calls += 1
        if self.charge:
            self.oracle.counter.charge(self.size, 0)
        return float(total[0] / self.size)

    def evaluate(self, x) -> SamplePathEval:
        x = self.oracle.check_point(x)
        seed = self.sample_set.stream_seed

        def part(chunk):
            idx, w = chunk
            vals, grads = self.oracle._values_and_grads(x, idx, seed)
            out = np.empty(self.dimension + 1)
            out[0] = np.sum(w * vals)
            out[1:] = np.sum(w[:, None] * grads, axis=0)
            return out

        total = _kahan(self._map(part)) / self.size
        self.grad_calls += 1
        if self.charge:
            self.oracle.counter.charge(self.size, self.size)
        g = total[1:]
        return SamplePathEval(float(total[0]), g, float(np.linalg.norm(g)))


def eval_sample_path(
    oracle: StochasticOracle, sample_set: SampleSet, x, workers: int | None = None
) -> SamplePathEval:
    """Exact average value and gradient over ``sample_set`` at ``x``."""
    return SamplePathProblem(oracle, sample_set, workers).evaluate(x)


def estimate_grad_norm_sigma(
    oracle: StochasticOracle,
    sample_set: SampleSet,
    x,
    m_sigma: int,
    rng: np.random.Generator,
) -> float:
    """Sample standard deviation of per-sample gradient norms.

    Uses ``m_sigma`` members of ``sample_set`` chosen uniformly without
    replacement (by position). Charges ``m_sigma`` oracle work and gradient
    evaluations.
    """
    if m_sigma < 2:
        raise ValueError("m_sigma must be >= 2 for a sample variance")
    if m_sigma > sample_set.size:
        raise ValueError(f"m_sigma={m_sigma} exceeds the sample set size {sample_set.size}")
    pos = rng.choice(sample_set.size, size=m_sigma, replace=False)
    idx = sample_set.indices[np.sort(pos)]
    _, grads = oracle.batch_values_and_grads(x, idx, sample_set.stream_seed)
    oracle.counter.charge(m_sigma, m_sigma)
    norms = np.linalg.norm(grads, axis=1)
    return float(np.std(norms, ddof=1))
