"""Stochastic first-order oracles.

An oracle represents a random function ``F(x, Y)`` together with a way of
realizing ``Y`` from a :class:`SampleId`. Two sampling modes exist:

* ``"finite"``: ``Y`` is drawn from a stored dataset of ``N`` rows and the
  sample index selects the row.
* ``"stream"``: ``Y`` is generated on the fly from ``(stream_seed, index)``
  with a counter-based generator, so the same id always gives the same draw.

All gradients are analytic. The batch methods ``batch_values`` and
``batch_values_and_grads`` never touch the work counters; callers that spend
optimization budget charge ``oracle.counter`` themselves (see
:mod:`retro_opt.sample_path`). Only :meth:`StochasticOracle.evaluate`
charges automatically.
"""

from __future__ import annotations

import abc
import csv
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import _rng

__all__ = [
    "InvalidSampleError",
    "SampleId",
    "OracleOutput",
    "ProblemSpec",
    "WorkCounter",
    "StochasticOracle",
    "LeastSquaresOracle",
    "LogisticOracle",
    "NonconvexOracle",
    "QuadraticOracle",
    "make_least_squares",
    "make_logistic",
    "make_nonconvex_test",
    "make_quadratic",
    "load_csv",
    "gradient_check",
]


class InvalidSampleError(IndexError):
    """A sample id does not exist for this oracle (e.g. index >= N)."""


@dataclass(frozen=True)
class SampleId:
    stream_seed: int
    index: int

    def __post_init__(self):
        for name in ("stream_seed", "index"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer, got {v}")


@dataclass(frozen=True)
class OracleOutput:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class ProblemSpec:
    dimension: int
    mode: str
    n_samples: int | None = None
    known_optimum: np.ndarray | None = None
    generator_params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.mode not in ("stream", "finite"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "finite" and (self.n_samples is None or self.n_samples < 1):
            raise ValueError("finite-dataset mode requires n_samples >= 1")
        if self.known_optimum is not None and len(self.known_optimum) != self.dimension:
            raise ValueError("known_optimum length must equal dimension")


class WorkCounter:
    """Thread-safe tally of per-sample oracle work and gradient evaluations.

    ``oracle_work`` counts every per-sample evaluation charged to
    optimization, function-only ones included. ``gradient_evals`` counts only
    the evaluations that produced a gradient.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.oracle_work = 0
        self.gradient_evals = 0

    def charge(self, work: int, gradients: int) -> None:
        with self._lock:
            self.oracle_work += int(work)
            self.gradient_evals += int(gradients)

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.oracle_work, self.gradient_evals

    def reset(self) -> None:
        with self._lock:
            self.oracle_work = 0
            self.gradient_evals = 0


class StochasticOracle(abc.ABC):
    """Base class for ``F(x, Y)`` with analytic gradients.

    Subclasses implement ``_values``, ``_values_and_grads`` and
    ``lipschitz_bound`` over a vector of sample indices.
    """

    def __init__(
        self,
        dimension: int,
        n_samples: int | None = None,
        seed: int = 0,
        known_optimum=None,
        generator_params: dict | None = None,
    ):
        self.dimension = int(dimension)
        self.n_samples = None if n_samples is None else int(n_samples)
        self.seed = int(seed)
        self.known_optimum = None if known_optimum is None else np.asarray(known_optimum, float)
        self.generator_params = dict(generator_params or {})
        self.counter = WorkCounter()
        self.spec = ProblemSpec(
            dimension=self.dimension,
            mode=self.mode,
            n_samples=self.n_samples,
            known_optimum=self.known_optimum,
            generator_params=self.generator_params,
        )

    @property
    def mode(self) -> str:
        return "stream" if self.n_samples is None else "finite"

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected a point of shape ({self.dimension},), got {x.shape}")
        return x

    def check_indices(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64).reshape(-1)
        if self.n_samples is not None and idx.size and int(idx.max()) >= self.n_samples:
            raise InvalidSampleError(
                f"sample index {int(idx.max())} out of range for a dataset of {self.n_samples}"
            )
        return idx

    def evaluate(self, x, s: SampleId) -> OracleOutput:
        """``F(x, Y_s)`` and its gradient; charges one unit of each counter."""
        x = self.check_point(x)
        idx = self.check_indices([s.index])
        vals, grads = self._values_and_grads(x, idx, s.stream_seed)
        self.counter.charge(1, 1)
        return OracleOutput(float(vals[0]), grads[0].copy())

    def batch_values(self, x, indices, stream_seed: int = 0) -> np.ndarray:
        x = self.check_point(x)
        return self._values(x, self.check_indices(indices), stream_seed)

    def batch_values_and_grads(self, x, indices, stream_seed: int = 0):
        """Per-sample values ``(M,)`` and gradients ``(M, d)``, uncharged."""
        x = self.check_point(x)
        return self._values_and_grads(x, self.check_indices(indices), stream_seed)

    def batch_lipschitz(self, indices, stream_seed: int = 0) -> np.ndarray:
        return self.lipschitz_bound(self.check_indices(indices), stream_seed)

    def full_data(self, x):
        """Exact full-dataset objective and gradient (finite mode only)."""
        if self.n_samples is None:
            raise TypeError("full_data is only defined for finite-dataset oracles")
        x = self.check_point(x)
        idx = np.arange(self.n_samples, dtype=np.uint64)
        vals, grads = self._values_and_grads(x, idx, 0)
        return float(vals.mean()), grads.mean(axis=0)

    def _values(self, x, idx, stream_seed):
        return self._values_and_grads(x, idx, stream_seed)[0]

    @abc.abstractmethod
    def _values_and_grads(self, x, idx, stream_seed): ...

    @abc.abstractmethod
    def lipschitz_bound(self, idx, stream_seed): ...


# ---------------------------------------------------------------------------
# finite-dataset problems


class LeastSquaresOracle(StochasticOracle):
    """``F(beta, (X, y)) = (y - X^T beta)^2`` over a stored dataset."""

    def __init__(self, covariates, responses, beta_true=None, seed=0, generator_params=None):
        X = np.atleast_2d(np.asarray(covariates, dtype=np.float64))
        y = np.asarray(responses, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("covariates and responses disagree on the number of rows")
        self.covariates = X
        self.responses = y
        self.beta_true = None if beta_true is None else np.asarray(beta_true, float)
        super().__init__(X.shape[1], X.shape[0], seed, None, generator_params)

    @classmethod
    def from_csv(cls, path):
        X, y = load_csv(path)
        return cls(X, y, generator_params={"csv": str(path)})

    def _values(self, x, idx, stream_seed):
        i = idx.astype(np.intp)
        r = self.responses[i] - self.covariates[i] @ x
        return r * r

    def _values_and_grads(self, x, idx, stream_seed):
        i = idx.astype(np.intp)
        Xi = self.covariates[i]
        r = self.responses[i] - Xi @ x
        return r * r, (-2.0 * r)[:, None] * Xi

    def lipschitz_bound(self, idx, stream_seed):
        Xi = self.covariates[idx.astype(np.intp)]
        return 2.0 * np.einsum("ij,ij->i", Xi, Xi)

    def gram_condition_number(self) -> float:
        """Condition number of ``N^-1 X^T X``."""
        gram = self.covariates.T @ self.covariates / self.n_samples
        ev = np.linalg.eigvalsh(gram)
        return float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")

    def full_data_minimizer(self) -> np.ndarray:
        return np.linalg.lstsq(self.covariates, self.responses, rcond=None)[0]


def make_least_squares(
    p: int, N: int, seed: int = 0, condition_number: float | None = None
) -> LeastSquaresOracle:
    """Synthetic least-squares data with ``beta_true = (1, ..., p)``.

    Covariates are ``N(0, I_p)`` and ``y | X ~ N(X^T beta, 1)``. With
    ``condition_number`` set, column ``j`` of the covariates is scaled by
    ``condition_number ** (-(p - j) / (2 (p - 1)))`` (``j = 1..p``) before the
    responses are generated, so the Gram matrix spectrum spans roughly the
    requested ratio while the largest coefficient keeps unit scale.
    """
    if p < 1 or N < 1:
        raise ValueError("p and N must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, p))
    if condition_number is not None:
        if condition_number < 1:
            raise ValueError("condition_number must be >= 1")
        if p > 1:
            expo = -(p - np.arange(1, p + 1)) / (2.0 * (p - 1))
            X *= float(condition_number) ** expo
    beta = np.arange(1, p + 1, dtype=np.float64)
    y = X @ beta + rng.standard_normal(N)
    params = {"p": p, "N": N, "seed": seed, "condition_number": condition_number}
    return LeastSquaresOracle(X, y, beta_true=beta, seed=seed, generator_params=params)


class LogisticOracle(StochasticOracle):
    """Log-loss ``log(1 + e^z) - y z`` with ``z = a^T x`` and labels in {0, 1}."""

    def __init__(self, covariates, labels, x_true=None, seed=0, generator_params=None):
        A = np.atleast_2d(np.asarray(covariates, dtype=np.float64))
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if A.shape[0] != y.shape[0]:
            raise ValueError("covariates and labels disagree on the number of rows")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be 0 or 1")
        self.covariates = A
        self.labels = y
        self.x_true = None if x_true is None else np.asarray(x_true, float)
        super().__init__(A.shape[1], A.shape[0], seed, None, generator_params)

    @classmethod
    def from_csv(cls, path):
        A, y = load_csv(path)
        return cls(A, y, generator_params={"csv": str(path)})

    def _values(self, x, idx, stream_seed):
        i = idx.astype(np.intp)
        z = self.covariates[i] @ x
        return np.logaddexp(0.0, z) - self.labels[i] * z

    def _values_and_grads(self, x, idx, stream_seed):
        i = idx.astype(np.intp)
        Ai = self.covariates[i]
        z = Ai @ x
        vals = np.logaddexp(0.0, z) - self.labels[i] * z
        # sigmoid via exp(-logaddexp) stays finite for large |z|
        resid = np.exp(-np.logaddexp(0.0, -z)) - self.labels[i]
        return vals, resid[:, None] * Ai

    def lipschitz_bound(self, idx, stream_seed):
        Ai = self.covariates[idx.astype(np.intp)]
        return 0.25 * np.einsum("ij,ij->i", Ai, Ai)


def make_logistic(p: int, N: int, seed: int = 0) -> LogisticOracle:
    """Binary logistic regression with ``N(0, I_p)`` features and seeded truth."""
    if p < 1 or N < 1:
        raise ValueError("p and N must be positive")
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(p)
    A = rng.standard_normal((N, p))
    prob = 1.0 / (1.0 + np.exp(-(A @ x_true)))
    y = (rng.random(N) < prob).astype(np.float64)
    params = {"p": p, "N": N, "seed": seed}
    return LogisticOracle(A, y, x_true=x_true, seed=seed, generator_params=params)


# ---------------------------------------------------------------------------
# streaming problems


class NonconvexOracle(StochasticOracle):
    """Separable nonconvex test function with Gaussian-shifted centers.

    Per sample, with ``t = x - c`` and ``xi ~ N(0, noise^2 I)``::

        F(x, xi) = sum_i 0.5 * lam_i * (t_i - xi_i)^2 - amp * cos(freq * t_i)

    Its expectation is ``sum_i 0.5 lam_i t_i^2 - amp cos(freq t_i)`` plus the
    constant ``0.5 * noise^2 * sum(lam)``. The center ``c`` is the unique
    global minimizer. Coordinate ``i`` is nonconvex when
    ``amp * freq^2 > lam_i`` and has further stationary points (roots of
    ``lam t = -amp freq sin(freq t)``) once ``amp * freq`` exceeds about
    ``lam_i * 3 pi / (2 freq)``.
    """

    def __init__(self, curvature, center, amplitude=1.0, frequency=3.0, noise=1.0, seed=0):
        lam = np.asarray(curvature, dtype=np.float64).reshape(-1)
        c = np.asarray(center, dtype=np.float64).reshape(-1)
        if lam.shape != c.shape:
            raise ValueError("curvature and center must have the same length")
        if np.any(lam <= 0):
            raise ValueError("curvatures must be positive")
        if noise < 0 or amplitude < 0:
            raise ValueError("noise and amplitude must be nonnegative")
        self.curvature = lam
        self.center = c
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.noise = float(noise)
        params = {"amplitude": amplitude, "frequency": frequency, "noise": noise, "seed": seed}
        super().__init__(lam.size, None, seed, c.copy(), params)

    def _shifts(self, idx, stream_seed):
        if self.noise == 0.0:
            return np.zeros((idx.size, self.dimension))
        return self.noise * _rng.normals(stream_seed, idx, self.dimension)

    def _values(self, x, idx, stream_seed):
        t = x - self.center
        u = t[None, :] - self._shifts(idx, stream_seed)
        quad = 0.5 * (u * u) @ self.curvature
        return quad - self.amplitude * np.cos(self.frequency * t).sum()

    def _values_and_grads(self, x, idx, stream_seed):
        t = x - self.center
        u = t[None, :] - self._shifts(idx, stream_seed)
        vals = 0.5 * (u * u) @ self.curvature - self.amplitude * np.cos(self.frequency * t).sum()
        wave = self.amplitude * self.frequency * np.sin(self.frequency * t)
        return vals, u * self.curvature + wave

    def lipschitz_bound(self, idx, stream_seed):
        L = self.curvature.max() + self.amplitude * self.frequency**2
        return np.full(idx.size, L)

    def expected_gradient(self, x) -> np.ndarray:
        t = self.check_point(x) - self.center
        return self.curvature * t + self.amplitude * self.frequency * np.sin(self.frequency * t)

    def expected_value(self, x) -> float:
        t = self.check_point(x) - self.center
        quad = 0.5 * np.sum(self.curvature * (t * t + self.noise**2))
        return float(quad - self.amplitude * np.cos(self.frequency * t).sum())

    def gradient_noise_scale(self) -> float:
        """``sqrt(E || grad F - grad f ||^2)``, the same at every ``x``."""
        return float(self.noise * np.linalg.norm(self.curvature))


def make_nonconvex_test(
    p: int,
    seed: int = 0,
    amplitude: float = 2.5,
    frequency: float = 3.0,
    noise: float = 1.0,
) -> NonconvexOracle:
    """Seeded :class:`NonconvexOracle` with curvatures in ``[1, 4]``.

    The default amplitude and frequency give every coordinate stationary
    points besides the center.
    """
    if p < 1:
        raise ValueError("p must be positive")
    rng = np.random.default_rng(seed)
    lam = rng.uniform(1.0, 4.0, size=p)
    center = rng.uniform(-2.0, 2.0, size=p)
    return NonconvexOracle(lam, center, amplitude, frequency, noise, seed)


class QuadraticOracle(StochasticOracle):
    """``F(x, xi) = 0.5 (x - c - xi)^T A (x - c - xi)`` with ``xi ~ N(0, noise^2 I)``."""

    def __init__(self, A, center=None, noise=0.0, seed=0):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        if A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("A must be square and symmetric")
        d = A.shape[0]
        c = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)
        self.A = A
        self.center = c
        self.noise = float(noise)
        self._lmax = float(np.linalg.eigvalsh(A)[-1])
        super().__init__(d, None, seed, c.copy(), {"noise": noise, "seed": seed})

    def _values_and_grads(self, x, idx, stream_seed):
        u = np.broadcast_to(x - self.center, (idx.size, self.dimension))
        if self.noise:
            u = u - self.noise * _rng.normals(stream_seed, idx, self.dimension)
        Au = u @ self.A
        return 0.5 * np.einsum("ij,ij->i", u, Au), Au

    def lipschitz_bound(self, idx, stream_seed):
        return np.full(idx.size, self._lmax)


def make_quadratic(A, center=None, noise=0.0, seed=0) -> QuadraticOracle:
    return QuadraticOracle(A, center, noise, seed)


# ---------------------------------------------------------------------------
# utilities


def load_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset with a header row; column ``y`` is the response.

    Returns ``(features, y)`` with the remaining columns as features in file
    order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if "y" not in header:
            raise ValueError(f"{path}: no column named 'y' in header {header}")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    j = header.index("y")
    return np.delete(data, j, axis=1), data[:, j].copy()


def gradient_check(oracle: StochasticOracle, x, s: SampleId, h: float | None = None) -> float:
    """Relative error between the analytic and central-difference gradient.

    The step defaults to ``1e-6 * (1 + ||x||)``. Nothing is charged to the
    work counters.
    """
    x = oracle.check_point(x)
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(x))
    _, g = oracle.batch_values_and_grads(x, [s.index], s.stream_seed)
    g = g[0]
    d = oracle.dimension
    pts = np.concatenate([x + h * np.eye(d), x - h * np.eye(d)])
    vals = np.array([oracle.batch_values(pt, [s.index], s.stream_seed)[0] for pt in pts])
    g_fd = (vals[:d] - vals[d:]) / (2.0 * h)
    scale = max(np.linalg.norm(g), np.linalg.norm(g_fd), 1e-8)
    return float(np.linalg.norm(g - g_fd) / scale)
