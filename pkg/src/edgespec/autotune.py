"""Bayesian-optimisation autotuner for the trigger threshold pair.

Minimisation throughout: the objective is mean time per accepted token.
The surrogate is exact GP regression with a Matérn-5/2 kernel on the unit
square; the acquisition (expected improvement) is maximised over a fixed
set of scrambled Halton candidates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import ndtr
from scipy.stats import qmc

from .core import ValidationError

LENGTH_SCALE = 0.2
JITTER = 1e-6
MAX_JITTER = 1e-2
N_CANDIDATES = 2048
XI = 0.1
EDGE = 1e-6

_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class Sample:
    r1: float
    r2: float
    objective: float

    def __post_init__(self):
        if not (0.0 < self.r1 < 1.0 and 0.0 < self.r2 < 1.0):
            raise ValidationError(f"threshold pair ({self.r1}, {self.r2}) outside (0,1)^2")
        if not self.objective > 0:
            raise ValidationError(f"objective must be positive, got {self.objective}")


def matern52(a: np.ndarray, b: np.ndarray, length_scale: float = LENGTH_SCALE,
             variance: float = 1.0) -> np.ndarray:
    d = np.sqrt(np.maximum(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1), 0.0)) / length_scale
    s = _SQRT5 * d
    return variance * (1.0 + s + s * s / 3.0) * np.exp(-s)


@dataclass
class GpPosterior:
    x: np.ndarray
    y: np.ndarray  # averaged raw targets
    y_mean: float
    y_scale: float
    length_scale: float
    signal_variance: float
    jitter: float
    chol: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def predict(self, points: np.ndarray, standardized: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at ``points`` (shape (m, 2))."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k_star = matern52(points, self.x, self.length_scale, self.signal_variance)
        mean = k_star @ self.weights
        v = linalg.solve_triangular(self.chol, k_star.T, lower=True)
        var = np.maximum(self.signal_variance - (v * v).sum(0), 0.0)
        std = np.sqrt(var)
        if standardized:
            return mean, std
        return mean * self.y_scale + self.y_mean, std * self.y_scale

    def standardize(self, value: float) -> float:
        return (value - self.y_mean) / self.y_scale


def _dedupe(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    groups: dict[tuple[float, float], list[float]] = {}
    for s in samples:
        groups.setdefault((s.r1, s.r2), []).append(s.objective)
    keys = list(groups)
    x = np.array(keys, dtype=float)
    y = np.array([np.mean(groups[k]) for k in keys], dtype=float)
    return x, y


def gp_fit(samples: Sequence[Sample], length_scale: float = LENGTH_SCALE) -> GpPosterior:
    if len(samples) == 0:
        raise ValidationError("gp_fit needs at least one sample")
    x, y = _dedupe(samples)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    if y_scale <= 0.0:
        y_scale = 1.0
    z = (y - y_mean) / y_scale
    signal_variance = float(z.var()) if len(z) > 1 else 1.0
    if signal_variance <= 0.0:
        signal_variance = 1.0
    k = matern52(x, x, length_scale, signal_variance)
    jitter = JITTER
    while True:
        try:
            chol = linalg.cholesky(k + jitter * np.eye(len(x)), lower=True)
            break
        except linalg.LinAlgError:
            jitter *= 10.0
            if jitter > MAX_JITTER:
                raise ValidationError(
                    f"kernel matrix not positive definite even with jitter {MAX_JITTER:g} "
                    f"({len(x)} points, length scale {length_scale})"
                )
    weights = linalg.cho_solve((chol, True), z)
    return GpPosterior(x, y, y_mean, y_scale, length_scale, signal_variance, jitter, chol, weights)


def expected_improvement(mean, std, best_so_far: float, xi: float = XI):
    """Expected improvement below ``best_so_far`` (minimisation)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValidationError("standard deviation must be non-negative")
    improvement = best_so_far - mean - xi
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = np.where(std > 0, improvement / np.where(std > 0, std, 1.0), 0.0)
        pdf = np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    ei = np.where(std > 0, improvement * ndtr(u) + std * pdf, np.maximum(improvement, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def candidate_points(rng: np.random.Generator, n: int = N_CANDIDATES) -> np.ndarray:
    halton = qmc.Halton(d=2, scramble=True, seed=rng)
    return np.clip(halton.random(n), EDGE, 1.0 - EDGE)


def bo_suggest(posterior: GpPosterior, rng: np.random.Generator, xi: float = XI,
               candidates: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Argmax of EI over the candidate set; lowest index wins ties.

    EI is evaluated on the standardized target scale so the exploration
    offset does not depend on the objective's units.
    """
    if candidates is None:
        candidates = candidate_points(rng)
    mean, std = posterior.predict(candidates, standardized=True)
    best = float(((posterior.y - posterior.y_mean) / posterior.y_scale).min())
    ei = expected_improvement(mean, std, best, xi)
    idx = int(np.argmax(ei))
    return float(candidates[idx, 0]), float(candidates[idx, 1])


@dataclass
class TuneResult:
    r1: float
    r2: float
    objective: float
    samples: list[Sample]

    @property
    def best(self) -> Sample:
        return Sample(self.r1, self.r2, self.objective)


def _best(samples: Sequence[Sample]) -> Sample:
    return min(samples, key=lambda s: s.objective)


class BayesOptimizer:
    """Ask/tell form of the tuner so live systems can interleave evaluations."""

    def __init__(self, budget: int = 16, seed: int = 0, xi: float = XI,
                 length_scale: float = LENGTH_SCALE, dims: int = 2,
                 fixed: Optional[dict[int, float]] = None):
        if budget < 1:
            raise ValidationError("budget must be >= 1")
        self.budget = budget
        self.rng = np.random.default_rng(seed)
        self.xi = xi
        self.length_scale = length_scale
        # fixed pins a coordinate (0 -> r1, 1 -> r2) for one-dimensional tuning
        self.fixed = dict(fixed or {})
        self.samples: list[Sample] = []
        self._pending: Optional[tuple[float, float]] = None
        self.suggestions = 0

    @property
    def done(self) -> bool:
        return len(self.samples) >= self.budget

    def _pin(self, r1: float, r2: float) -> tuple[float, float]:
        return self.fixed.get(0, r1), self.fixed.get(1, r2)

    def ask(self) -> tuple[float, float]:
        if self._pending is not None:
            return self._pending
        if not self.samples:
            r1, r2 = self.rng.uniform(EDGE, 1.0 - EDGE, size=2)
            point = self._pin(float(r1), float(r2))
        else:
            posterior = gp_fit(self.samples, self.length_scale)
            cand = candidate_points(self.rng)
            if self.fixed:
                for axis, value in self.fixed.items():
                    cand[:, axis] = value
            point = self._pin(*bo_suggest(posterior, self.rng, self.xi, cand))
            self.suggestions += 1
        self._pending = point
        return point

    def tell(self, objective: float) -> None:
        if self._pending is None:
            raise ValidationError("tell() without a pending ask()")
        r1, r2 = self._pending
        self.samples.append(Sample(r1, r2, objective))
        self._pending = None

    def result(self) -> TuneResult:
        b = _best(self.samples)
        return TuneResult(b.r1, b.r2, b.objective, list(self.samples))


Evaluator = Callable[[float, float], float]


def run_bo(evaluator: Evaluator, budget: int = 16, seed: int = 0, xi: float = XI) -> TuneResult:
    """One uniform random start, then ``budget - 1`` EI-guided evaluations."""
    opt = BayesOptimizer(budget, seed, xi)
    while not opt.done:
        r1, r2 = opt.ask()
        opt.tell(evaluator(r1, r2))
    return opt.result()


def grid_points(k: int = 4) -> list[tuple[float, float]]:
    axis = [(2 * i + 1) / (2 * k) for i in range(k)]
    return [(a, b) for a in axis for b in axis]


def run_grid(evaluator: Evaluator, k: int = 4) -> TuneResult:
    samples = [Sample(a, b, evaluator(a, b)) for a, b in grid_points(k)]
    b = _best(samples)
    return TuneResult(b.r1, b.r2, b.objective, samples)


def run_random(evaluator: Evaluator, budget: int = 16, seed: int = 0) -> TuneResult:
    rng = np.random.default_rng(seed)
    pts = rng.uniform(EDGE, 1.0 - EDGE, size=(budget, 2))
    samples = [Sample(float(a), float(b), evaluator(float(a), float(b))) for a, b in pts]
    b = _best(samples)
    return TuneResult(b.r1, b.r2, b.objective, samples)
