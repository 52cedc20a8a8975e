"""Synthetic test objectives, all in the maximisation convention.

Formulas and domains follow the Virtual Library of Simulation Experiments
(sfu.ca/~ssurjano).  Functions that are normally minimised are negated so
that larger is always better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .sampling import RngStream, as_bounds

# Per-coordinate maximiser of sqrt(x) * sin(x) on [0, 10]; solves
# tan(x) = -2x near 7.9.
_ALPINE2_ARGMAX = 7.917052684666
NOISE_FRACTION = 0.01
_NOISE_PROBES = 10_000
_NOISE_SEED = 0


def dropwave(x: np.ndarray) -> np.ndarray:
    r2 = np.sum(x**2, axis=-1)
    return (1.0 + np.cos(12.0 * np.sqrt(r2))) / (0.5 * r2 + 2.0)


def sphere(x: np.ndarray) -> np.ndarray:
    return -np.sum(x**2, axis=-1)


def alpine2(x: np.ndarray) -> np.ndarray:
    return np.prod(np.sqrt(x) * np.sin(x), axis=-1)


def ackley(x: np.ndarray, a: float = 20.0, b: float = 0.2, c: float = 2 * math.pi) -> np.ndarray:
    d = x.shape[-1]
    s1 = np.sqrt(np.sum(x**2, axis=-1) / d)
    s2 = np.sum(np.cos(c * x), axis=-1) / d
    return a * np.exp(-b * s1) + np.exp(s2) - a - math.e


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    dimension: int
    bounds: np.ndarray
    objective: Callable[[np.ndarray], np.ndarray]
    optimum_value: float
    optimum_point: Optional[np.ndarray]
    noise_std: float

    def with_noise(self, noise_std: float) -> "BenchmarkProblem":
        if not (noise_std >= 0 and math.isfinite(noise_std)):
            raise InvalidInputError(f"noise_std must be non-negative, got {noise_std}")
        return replace(self, noise_std=float(noise_std))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.bounds[:, 1] - self.bounds[:, 0]))


@dataclass(frozen=True)
class NoisyObservation:
    x: np.ndarray
    y: float


# name -> (objective, d, per-dimension box, optimum coordinate, exact optimum or None)
_REGISTRY = {
    "dropwave": (dropwave, 2, (-5.12, 5.12), 0.0, 1.0),
    "sphere": (sphere, 4, (-5.12, 5.12), 0.0, 0.0),
    "alpine2": (alpine2, 5, (0.0, 10.0), _ALPINE2_ARGMAX, None),
    "ackley": (ackley, 5, (-32.768, 32.768), 0.0, 0.0),
}

PROBLEM_NAMES = tuple(_REGISTRY)


def default_noise_std(objective, bounds: np.ndarray, optimum_value: float) -> float:
    """One percent of the gap between the optimum and the median value of
    the objective over uniform random points (fixed seed)."""
    rng = RngStream(_NOISE_SEED)
    u = rng.uniform((_NOISE_PROBES, bounds.shape[0]))
    pts = bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])
    median = float(np.median(objective(pts)))
    return NOISE_FRACTION * abs(optimum_value - median)


def make_problem(name: str, noise_std: Optional[float] = None) -> BenchmarkProblem:
    """Build one of ``dropwave``, ``sphere``, ``alpine2``, ``ackley``."""
    key = str(name).lower()
    if key not in _REGISTRY:
        raise InvalidInputError(
            f"unknown problem {name!r}; valid names: {', '.join(PROBLEM_NAMES)}"
        )
    fn, d, (lo, hi), opt_coord, exact = _REGISTRY[key]
    bounds = as_bounds([(lo, hi)] * d)
    opt_x = np.full(d, opt_coord)
    opt_val = float(fn(opt_x)) if exact is None else exact
    if noise_std is None:
        noise_std = default_noise_std(fn, bounds, opt_val)
    return BenchmarkProblem(key, d, bounds, fn, opt_val, opt_x, 0.0).with_noise(noise_std)


def _check_inside(problem: BenchmarkProblem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != problem.dimension:
        raise InvalidInputError(
            f"{problem.name} expects {problem.dimension} coordinates, got {x.shape[-1]}"
        )
    if np.any(x < problem.bounds[:, 0]) or np.any(x > problem.bounds[:, 1]):
        raise InvalidInputError(f"point {x.tolist()} lies outside the {problem.name} domain")
    return x


def evaluate(problem: BenchmarkProblem, x) -> float:
    """Noiseless objective value at ``x``."""
    x = _check_inside(problem, x)
    return float(problem.objective(x))


def evaluate_many(problem: BenchmarkProblem, xs) -> np.ndarray:
    xs = _check_inside(problem, np.atleast_2d(xs))
    return problem.objective(xs)


def noisy_evaluate(problem: BenchmarkProblem, x, rng: RngStream) -> NoisyObservation:
    """``f(x)`` plus Gaussian noise with the problem's ``noise_std``."""
    f = evaluate(problem, x)
    eps = float(rng.normal())
    return NoisyObservation(np.asarray(x, dtype=float), f + problem.noise_std * eps)
