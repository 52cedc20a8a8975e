"""Acquisition functions, exploration schedules and the inner maximiser.

RGP-UCB draws its exploration weight each iteration as
``beta_t ~ Gamma(kappa_t, theta)`` with
``kappa_t = ln((t^2 + 1) / sqrt(2 pi)) / ln(1 + theta / 2)``, then scores
points with the usual ``mu + sqrt(beta_t) * sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from . import gp
from .errors import InvalidParameterError
from .sampling import GammaParams, RngStream, as_bounds, gamma_sample

SQRT_2PI = math.sqrt(2.0 * math.pi)
SHAPE_FLOOR = 1e-3
LINE_SEARCH_DOUBLINGS = 4


@dataclass(frozen=True)
class GammaBetaSchedule:
    theta: float
    shape_floor: float = SHAPE_FLOOR

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise InvalidParameterError(f"theta must be positive, got {self.theta}")
        if not self.shape_floor > 0:
            raise InvalidParameterError(f"shape_floor must be positive, got {self.shape_floor}")


@dataclass(frozen=True)
class SrinivasBetaParams:
    delta: float = 0.1
    a: float = 1.0
    b: float = 1.0
    r: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise InvalidParameterError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("a", "b", "r"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d < 1:
            raise InvalidParameterError(f"d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class AcquisitionChoice:
    point: np.ndarray
    acquisition_value: float
    beta_used: Optional[float] = None
    sigma_at_choice: Optional[float] = None


@dataclass(frozen=True)
class MaximizerBudget:
    """Inner-optimiser effort.  ``None`` fields take dimension-dependent
    defaults: ``1000 * d`` probes and ``tol_x = 1e-4 * box diagonal``."""

    n_probe: Optional[int] = None
    n_start: int = 10
    tol_x: Optional[float] = None
    max_rounds: int = 10_000

    def resolve(self, bounds: np.ndarray) -> tuple[int, int, float]:
        d = bounds.shape[0]
        diag = float(np.linalg.norm(bounds[:, 1] - bounds[:, 0]))
        n_probe = 1000 * d if self.n_probe is None else int(self.n_probe)
        tol = 1e-4 * diag if self.tol_x is None else float(self.tol_x)
        return max(n_probe, 1), max(int(self.n_start), 1), tol


# -- exploration weights ----------------------------------------------------


def kappa(t: int, theta: float) -> float:
    """Gamma shape for iteration ``t`` (unclamped; negative at t = 1)."""
    return math.log((t * t + 1.0) / SQRT_2PI) / math.log1p(theta / 2.0)


def clamped_kappa(t: int, schedule: GammaBetaSchedule) -> float:
    return max(kappa(t, schedule.theta), schedule.shape_floor)


def rgp_ucb_beta(t: int, schedule: GammaBetaSchedule, rng: RngStream) -> float:
    """Draw ``beta_t ~ Gamma(max(kappa_t, floor), theta)``."""
    if t < 1:
        raise InvalidParameterError(f"t must be >= 1, got {t}")
    return gamma_sample(GammaParams(clamped_kappa(t, schedule), schedule.theta), rng)


def srinivas_beta(t: int, params: SrinivasBetaParams) -> float:
    """Deterministic GP-UCB weight for a continuous d-dimensional box."""
    if t < 1:
        raise InvalidParameterError(f"t must be >= 1, got {t}")
    p = params
    inner = math.log(4.0 * p.d * p.a / p.delta)
    if inner <= 0.0:
        raise InvalidParameterError(
            f"ln(4 d a / delta) = {inner:.4g} <= 0; the square root is undefined"
        )
    first = 2.0 * math.log(t * t * math.pi**2 / (3.0 * p.delta))
    second = 2.0 * p.d * math.log(t * t * p.d * p.b * p.r * math.sqrt(inner))
    total = first + second
    if not total > 0.0:
        raise InvalidParameterError(
            f"beta_t = {total:.4g} is not positive for these (delta, a, b, r, d)"
        )
    return total


# -- acquisition values -------------------------------------------------------


def ucb_value(moments: gp.PosteriorMoments, beta: float) -> float:
    return moments.mean + math.sqrt(beta) * math.sqrt(moments.variance)


def ucb_values(mean: np.ndarray, variance: np.ndarray, beta: float) -> np.ndarray:
    return mean + math.sqrt(beta) * np.sqrt(variance)


def ei_values(mean: np.ndarray, std: np.ndarray, incumbent: float) -> np.ndarray:
    """Closed-form expected improvement over ``incumbent`` (maximisation)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gap = mean - incumbent
    out = np.maximum(gap, 0.0)
    pos = std > 0
    if np.any(pos):
        z = gap[pos] / std[pos]
        pdf = np.exp(-0.5 * z * z) / SQRT_2PI
        out[pos] = np.maximum(gap[pos] * ndtr(z) + std[pos] * pdf, 0.0)
    return out


def ei_value(moments: gp.PosteriorMoments, incumbent: float) -> float:
    return float(ei_values(np.array([moments.mean]), np.array([moments.std]), incumbent)[0])


# -- selection ------------------------------------------------------------------


def maximize_acquisition(
    surface: Callable[[np.ndarray], np.ndarray],
    bounds,
    rng: RngStream,
    budget: MaximizerBudget = MaximizerBudget(),
) -> AcquisitionChoice:
    """Multi-start maximisation of a vectorised ``surface`` over a box.

    ``surface`` maps an ``(n, d)`` array to ``n`` values.  Uniform probes
    seed a bounded coordinate search from the best ``n_start`` probes: each
    round tries +/- one step along every axis, then line-searches along the
    winning axis by doubling.  The step halves whenever no axis move
    improves and the search stops once it falls below ``tol_x``.
    """
    b = as_bounds(bounds)
    lo, hi = b[:, 0], b[:, 1]
    width = hi - lo
    d = b.shape[0]
    n_probe, n_start, tol_x = budget.resolve(b)

    probes = lo + rng.uniform((n_probe, d)) * width
    pvals = np.asarray(surface(probes), dtype=float)
    order = np.argsort(-pvals, kind="stable")
    starts = order[: min(n_start, n_probe)]

    x = probes[starts].copy()
    fx = pvals[starts].copy()
    step = np.full(x.shape[0], 0.1)
    active = np.ones(x.shape[0], dtype=bool)
    eye = np.eye(d)
    moves = np.concatenate([eye, -eye])  # (2d, d)
    stretch = 2.0 ** np.arange(1, LINE_SEARCH_DOUBLINGS + 1)
    for _ in range(budget.max_rounds):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        m = idx.size
        delta = step[idx, None, None] * moves[None, :, :] * width  # (m, 2d, d)
        cand = np.clip(x[idx, None, :] + delta, lo, hi)
        cvals = np.asarray(surface(cand.reshape(-1, d)), dtype=float).reshape(m, 2 * d)
        best = np.argmax(cvals, axis=1)
        bval = cvals[np.arange(m), best]
        better = bval > fx[idx]
        down = idx[~better]
        step[down] *= 0.5
        active[down] = step[down] * width.max() >= tol_x
        if not np.any(better):
            continue
        # line search: keep doubling along the winning axis while it pays
        up = idx[better]
        direction = delta[better, best[better]]  # (k, d)
        base = x[up]
        ray = np.clip(base[:, None, :] + stretch[None, :, None] * direction[:, None, :], lo, hi)
        rvals = np.asarray(surface(ray.reshape(-1, d)), dtype=float).reshape(up.size, -1)
        ray_pts = np.concatenate([cand[better, best[better]][:, None, :], ray], axis=1)
        ray_vals = np.concatenate([bval[better][:, None], rvals], axis=1)
        j = np.argmax(ray_vals, axis=1)
        x[up] = ray_pts[np.arange(up.size), j]
        fx[up] = ray_vals[np.arange(up.size), j]

    # best of probes and refined starts; earliest index wins ties
    all_x = np.vstack([probes, x])
    all_f = np.concatenate([pvals, fx])
    k = int(np.argmax(all_f))
    point = np.clip(all_x[k], lo, hi)
    value = float(np.asarray(surface(point[None, :]), dtype=float)[0])
    return AcquisitionChoice(point, value)


def ucb_select(model: gp.GpModel, beta: float, bounds, rng: RngStream,
               budget: MaximizerBudget = MaximizerBudget()) -> AcquisitionChoice:
    def surface(xs):
        mean, var = gp.posterior_batch(model, xs)
        return ucb_values(mean, var, beta)

    choice = maximize_acquisition(surface, bounds, rng, budget)
    sigma = gp.posterior(model, choice.point).std
    return AcquisitionChoice(choice.point, choice.acquisition_value, beta, sigma)


def ei_select(model: gp.GpModel, incumbent: float, bounds, rng: RngStream,
              budget: MaximizerBudget = MaximizerBudget()) -> AcquisitionChoice:
    def surface(xs):
        mean, var = gp.posterior_batch(model, xs)
        return ei_values(mean, np.sqrt(var), incumbent)

    choice = maximize_acquisition(surface, bounds, rng, budget)
    sigma = gp.posterior(model, choice.point).std
    return AcquisitionChoice(choice.point, choice.acquisition_value, None, sigma)


def thompson_candidate_count(d: int) -> int:
    return min(2048, 512 * d)


def thompson_select(model: gp.GpModel, candidates, rng: RngStream) -> AcquisitionChoice:
    """Argmax of one joint posterior draw over ``candidates``."""
    cands = np.asarray(candidates, dtype=float).reshape(-1, model.dimension)
    draw = gp.joint_posterior_draw(model, cands, rng)
    k = int(np.argmax(draw))
    sigma = gp.posterior(model, cands[k]).std
    return AcquisitionChoice(cands[k].copy(), float(draw[k]), None, sigma)
