"""Gaussian-process regression with a unit-amplitude squared-exponential kernel.

The prior has zero mean and ``k(x, x) = 1``; observations are assumed to be
standardised by the caller.  A fitted :class:`GpModel` is immutable, so one
model may serve any number of posterior queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf
from scipy.spatial.distance import cdist

from .errors import IllConditionedKernelError, InternalConsistencyError, InvalidInputError
from .sampling import RngStream

JITTER_START = 1e-10
JITTER_MAX = 1e-4
NEGATIVE_VARIANCE_TOL = 1e-6


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float
    noise_std: float = 0.0

    def __post_init__(self):
        if not (self.lengthscale > 0 and math.isfinite(self.lengthscale)):
            raise InvalidInputError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (self.noise_std >= 0 and math.isfinite(self.noise_std)):
            raise InvalidInputError(f"noise_std must be non-negative, got {self.noise_std}")


@dataclass(frozen=True)
class Dataset:
    """Observed pairs ``(x_i, y_i)``; ``points`` is ``(n, d)``."""

    points: np.ndarray
    values: np.ndarray
    dimension: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dimension)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if self.dimension < 1:
            raise InvalidInputError("dimension must be >= 1")
        if pts.shape[0] != vals.shape[0]:
            raise InvalidInputError(
                f"{pts.shape[0]} points but {vals.shape[0]} values"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def empty(cls, dimension: int) -> "Dataset":
        return cls(np.empty((0, dimension)), np.empty(0), dimension)

    def __len__(self):
        return self.values.shape[0]

    def append(self, x, y) -> "Dataset":
        x = _as_point(x, self.dimension)
        return Dataset(
            np.vstack([self.points, x[None, :]]), np.append(self.values, float(y)), self.dimension
        )

    def with_values(self, values) -> "Dataset":
        return Dataset(self.points, values, self.dimension)


@dataclass(frozen=True)
class PosteriorMoments:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class GpModel:
    params: KernelParams
    data: Dataset
    chol: np.ndarray
    # (K + noise I)^{-1} y, cached for the posterior mean
    alpha: np.ndarray = field(repr=False)
    # inverse of chol; turns batched variance queries into one matrix product
    chol_inv: np.ndarray = field(repr=False, default=None)

    @property
    def dimension(self) -> int:
        return self.data.dimension


def _as_point(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != d:
        raise InvalidInputError(f"expected a {d}-dimensional point, got {x.shape[0]} coordinates")
    return x


def _as_points(xs, d: int) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, d) if d > 1 or xs.size == 0 else xs[:, None]
    if xs.ndim != 2 or xs.shape[1] != d:
        raise InvalidInputError(f"expected points of dimension {d}, got array of shape {xs.shape}")
    return xs


def se_kernel(xi, xj, params: KernelParams) -> float:
    """Squared-exponential covariance ``exp(-|xi - xj|^2 / (2 l^2))``."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    xj = np.asarray(xj, dtype=float).reshape(-1)
    if xi.shape != xj.shape:
        raise InvalidInputError(f"dimension mismatch: {xi.shape[0]} vs {xj.shape[0]}")
    sq = float(np.sum((xi - xj) ** 2))
    return math.exp(-sq / (2.0 * params.lengthscale**2))


def kernel_matrix(a: np.ndarray, b: np.ndarray, lengthscale: float) -> np.ndarray:
    """Cross-covariance matrix ``K[i, j] = k(a_i, b_j)``."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.empty((a.shape[0], b.shape[0]))
    sq = cdist(a, b, "sqeuclidean")
    return np.exp(-sq / (2.0 * lengthscale**2))


def fit(data: Dataset, params: KernelParams) -> GpModel:
    """Factorise ``K + noise^2 I`` for the observed points.

    Raises :class:`IllConditionedKernelError` naming the first failing pivot
    when the matrix is not numerically positive definite.
    """
    n = len(data)
    if n == 0:
        return GpModel(params, data, np.empty((0, 0)), np.empty(0), np.empty((0, 0)))
    k = kernel_matrix(data.points, data.points, params.lengthscale)
    k[np.diag_indices(n)] += params.noise_std**2
    chol, info = dpotrf(k, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise IllConditionedKernelError(
            f"kernel matrix not positive definite: pivot {info - 1} is non-positive",
            pivot=info - 1,
        )
    if info < 0:  # pragma: no cover - LAPACK argument error
        raise RuntimeError(f"dpotrf argument error {info}")
    diag = np.diag(chol)
    if not np.all(diag > 0):
        bad = int(np.argmin(diag > 0))
        raise IllConditionedKernelError(f"non-positive pivot {bad}", pivot=bad)
    alpha = solve_triangular(chol, data.values, lower=True)
    alpha = solve_triangular(chol, alpha, lower=True, trans="T")
    chol_inv = solve_triangular(chol, np.eye(n), lower=True)
    return GpModel(params, data, chol, alpha, chol_inv)


def _check_variance(var: np.ndarray) -> np.ndarray:
    if var.size and var.min() < -NEGATIVE_VARIANCE_TOL:
        raise InternalConsistencyError(f"posterior variance {var.min():.3e} is negative")
    return np.clip(var, 0.0, 1.0)


def posterior_batch(model: GpModel, xs) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at the rows of ``xs``."""
    xs = _as_points(xs, model.dimension)
    if len(model.data) == 0:
        return np.zeros(xs.shape[0]), np.ones(xs.shape[0])
    ks = kernel_matrix(model.data.points, xs, model.params.lengthscale)
    mean = ks.T @ model.alpha
    v = model.chol_inv @ ks
    var = 1.0 - np.einsum("ij,ij->j", v, v)
    return mean, _check_variance(var)


def posterior(model: GpModel, x) -> PosteriorMoments:
    """Posterior mean and variance at a single point."""
    x = _as_point(x, model.dimension)
    mean, var = posterior_batch(model, x[None, :])
    return PosteriorMoments(float(mean[0]), float(var[0]))


def posterior_covariance(model: GpModel, xs) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean vector and full covariance matrix over ``xs``."""
    xs = _as_points(xs, model.dimension)
    prior = kernel_matrix(xs, xs, model.params.lengthscale)
    if len(model.data) == 0:
        return np.zeros(xs.shape[0]), prior
    ks = kernel_matrix(model.data.points, xs, model.params.lengthscale)
    v = solve_triangular(model.chol, ks, lower=True, check_finite=False)
    return ks.T @ model.alpha, prior - v.T @ v


def jittered_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of ``cov``, adding 1e-10, 1e-9, ..., 1e-4 to the
    diagonal until the factorisation succeeds."""
    n = cov.shape[0]
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        c = cov.copy()
        c[np.diag_indices(n)] += jitter
        chol, info = dpotrf(c, lower=1, clean=1)
        if info == 0:
            return chol
        last_pivot = info - 1
        jitter *= 10.0
    raise IllConditionedKernelError(
        f"posterior covariance not positive definite even with jitter {JITTER_MAX:g} "
        f"(pivot {last_pivot})",
        pivot=last_pivot,
    )


def joint_posterior_draw(model: GpModel, candidates, rng: RngStream) -> np.ndarray:
    """One joint sample of f over the candidate set from the posterior."""
    xs = _as_points(candidates, model.dimension)
    if xs.shape[0] == 0:
        raise InvalidInputError("candidate set is empty")
    mean, cov = posterior_covariance(model, xs)
    chol = jittered_cholesky(cov)
    return mean + chol @ rng.normal(xs.shape[0])
