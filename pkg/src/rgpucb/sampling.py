"""Seeded random streams and the distribution machinery used by the optimiser.

Gamma variates are generated with the Marsaglia-Tsang squeeze method
(shape >= 1) and the ``Gamma(a + 1) * U**(1/a)`` boost for shape < 1.
The inverse CDF solves ``P(shape, x / scale) = p`` with a safeguarded
Newton iteration on a series / continued-fraction evaluation of the
regularised incomplete gamma function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

_MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def split_seed(base_seed: int, stream_index: int) -> int:
    """Seed of stream ``stream_index`` derived from ``base_seed``.

    Repeat ``r`` uses ``base_seed XOR (r * 0x9E3779B97F4A7C15)`` reduced
    to 64 bits.
    """
    return (int(base_seed) ^ ((int(stream_index) * GOLDEN_GAMMA) & _MASK64)) & _MASK64


class RngStream:
    """A deterministic random stream keyed by a 64-bit seed.

    Backed by numpy's counter-based Philox generator.  Two streams built
    from the same seed produce identical sequences.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if seed < 0:
            seed &= _MASK64
        if seed > _MASK64:
            raise InvalidInputError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self.generator = np.random.Generator(np.random.Philox(key=seed))

    @classmethod
    def derive(cls, base_seed: int, stream_index: int) -> "RngStream":
        return cls(split_seed(base_seed, stream_index))

    def spawn(self, index: int) -> "RngStream":
        """Independent child stream, a pure function of (seed, index)."""
        return RngStream(split_seed(self.seed ^ 0xD1B54A32D192ED03, index + 1))

    def uniform(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed:#x})"


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution with ``shape`` (kappa) and ``scale`` (theta)."""

    shape: float
    scale: float

    def validate(self) -> None:
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise InvalidParameterError(f"gamma shape must be positive and finite, got {self.shape}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParameterError(f"gamma scale must be positive and finite, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2


def normal_sample(rng: RngStream, size=None):
    """Standard normal variate(s)."""
    return rng.normal(size)


def _marsaglia_tsang(shape: float, n: int, rng: RngStream) -> np.ndarray:
    # Unit-scale Gamma(shape) for shape >= 1.
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        m = todo.size
        z = rng.normal(m)
        u = rng.uniform(m)
        v = 1.0 + c * z
        ok = v > 0
        v = np.where(ok, v, 1.0) ** 3
        squeeze = u < 1.0 - 0.0331 * z**4
        with np.errstate(divide="ignore", invalid="ignore"):
            full = np.log(u) < 0.5 * z**2 + d * (1.0 - v + np.log(v))
        accept = ok & (squeeze | full)
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    return out


def gamma_sample(params: GammaParams, rng: RngStream, size=None):
    """Draw Gamma(shape, scale) variates; strictly positive.

    Returns a float when ``size`` is None, otherwise an array.
    """
    params.validate()
    n = 1 if size is None else int(np.prod(size))
    if params.shape >= 1.0:
        g = _marsaglia_tsang(params.shape, n, rng)
    else:
        g = _marsaglia_tsang(params.shape + 1.0, n, rng)
        u = rng.uniform(n)
        # log-space keeps tiny shapes from underflowing straight to zero
        with np.errstate(divide="ignore"):
            g = np.exp(np.log(g) + np.log(u) / params.shape)
        g = np.maximum(g, np.finfo(float).tiny)
    g = g * params.scale
    if size is None:
        return float(g[0])
    return g.reshape(size)


# -- regularised incomplete gamma -------------------------------------------

_EPS = 1e-16
_FPMIN = 1e-300


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by its power series; converges fast for x < a + 1.
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz evaluation of the continued fraction.
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma(a: float, x: float) -> tuple[float, float]:
    """Return ``(P(a, x), Q(a, x))``, the regularised lower/upper incomplete
    gamma functions."""
    if a <= 0:
        raise InvalidParameterError(f"shape must be positive, got {a}")
    if x <= 0:
        return 0.0, 1.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_cont_frac(a, x)
    return 1.0 - q, q


def gamma_cdf(x: float, params: GammaParams) -> float:
    params.validate()
    return regularized_gamma(params.shape, x / params.scale)[0]


def gamma_inverse_cdf(p: float, params: GammaParams) -> float:
    """Quantile function of Gamma(shape, scale) for ``0 <= p < 1``."""
    params.validate()
    if not (0.0 <= p < 1.0) or math.isnan(p):
        raise InvalidInputError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    a = params.shape
    q = 1.0 - p
    upper = p > 0.5

    def residual(x):
        lo_tail, hi_tail = regularized_gamma(a, x)
        # work in whichever tail keeps the target away from 1
        return (q - hi_tail) if upper else (lo_tail - p)

    log_norm = math.lgamma(a)

    def density(x):
        return math.exp(min((a - 1.0) * math.log(x) - x - log_norm, 700.0))

    # bracket the root in unit-scale coordinates
    lo, hi = 0.0, max(a, 1.0)
    while residual(hi) < 0.0:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            break
    x = _initial_guess(a, p)
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(2000):
        if x <= 0.0:
            # quantile lies below the smallest representable double
            return 0.0
        r = residual(x)
        if r == 0.0:
            break
        if r < 0.0:
            lo = x
        else:
            hi = x
        dens = density(x)
        x_new = x - r / dens if dens > 0.0 else math.nan
        if not (lo < x_new < hi):
            # Newton left the bracket: bisect, geometrically when it spans decades
            if lo == 0.0:
                x_new = hi * 0.01
            elif hi > 10.0 * lo:
                x_new = math.sqrt(lo * hi)
            else:
                x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * x:
            x = x_new
            break
        x = x_new
    return x * params.scale


def _initial_guess(a: float, p: float) -> float:
    # Wilson-Hilferty for moderate shapes, small-x asymptote otherwise.
    if a >= 1.0:
        from statistics import NormalDist

        z = NormalDist().inv_cdf(p)
        t = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * math.sqrt(a))
        return max(a * t**3, 1e-3)
    return math.exp((math.log(p) + math.lgamma(a + 1.0)) / a)


# -- designs ----------------------------------------------------------------


def as_bounds(bounds) -> np.ndarray:
    """Validate a box given as a sequence of ``(lower, upper)`` pairs and
    return it as a ``(d, 2)`` array."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] == 0:
        raise InvalidInputError("bounds must be a non-empty sequence of (lower, upper) pairs")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("bounds must be finite")
    if np.any(b[:, 0] >= b[:, 1]):
        bad = int(np.argmax(b[:, 0] >= b[:, 1]))
        raise InvalidInputError(f"degenerate bounds in dimension {bad}: lower >= upper")
    return b


def latin_hypercube(n: int, bounds, rng: RngStream) -> np.ndarray:
    """Jittered Latin hypercube design of ``n`` points in ``bounds``.

    Each dimension is cut into ``n`` equal strata and every stratum holds
    exactly one point, placed uniformly at random inside it.
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    b = as_bounds(bounds)
    d = b.shape[0]
    unit = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        u = (strata + rng.uniform(n)) / n
        # (k + u) / n may round onto the next stratum edge when u is near 1
        unit[:, j] = np.minimum(u, np.nextafter((strata + 1) / n, 0.0))
    return b[:, 0] + unit * (b[:, 1] - b[:, 0])
