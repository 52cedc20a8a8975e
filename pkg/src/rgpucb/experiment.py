"""The Bayesian-optimisation loop, regret bookkeeping and the regret-bound audit.

Every repeat of an experiment owns its own :class:`RngStream`, derived from
``(base_seed, repeat_index)``, so results do not depend on how repeats are
scheduled across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import acquisition as acq
from . import gp
from .benchmarks import BenchmarkProblem, evaluate, noisy_evaluate
from .errors import DegenerateQuantileError, IllConditionedKernelError, InvalidInputError
from .sampling import GammaParams, RngStream, gamma_inverse_cdf, gamma_sample, latin_hypercube

EULER_GAMMA = 0.5772156649
METHODS = ("rgp-ucb", "gp-ucb", "ei", "thompson", "ucb")
# GP noise in standardised units never drops below this
GP_NOISE_FLOOR = 1e-3
# default lengthscale as a fraction of the search-box diagonal
DEFAULT_LENGTHSCALE_FRACTION = 0.1


@dataclass(frozen=True)
class Method:
    """An acquisition strategy and its parameters.

    ``theta`` is used by ``rgp-ucb``; ``delta``, ``a``, ``b``, ``r`` by
    ``gp-ucb`` (``r`` defaults to the longest box side); ``beta`` by the
    fixed-weight ``ucb`` strategy.
    """

    name: str
    theta: Optional[float] = None
    delta: float = 0.1
    a: float = 1.0
    b: float = 1.0
    r: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise InvalidInputError(f"unknown method {self.name!r}; valid: {', '.join(METHODS)}")
        if self.name == "rgp-ucb":
            if self.theta is None:
                raise InvalidInputError("rgp-ucb needs theta")
            acq.GammaBetaSchedule(self.theta)
        if self.name == "ucb" and (self.beta is None or self.beta < 0):
            raise InvalidInputError("ucb needs a non-negative beta")

    def srinivas(self, problem: BenchmarkProblem) -> acq.SrinivasBetaParams:
        side = float(np.max(problem.bounds[:, 1] - problem.bounds[:, 0]))
        r = side if self.r is None else self.r
        return acq.SrinivasBetaParams(self.delta, self.a, self.b, r, problem.dimension)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: BenchmarkProblem
    method: Method
    iterations: Optional[int] = None
    initial_points: Optional[int] = None
    repeats: int = 10
    lengthscale: Optional[float] = None
    noise_std: Optional[float] = None
    base_seed: int = 0
    budget: acq.MaximizerBudget = acq.MaximizerBudget()

    def resolved(self) -> "ExperimentConfig":
        """Copy with every ``None`` default filled in."""
        d = self.problem.dimension
        cfg = replace(
            self,
            iterations=40 * d if self.iterations is None else self.iterations,
            initial_points=3 * d + 1 if self.initial_points is None else self.initial_points,
            lengthscale=DEFAULT_LENGTHSCALE_FRACTION * self.problem.diagonal if self.lengthscale is None else self.lengthscale,
            noise_std=self.problem.noise_std if self.noise_std is None else self.noise_std,
        )
        for key in ("iterations", "initial_points", "repeats"):
            if getattr(cfg, key) < 1:
                raise InvalidInputError(f"{key} must be >= 1, got {getattr(cfg, key)}")
        if not cfg.lengthscale > 0:
            raise InvalidInputError(f"lengthscale must be positive, got {cfg.lengthscale}")
        if not cfg.noise_std >= 0:
            raise InvalidInputError(f"noise_std must be non-negative, got {cfg.noise_std}")
        return replace(cfg, problem=cfg.problem.with_noise(cfg.noise_std))


@dataclass(frozen=True)
class IterationRecord:
    t: int
    x_t: np.ndarray
    y_t: float
    noiseless_f: float
    best_so_far: float
    beta_t: Optional[float]
    kappa_t: Optional[float]
    sigma_at_choice: float


@dataclass(frozen=True)
class RegretTrace:
    per_t_regret: np.ndarray
    cumulative: np.ndarray


@dataclass(frozen=True)
class MgfAudit:
    """Monte-Carlo check of the Gamma moment-generating-function step.

    ``closed_form`` is ``(1 + theta/2)^-kappa``, which equals
    ``E[exp(-beta/2)]``; ``mc_exp_sqrt_beta`` is the quantity the bound's
    derivation actually needs, reported for comparison only.
    """

    kappa: float
    theta: float
    draws: int
    closed_form: float
    mc_exp_beta: float
    mc_exp_sqrt_beta: float

    @property
    def relative_error(self) -> float:
        return abs(self.mc_exp_beta - self.closed_form) / self.closed_form


@dataclass(frozen=True)
class BoundReport:
    """Bayesian-regret bound evaluated on recorded runs.

    The R1 term uses the sum of posterior *variances* at the chosen points;
    an intermediate display of the same bound writes the sum of standard
    deviations instead, which is not what the final bound states.
    """

    T: int
    theta: float
    kappa_T: float
    empirical_bayes_regret: float
    bound_value: float
    r1_term: float
    r2_term: float
    r34_term: float
    expected_max_beta: float
    expected_max_beta_mc: float
    sum_sigma_sq: float
    mgf_audit: Optional[MgfAudit] = None
    repeats: int = 1
    per_repeat_regret: tuple = ()
    per_repeat_bound: tuple = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_repeat_regret"] = list(self.per_repeat_regret)
        out["per_repeat_bound"] = list(self.per_repeat_bound)
        if self.mgf_audit is not None:
            out["mgf_audit"]["relative_error"] = self.mgf_audit.relative_error
        out["holds"] = bool(self.empirical_bayes_regret <= self.bound_value)
        return out


@dataclass(frozen=True)
class Aggregate:
    mean: np.ndarray
    std: np.ndarray

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_std(self) -> float:
        return float(self.std[-1])

    @property
    def summary(self) -> str:
        return format_summary(self.final_mean, self.final_std)


def format_summary(mean: float, std: float) -> str:
    return f"{mean:.3g} ± {std:.2g}"


# -- the BO loop --------------------------------------------------------------


def _standardise(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mu = float(np.mean(y))
    sd = float(np.std(y))
    if not sd > 1e-12:
        sd = 1.0
    return (y - mu) / sd, mu, sd


def bo_loop(config: ExperimentConfig, repeat_index: int) -> list[IterationRecord]:
    """Run one repeat and return a record per post-design iteration.

    The GP is refitted from scratch on standardised observations at every
    step.  ``t`` is the number of observations the GP was built on, which
    is also the index used for the RGP-UCB Gamma shape.
    """
    cfg = config.resolved()
    problem, method = cfg.problem, cfg.method
    root = RngStream.derive(cfg.base_seed, repeat_index)
    design_rng, noise_rng, beta_rng, search_rng = (root.spawn(i) for i in range(4))

    X = latin_hypercube(cfg.initial_points, problem.bounds, design_rng)
    y = [noisy_evaluate(problem, x, noise_rng).y for x in X]
    X = list(X)
    best = max(y)

    schedule = acq.GammaBetaSchedule(method.theta) if method.name == "rgp-ucb" else None
    srinivas = method.srinivas(problem) if method.name == "gp-ucb" else None

    records = []
    for _ in range(cfg.iterations):
        t = len(y)
        ys, _, sd = _standardise(np.asarray(y))
        params = gp.KernelParams(cfg.lengthscale, max(cfg.noise_std / sd, GP_NOISE_FLOOR))
        try:
            model = gp.fit(gp.Dataset(np.asarray(X), ys, problem.dimension), params)
        except IllConditionedKernelError as err:
            raise IllConditionedKernelError(f"iteration t={t}: {err}", err.pivot, t) from err

        kappa_t = None
        if method.name == "rgp-ucb":
            kappa_t = acq.clamped_kappa(t, schedule)
            beta = acq.rgp_ucb_beta(t, schedule, beta_rng)
            choice = acq.ucb_select(model, beta, problem.bounds, search_rng, cfg.budget)
        elif method.name == "gp-ucb":
            beta = acq.srinivas_beta(t, srinivas)
            choice = acq.ucb_select(model, beta, problem.bounds, search_rng, cfg.budget)
        elif method.name == "ucb":
            choice = acq.ucb_select(model, method.beta, problem.bounds, search_rng, cfg.budget)
        elif method.name == "ei":
            choice = acq.ei_select(model, float(ys.max()), problem.bounds, search_rng, cfg.budget)
        else:
            n_cand = acq.thompson_candidate_count(problem.dimension)
            cands = latin_hypercube(n_cand, problem.bounds, search_rng)
            choice = acq.thompson_select(model, cands, search_rng)

        obs = noisy_evaluate(problem, choice.point, noise_rng)
        X.append(choice.point)
        y.append(obs.y)
        best = max(best, obs.y)
        records.append(
            IterationRecord(
                t=t,
                x_t=choice.point,
                y_t=obs.y,
                noiseless_f=evaluate(problem, choice.point),
                best_so_far=best,
                beta_t=choice.beta_used,
                kappa_t=kappa_t,
                sigma_at_choice=float(choice.sigma_at_choice),
            )
        )
    return records


class RunFailure(RuntimeError):
    """A repeat failed; the message carries the repeat index."""


def _run_one(args):
    config, r = args
    try:
        return bo_loop(config, r)
    except Exception as err:
        raise RunFailure(f"repeat {r}: {type(err).__name__}: {err}") from err


def run_repeats(config: ExperimentConfig, jobs: int = 1) -> list[list[IterationRecord]]:
    """All repeats of ``config`` in repeat order, optionally in parallel."""
    cfg = config.resolved()
    tasks = [(cfg, r) for r in range(cfg.repeats)]
    if jobs <= 1 or cfg.repeats == 1:
        return [_run_one(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, cfg.repeats)) as pool:
        return list(pool.map(_run_one, tasks))


# -- regret -------------------------------------------------------------------


def cumulative_regret(records: Sequence[IterationRecord], optimum: float) -> RegretTrace:
    if len(records) == 0:
        raise InvalidInputError("records must be non-empty")
    per_t = np.array([optimum - r.noiseless_f for r in records])
    return RegretTrace(per_t, np.cumsum(per_t))


def bayes_regret_estimate(traces: Sequence[RegretTrace]) -> np.ndarray:
    """Pointwise mean of cumulative regret over repeats."""
    if len(traces) == 0:
        raise InvalidInputError("need at least one trace")
    lengths = {len(tr.cumulative) for tr in traces}
    if len(lengths) != 1:
        raise InvalidInputError(f"traces have different lengths: {sorted(lengths)}")
    return np.mean(np.vstack([tr.cumulative for tr in traces]), axis=0)


def aggregate(traces) -> Aggregate:
    """Per-iteration mean and population std of ``best_so_far`` over repeats.

    Accepts lists of :class:`IterationRecord` or plain sequences of values.
    """
    rows = []
    for tr in traces:
        rows.append([r.best_so_far if isinstance(r, IterationRecord) else float(r) for r in tr])
    if not rows:
        raise InvalidInputError("need at least one trace")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise InvalidInputError(f"traces have different lengths: {sorted(lengths)}")
    arr = np.asarray(rows, dtype=float)
    return Aggregate(arr.mean(axis=0), arr.std(axis=0))


# -- regret bound ---------------------------------------------------------------


def expected_max_beta(T: int, kappa: float, theta: float) -> float:
    """Approximate ``E[max_{t<=T} beta_t]`` for Gamma(kappa, theta) draws:
    ``[1 + (kappa - 1) / q] * gamma_E + q`` with ``q = F^-1(1 - 1/T)``."""
    if T < 2:
        raise InvalidInputError(f"T must be >= 2, got {T}")
    q = gamma_inverse_cdf(1.0 - 1.0 / T, GammaParams(kappa, theta))
    if q == 0.0:
        raise DegenerateQuantileError(
            f"F^-1(1 - 1/{T}) is zero for Gamma({kappa:g}, {theta:g})"
        )
    return (1.0 + (kappa - 1.0) / q) * EULER_GAMMA + q


def expected_max_beta_mc(T: int, kappa: float, theta: float, rng: RngStream,
                         samples: int = 20_000) -> float:
    """Monte-Carlo ``E[max of T iid Gamma(kappa, theta)]``."""
    draws = gamma_sample(GammaParams(kappa, theta), rng, size=(samples, T))
    return float(draws.max(axis=1).mean())


def mgf_audit(kappa: float, theta: float, rng: RngStream, draws: int = 1_000_000) -> MgfAudit:
    beta = gamma_sample(GammaParams(kappa, theta), rng, size=draws)
    return MgfAudit(
        kappa=kappa,
        theta=theta,
        draws=draws,
        closed_form=(1.0 + theta / 2.0) ** (-kappa),
        mc_exp_beta=float(np.mean(np.exp(-beta / 2.0))),
        mc_exp_sqrt_beta=float(np.mean(np.exp(-np.sqrt(beta) / 2.0))),
    )


def r2_series(T: int) -> float:
    return math.fsum(1.0 / (t * t + 1.0) for t in range(1, T + 1))


def theorem3_bound(
    records: Sequence[IterationRecord],
    theta: float,
    T: Optional[int] = None,
    *,
    empirical: float = math.nan,
    rng: Optional[RngStream] = None,
    mgf_draws: int = 1_000_000,
) -> BoundReport:
    """Evaluate the Bayesian-regret bound for one run.

    The Gamma shape in the expected-maximum term is the largest one used,
    ``kappa_T`` (clamped to the schedule floor).
    """
    T = len(records) if T is None else T
    if T != len(records):
        raise InvalidInputError(f"T={T} but {len(records)} records supplied")
    t_max = max([T] + [r.t for r in records])
    kap = acq.clamped_kappa(t_max, acq.GammaBetaSchedule(theta))
    e_max = expected_max_beta(T, kap, theta)
    sum_sig2 = math.fsum(r.sigma_at_choice**2 for r in records)
    r1 = math.sqrt(e_max) * math.sqrt(T * sum_sig2)
    r2 = r2_series(T)
    r34 = math.pi**2 / 6.0
    rng = RngStream(0x5EED) if rng is None else rng
    audit = mgf_audit(kap, theta, rng.spawn(0), mgf_draws) if mgf_draws else None
    mc_max = expected_max_beta_mc(T, kap, theta, rng.spawn(1)) if mgf_draws else math.nan
    return BoundReport(
        T=T,
        theta=theta,
        kappa_T=kap,
        empirical_bayes_regret=empirical,
        bound_value=r1 + r2 + r34,
        r1_term=r1,
        r2_term=r2,
        r34_term=r34,
        expected_max_beta=e_max,
        expected_max_beta_mc=mc_max,
        sum_sigma_sq=sum_sig2,
        mgf_audit=audit,
    )


def prior_grid(grid_size: int, dimension: int = 1) -> np.ndarray:
    """Equally spaced grid on the unit interval or unit square."""
    if dimension == 1:
        return np.linspace(0.0, 1.0, grid_size)[:, None]
    if dimension == 2:
        m = int(round(math.sqrt(grid_size)))
        if m * m != grid_size:
            raise InvalidInputError(f"a 2-D grid needs a square number of points, got {grid_size}")
        g = np.linspace(0.0, 1.0, m)
        return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    raise InvalidInputError(f"grid dimension must be 1 or 2, got {dimension}")


def prior_function_check(
    lengthscale: float,
    grid_size: int,
    T: int,
    theta: float,
    repeats: int,
    rng: RngStream,
    *,
    noise_std: float = 0.01,
    dimension: int = 1,
) -> BoundReport:
    """Run RGP-UCB on functions drawn from the GP prior over a grid and
    compare the mean cumulative regret with the bound.

    Iteration ``t`` (1-based) builds its GP on ``t - 1`` observations and
    draws ``beta_t`` with shape ``kappa_t``.  The reported bound is the mean
    of the per-repeat bounds.
    """
    if not 1 <= grid_size <= 4096:
        raise InvalidInputError(f"grid_size must be in [1, 4096], got {grid_size}")
    if T < 2 or repeats < 1:
        raise InvalidInputError("need T >= 2 and repeats >= 1")
    grid = prior_grid(grid_size, dimension)
    prior_chol = gp.jittered_cholesky(gp.kernel_matrix(grid, grid, lengthscale))
    params = gp.KernelParams(lengthscale, noise_std)
    schedule = acq.GammaBetaSchedule(theta)

    regrets, bounds, sig2 = [], [], []
    for rep in range(repeats):
        r_rng = rng.spawn(rep)
        f = prior_chol @ r_rng.normal(grid.shape[0])
        f_star = float(f.max())
        data = gp.Dataset.empty(grid.shape[1])
        best = -math.inf
        records = []
        for t in range(1, T + 1):
            model = gp.fit(data, params)
            mean, var = gp.posterior_batch(model, grid)
            beta = acq.rgp_ucb_beta(t, schedule, r_rng)
            k = int(np.argmax(acq.ucb_values(mean, var, beta)))
            y = float(f[k] + noise_std * r_rng.normal())
            best = max(best, y)
            data = data.append(grid[k], y)
            records.append(
                IterationRecord(t, grid[k].copy(), y, float(f[k]), best, beta,
                                acq.clamped_kappa(t, schedule), math.sqrt(var[k]))
            )
        regret = cumulative_regret(records, f_star)
        rep_bound = theorem3_bound(records, theta, T, mgf_draws=0)
        regrets.append(float(regret.cumulative[-1]))
        bounds.append(rep_bound.bound_value)
        sig2.append(rep_bound.sum_sigma_sq)

    summary = theorem3_bound(records, theta, T, rng=rng.spawn(repeats))
    mean_sig2 = float(np.mean(sig2))
    return replace(
        summary,
        empirical_bayes_regret=float(np.mean(regrets)),
        bound_value=float(np.mean(bounds)),
        r1_term=float(np.mean(bounds)) - summary.r2_term - summary.r34_term,
        sum_sigma_sq=mean_sig2,
        repeats=repeats,
        per_repeat_regret=tuple(regrets),
        per_repeat_bound=tuple(bounds),
    )
