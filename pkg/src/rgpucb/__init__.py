"""Bayesian optimisation with a randomised GP-UCB acquisition function."""

__version__ = "0.1.0"

from .acquisition import (
    GammaBetaSchedule,
    MaximizerBudget,
    SrinivasBetaParams,
    kappa,
    maximize_acquisition,
    rgp_ucb_beta,
    srinivas_beta,
)
from .benchmarks import evaluate, make_problem, noisy_evaluate
from .experiment import (
    ExperimentConfig,
    Method,
    aggregate,
    bo_loop,
    cumulative_regret,
    prior_function_check,
    run_repeats,
    theorem3_bound,
)
from .gp import Dataset, KernelParams, fit, posterior
from .sampling import GammaParams, RngStream, gamma_inverse_cdf, gamma_sample, latin_hypercube
