import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgpucb import acquisition as acq
from rgpucb import gp
from rgpucb.errors import InvalidParameterError
from rgpucb.gp import PosteriorMoments
from rgpucb.sampling import RngStream

mp.mp.dps = 40


def kappa_oracle(t, theta):
    return float(mp.log((mp.mpf(t) ** 2 + 1) / mp.sqrt(2 * mp.pi)) / mp.log(1 + mp.mpf(theta) / 2))


def srinivas_oracle(t, d, delta, a, b, r):
    t, delta = mp.mpf(t), mp.mpf(delta)
    return float(
        2 * mp.log(t**2 * mp.pi**2 / (3 * delta))
        + 2 * d * mp.log(t**2 * d * b * r * mp.sqrt(mp.log(4 * d * a / delta)))
    )


class TestKappa:
    def test_frozen_values(self):
        # 40-digit evaluations of the shape formula
        assert acq.kappa(5, 1.0) == pytest.approx(5.769073486325243, abs=1e-12)
        assert acq.kappa(2, 8.0) == pytest.approx(0.4290313866069690, abs=1e-12)

    @pytest.mark.parametrize("t", [1, 2, 3, 10, 57, 400])
    @pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 8.0, 16.0])
    def test_matches_high_precision(self, t, theta):
        assert acq.kappa(t, theta) == pytest.approx(kappa_oracle(t, theta), rel=1e-13)

    def test_negative_at_t1(self):
        for theta in (0.1, 1.0, 8.0):
            assert acq.kappa(1, theta) < 0

    def test_clamped(self):
        s = acq.GammaBetaSchedule(1.0)
        assert acq.clamped_kappa(1, s) == acq.SHAPE_FLOOR
        assert acq.clamped_kappa(5, s) == acq.kappa(5, 1.0)

    def test_mean_beta_increases_with_theta(self):
        # kappa_t shrinks with theta but kappa_t * theta grows
        for t in (3, 5, 20, 200):
            means = [acq.kappa(t, th) * th for th in np.geomspace(0.05, 50, 40)]
            assert np.all(np.diff(means) > 0)


class TestRgpUcbBeta:
    def test_mean_t5(self):
        rng = RngStream(1)
        s = acq.GammaBetaSchedule(1.0)
        from rgpucb.sampling import GammaParams, gamma_sample

        draws = gamma_sample(GammaParams(acq.clamped_kappa(5, s), 1.0), rng, size=10**6)
        assert abs(draws.mean() - 5.769073486325243) / 5.769 < 0.01

    def test_positive_at_t1(self):
        rng = RngStream(2)
        s = acq.GammaBetaSchedule(1.0)
        assert all(acq.rgp_ucb_beta(1, s, rng) > 0 for _ in range(200))

    def test_deterministic(self):
        s = acq.GammaBetaSchedule(8.0)
        assert acq.rgp_ucb_beta(7, s, RngStream(3)) == acq.rgp_ucb_beta(7, s, RngStream(3))

    def test_rejects_t0(self):
        with pytest.raises(InvalidParameterError):
            acq.rgp_ucb_beta(0, acq.GammaBetaSchedule(1.0), RngStream(0))

    @pytest.mark.parametrize("theta", [0.0, -1.0, math.inf])
    def test_bad_theta(self, theta):
        with pytest.raises(InvalidParameterError):
            acq.GammaBetaSchedule(theta)

    def test_single_draws_match_schedule_mean(self):
        s = acq.GammaBetaSchedule(0.5)
        rng = RngStream(4)
        draws = np.array([acq.rgp_ucb_beta(50, s, rng) for _ in range(20_000)])
        expected = acq.kappa(50, 0.5) * 0.5
        # 20k draws: standard error of the mean is under 0.2%
        assert abs(draws.mean() - expected) / expected < 0.01


class TestSrinivas:
    def test_frozen_values(self):
        p = acq.SrinivasBetaParams(delta=0.1, a=1, b=1, r=1, d=1)
        assert acq.srinivas_beta(10, p) == pytest.approx(26.712868636965075, abs=1e-10)
        assert acq.srinivas_beta(1, p) == pytest.approx(8.292187893012709, abs=1e-10)

    @pytest.mark.parametrize("d,delta,a,b,r", [(1, 0.1, 1, 1, 1), (4, 0.05, 2, 0.5, 10.24), (5, 0.5, 1, 3, 10)])
    def test_matches_high_precision(self, d, delta, a, b, r):
        p = acq.SrinivasBetaParams(delta, a, b, r, d)
        for t in (1, 2, 17, 300):
            assert acq.srinivas_beta(t, p) == pytest.approx(srinivas_oracle(t, d, delta, a, b, r), rel=1e-12)

    def test_strictly_increasing(self):
        p = acq.SrinivasBetaParams()
        vals = [acq.srinivas_beta(t, p) for t in range(1, 500)]
        assert np.all(np.diff(vals) > 0)

    def test_undefined_sqrt(self):
        # ln(4 d a / delta) <= 0 when 4 a <= delta
        with pytest.raises(InvalidParameterError):
            acq.srinivas_beta(3, acq.SrinivasBetaParams(delta=0.5, a=0.1, b=1, r=1, d=1))

    def test_negative_total(self):
        with pytest.raises(InvalidParameterError):
            acq.srinivas_beta(1, acq.SrinivasBetaParams(delta=0.9, a=1, b=1e-6, r=1e-6, d=3))

    @pytest.mark.parametrize("kw", [dict(delta=0.0), dict(delta=1.0), dict(a=0), dict(b=-1), dict(r=0)])
    def test_param_validation(self, kw):
        with pytest.raises(InvalidParameterError):
            acq.SrinivasBetaParams(**kw)


class TestUcb:
    def test_beta_zero(self):
        assert acq.ucb_value(PosteriorMoments(0.7, 0.3), 0.0) == 0.7

    def test_arithmetic(self):
        assert acq.ucb_value(PosteriorMoments(0.0, 1.0), 4.0) == 2.0
        assert acq.ucb_value(PosteriorMoments(1.5, 0.25), 9.0) == 3.0

    def test_beta_ordering_drives_exploration(self):
        a = PosteriorMoments(1.0, 0.01)
        b = PosteriorMoments(0.5, 1.0)
        assert acq.ucb_value(a, 0.0) > acq.ucb_value(b, 0.0)
        for beta in (1.0, 2.0, 10.0):
            assert acq.ucb_value(b, beta) > acq.ucb_value(a, beta)


class TestEi:
    def test_no_improvement_possible(self):
        assert acq.ei_value(PosteriorMoments(0.2, 0.0), 1.0) == 0.0

    def test_at_incumbent(self):
        assert acq.ei_value(PosteriorMoments(1.0, 1.0), 1.0) == pytest.approx(0.3989422804014327, abs=1e-15)

    def test_deterministic_improvement(self):
        assert acq.ei_value(PosteriorMoments(3.0, 0.0), 2.0) == 1.0

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(scale=5, size=10**5)
        sd = rng.exponential(size=10**5) * (rng.uniform(size=10**5) > 0.1)
        inc = rng.normal(scale=5, size=10**5)
        vals = np.array([acq.ei_values(mu[i:i + 1000], sd[i:i + 1000], inc[i]) for i in range(0, 10**5, 1000)])
        assert np.all(vals >= 0)
        assert np.all(acq.ei_values(mu, sd, 0.0) >= 0)

    def test_monotone_in_sigma_at_incumbent(self):
        sd = np.linspace(0, 5, 200)
        vals = acq.ei_values(np.full(200, 1.0), sd, 1.0)
        assert np.all(np.diff(vals) >= 0)

    @settings(max_examples=200, deadline=None)
    @given(mu=st.floats(-50, 50), sd=st.floats(1e-6, 20), inc=st.floats(-50, 50))
    def test_matches_numerical_integral(self, mu, sd, inc):
        # E[max(f - inc, 0)] for f ~ N(mu, sd^2), by quadrature
        f = lambda z: max(mu + sd * z - inc, 0.0) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
        lo = max((inc - mu) / sd, -40.0)
        ref = float(mp.quad(f, [lo, lo + 10, 40])) if lo < 40 else 0.0
        assert acq.ei_value(PosteriorMoments(mu, sd * sd), inc) == pytest.approx(ref, rel=1e-6, abs=1e-9)


class TestThompson:
    def test_single_candidate(self):
        model = gp.fit(gp.Dataset.empty(2), gp.KernelParams(1.0, 0.1))
        c = acq.thompson_select(model, [[0.3, 0.4]], RngStream(0))
        assert np.array_equal(c.point, [0.3, 0.4])

    def test_prefers_high_observed_point(self):
        # observed y=10 at x=0; two far-away candidates sit at the prior
        model = gp.fit(gp.Dataset([[0.0]], [10.0], 1), gp.KernelParams(0.1, 1e-4))
        cands = np.array([[0.0], [5.0], [10.0]])
        rng = RngStream(1)
        hits = sum(int(acq.thompson_select(model, cands, rng).point[0] == 0.0) for _ in range(10**4))
        assert hits / 10**4 > 0.99

    def test_deterministic(self):
        model = gp.fit(gp.Dataset([[0.2], [0.8]], [0.0, 1.0], 1), gp.KernelParams(0.2, 0.01))
        cands = np.linspace(0, 1, 30)[:, None]
        a = acq.thompson_select(model, cands, RngStream(2))
        b = acq.thompson_select(model, cands, RngStream(2))
        assert np.array_equal(a.point, b.point) and a.acquisition_value == b.acquisition_value

    def test_candidate_count(self):
        assert acq.thompson_candidate_count(1) == 512
        assert acq.thompson_candidate_count(5) == 2048


class TestMaximizer:
    def test_quadratic(self):
        c = acq.maximize_acquisition(lambda x: -(x[:, 0] - 0.3) ** 2, [(0, 1)], RngStream(0))
        assert abs(c.point[0] - 0.3) < 1e-3

    def test_constant(self):
        c = acq.maximize_acquisition(lambda x: np.full(x.shape[0], 2.5), [(0, 1), (-1, 1)], RngStream(1))
        assert c.acquisition_value == 2.5
        assert np.all(c.point >= [0, -1]) and np.all(c.point <= [1, 1])

    def test_boundary_maximum(self):
        c = acq.maximize_acquisition(lambda x: x.sum(axis=1), [(0, 1), (0, 2)], RngStream(2))
        np.testing.assert_allclose(c.point, [1, 2], atol=1e-3)

    def test_dominates_fresh_probes_on_gp_surface(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(12, 2))
        model = gp.fit(gp.Dataset(X, np.sin(5 * X[:, 0]) * np.cos(4 * X[:, 1]), 2), gp.KernelParams(0.2, 0.01))

        def surface(xs):
            m, v = gp.posterior_batch(model, xs)
            return acq.ucb_values(m, v, 2.0)

        c = acq.maximize_acquisition(surface, [(0, 1), (0, 1)], RngStream(4))
        fresh = surface(np.random.default_rng(5).uniform(size=(10**4, 2)))
        assert c.acquisition_value >= fresh.max() - 1e-6

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), d=st.integers(1, 4))
    def test_in_bounds_and_consistent(self, seed, d):
        rng = np.random.default_rng(seed)
        lo = rng.uniform(-5, 0, size=d)
        hi = lo + rng.uniform(0.1, 5, size=d)
        centre = rng.uniform(lo - 1, hi + 1)
        seen = []

        def surface(xs):
            v = -np.sum((xs - centre) ** 2, axis=1) + np.sin(3 * xs).sum(axis=1)
            seen.append(v)
            return v

        budget = acq.MaximizerBudget(n_probe=200)
        c = acq.maximize_acquisition(surface, np.column_stack([lo, hi]), RngStream(seed), budget)
        assert np.all(c.point >= lo) and np.all(c.point <= hi)
        probe_vals = seen[0]
        assert c.acquisition_value >= probe_vals.max() - 1e-12
        assert c.acquisition_value == surface(c.point[None, :])[0]

    def test_ucb_select_reports_sigma_and_beta(self):
        model = gp.fit(gp.Dataset([[0.5]], [1.0], 1), gp.KernelParams(0.2, 0.01))
        c = acq.ucb_select(model, 4.0, [(0, 1)], RngStream(6))
        assert c.beta_used == 4.0
        assert c.sigma_at_choice == pytest.approx(gp.posterior(model, c.point).std)
