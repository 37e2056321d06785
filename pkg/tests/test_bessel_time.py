import math

import numpy as np
import pytest

from besq.bessel_time import (
    bessel_time_marginal_samples,
    bessel_time_pair_samples,
    bessel_time_sample,
    correlated_pair_sample,
    correlated_pair_samples,
    h_moment,
    lamperti_identity_samples,
    pair_covariance_formula,
    post_hit_sample,
    post_hit_samples,
    reflection_probabilities,
    stopping_time_ratio_samples,
    time_inversion_samples,
    triple_identity_check,
)
from besq.core import BesqParams, sample_besq_transitions
from besq.rng import RngStream
from besq.stats import chi_square_independence, ks_two_sample, mean_within_se

P0 = BesqParams(mu=0.0)


def besq_mean(x0, t, p):
    return x0 + p.delta * t


class TestRatioProcess:
    def test_at_zero_lag(self):
        s = bessel_time_sample(1.0, [0.0], P0, RngStream(1, 0))
        assert s.x_values[0] == 1.0

    def test_rejects_non_unit_start(self):
        with pytest.raises(ValueError):
            bessel_time_sample(1.0, [0.0, 1.0], BesqParams(mu=0.0, x0=2.0), RngStream(1, 0))

    def test_marginal_matches_plain_process(self):
        t, a = 0.7, 0.5
        _, x = bessel_time_marginal_samples(t, a, P0, 100_000, RngStream(2, 0))
        ref = sample_besq_transitions(1.0, a, P0, RngStream(2, 1).generator(), size=100_000)
        assert ks_two_sample(x, ref, 0.01).passed

    def test_mean_formula(self):
        t, a = 1.0, 0.75
        _, x = bessel_time_marginal_samples(t, a, P0, 200_000, RngStream(3, 0))
        assert mean_within_se(x, 1.0 + P0.delta * a).passed

    def test_independent_of_start_history(self):
        r_t, x = bessel_time_marginal_samples(1.0, 1.0, P0, 100_000, RngStream(4, 0))
        assert chi_square_independence(r_t, x, 5, 0.01).passed

    def test_pair_has_process_law(self):
        t, a1, a2 = 1.0, 0.3, 0.9
        x1, x2 = bessel_time_pair_samples(t, a1, a2, P0, 100_000, RngStream(5, 0))
        gen = RngStream(5, 1).generator()
        r1 = sample_besq_transitions(1.0, a1, P0, gen, size=100_000)
        r2 = sample_besq_transitions(r1, a2 - a1, P0, gen)
        assert ks_two_sample(x1, r1, 0.01).passed
        assert ks_two_sample(x2 / x1, r2 / r1, 0.01).passed


class TestCorrelatedPair:
    def test_zero_lag_degenerates(self):
        s = correlated_pair_sample(0.8, 0.0, P0, RngStream(6, 0))
        assert s.check_r == 1.0
        assert s.u > 0

    def test_marginal_means(self):
        t, a = 1.0, 1.0
        check_r, u = correlated_pair_samples(t, a, P0, 300_000, RngStream(7, 0))
        assert mean_within_se(u, besq_mean(1.0, t + a, P0)).passed
        assert mean_within_se(check_r, besq_mean(1.0, a, P0)).passed

    def test_h_moment_values(self):
        assert h_moment(0.0, 0.7, 2.0) == pytest.approx(1.0 + 2.0 * 0.7)
        assert h_moment(1.0, 1.0, 2.0) == 17.0
        rng = np.random.default_rng(0)
        for _ in range(50):
            s, t, d = rng.uniform(0, 3, 3)
            assert h_moment(s, t, d) == pytest.approx(h_moment(t, s, d), rel=1e-14)

    def test_h_moment_is_product_moment(self):
        # H(1,1,2) = E R(1)^2 for delta = 2
        gen = RngStream(8, 0).generator()
        draws = sample_besq_transitions(1.0, 1.0, P0, gen, size=500_000) ** 2
        assert mean_within_se(draws, h_moment(1.0, 1.0, 2.0)).passed

    def test_covariance_formula_zero_lag(self):
        assert pair_covariance_formula(1.0, 0.0, P0) == pytest.approx(0.0, abs=1e-8)

    def test_covariance_formula_small_t_limit(self):
        # R(t) -> 1 as t -> 0, so Cov -> H(a,a,delta) - (1+delta a)^2;
        # the min/max kink at r=1 makes the approach O(sqrt(t))
        a, d = 0.6, P0.delta
        want = h_moment(a, a, d) - (1.0 + d * a) ** 2
        assert pair_covariance_formula(1e-7, a, P0) == pytest.approx(want, rel=1e-3)
        err5 = abs(pair_covariance_formula(1e-5, a, P0) - want)
        err3 = abs(pair_covariance_formula(1e-3, a, P0) - want)
        assert err5 < err3

    def test_covariance_against_mc(self):
        t, a = 1.0, 1.0
        check_r, u = correlated_pair_samples(t, a, P0, 400_000, RngStream(9, 0))
        prod = (check_r - check_r.mean()) * (u - u.mean())
        se = prod.std(ddof=1) / math.sqrt(prod.size)
        formula = pair_covariance_formula(t, a, P0)
        assert abs(prod.mean() - formula) < 3 * se

    def test_triple_identity_constant_functions(self):
        lhs, rhs, se = triple_identity_check("one", "one", 1.0, 1.0, P0, 1000, RngStream(10, 0))
        assert lhs == 1.0 and rhs == 1.0

    def test_triple_identity_zero_lag(self):
        # a = 0 collapses to f(1) E g(R(t))
        lhs, rhs, se = triple_identity_check("exp", "exp", 1.0, 0.0, P0, 200_000, RngStream(11, 0))
        assert abs(lhs - rhs) < 3 * se

    def test_triple_identity_exponential(self):
        lhs, rhs, se = triple_identity_check("exp", "exp", 1.0, 1.0, P0, 200_000, RngStream(12, 0))
        assert abs(lhs - rhs) < 3 * se


class TestPostHit:
    def test_law_matches_scaled_process(self):
        y, eps = 2.0, 0.3
        _, vals = post_hit_samples(y, eps, P0, 2e-3, 30_000, RngStream(13, 0))
        vals = vals[~np.isnan(vals)]
        ref = y * sample_besq_transitions(1.0, eps, P0, RngStream(13, 9).generator(), size=30_000)
        assert ks_two_sample(vals, ref, 0.01).passed

    def test_conditional_law(self):
        y, eps, t = 2.0, 0.3, 0.5
        tau, vals = post_hit_samples(y, eps, P0, 2e-3, 40_000, RngStream(14, 0))
        keep = (~np.isnan(vals)) & (tau > t)
        ref = y * sample_besq_transitions(1.0, eps, P0, RngStream(14, 9).generator(), size=40_000)
        assert ks_two_sample(vals[keep], ref, 0.01).passed

    def test_window_probability_decreases_with_eps(self):
        y = 2.0
        probs = []
        for i, eps in enumerate([0.001, 0.01, 0.1]):
            _, vals = post_hit_samples(y, eps, P0, 2e-3, 20_000, RngStream(15, i))
            vals = vals[~np.isnan(vals)]
            probs.append(np.mean(np.abs(vals - y) <= 0.1 * y))
        assert probs[0] > probs[1] > probs[2]

    def test_absent_when_unreachable(self):
        # mu > 0 and level below start: hit probability y^mu < 1; with a tiny
        # horizon the draw can come back absent
        out = post_hit_sample(0.25, 0.1, BesqParams(mu=1.0), 1e-2, RngStream(16, 3), horizon=0.05)
        assert out is None or out >= 0.0

    def test_scalar_value(self):
        out = post_hit_sample(2.0, 0.3, P0, 2e-3, RngStream(17, 0))
        assert out is not None and out > 0


class TestStoppingTimeConstructions:
    def test_scaling_at_stopping_time(self):
        lhs, rhs = stopping_time_ratio_samples(1.5, 2.0, P0, 1e-3, 50_000, RngStream(18, 0))
        assert ks_two_sample(lhs, rhs, 0.01).passed

    def test_reflection_identity(self):
        p1, p2, se = reflection_probabilities(1.5, 2.5, 1.0, P0, 1e-3, 50_000, RngStream(19, 0))
        assert abs(p1 - p2) < 3 * se

    def test_reflection_domain(self):
        with pytest.raises(ValueError):
            reflection_probabilities(0.5, 2.0, 1.0, P0, 1e-3, 100, RngStream(19, 1))


class TestTimeInversion:
    def test_zero_lag_same_law(self):
        lhs, rhs = time_inversion_samples(1.0, 0.0, P0, 50_000, RngStream(20, 0))
        assert ks_two_sample(lhs, rhs, 0.01).passed

    def test_identity_at_unit_time(self):
        lhs, rhs = time_inversion_samples(1.0, 1.0, P0, 100_000, RngStream(21, 0))
        assert ks_two_sample(lhs, rhs, 0.01).passed

    def test_corollary_half_case(self):
        t = 2.0
        lhs, rhs = time_inversion_samples(t, 1.0 / t, P0, 100_000, RngStream(22, 0))
        assert ks_two_sample(lhs, rhs, 0.01).passed


class TestLampertiIdentity:
    def test_zero_shift_is_lognormal(self):
        t, mu = 0.5, 0.0
        lhs, _ = lamperti_identity_samples(t, 0.0, mu, 1e-3, 50_000, RngStream(23, 0))
        gen = RngStream(23, 9).generator()
        ref = np.exp(gen.normal(2 * mu * t, 2 * math.sqrt(t), size=50_000))
        assert ks_two_sample(lhs, ref, 0.01).passed

    def test_positive_shift_law(self):
        lhs, rhs = lamperti_identity_samples(0.5, 0.5, 0.0, 1e-3, 50_000, RngStream(24, 0))
        assert ks_two_sample(lhs, rhs, 0.01).passed

    def test_mean(self):
        # E R(A_t + s) = E e^{2B_t} + delta s = e^{2t} + 2s for mu = 0
        t, s = 0.5, 0.5
        lhs, _ = lamperti_identity_samples(t, s, 0.0, 1e-3, 200_000, RngStream(25, 0))
        assert mean_within_se(lhs, math.exp(2 * t) + 2 * s).passed
