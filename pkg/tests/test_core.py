import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import gamma as gamma_dist

from besq.core import (
    BesqParams,
    PathGrid,
    besq_transition_density,
    bessel_transition_density,
    first_hitting_on_path,
    sample_besq_transition,
    sample_besq_transitions,
    simulate_gbm_clock,
    simulate_hitting_times,
    simulate_path,
)
from besq.rng import RngStream
from besq.stats import ks_two_sample


def quadrature_cdf(x, t, p, points):
    """Independent CDF oracle for q_t(x, .) by adaptive quadrature."""
    out = []
    for b in points:
        v, _ = quad(lambda u: besq_transition_density(x, u, t, p), 0, b, limit=300)
        out.append(v)
    return np.asarray(out)


class TestParams:
    def test_delta_derivation(self):
        assert BesqParams(mu=0.0).delta == 2.0
        assert BesqParams(delta=3.0).mu == 0.5
        assert BesqParams(mu=1.5, delta=5.0).delta == 5.0

    def test_inconsistent_rejected(self):
        with pytest.raises(ValueError):
            BesqParams(mu=1.0, delta=3.0)
        with pytest.raises(ValueError):
            BesqParams(mu=-0.5)
        with pytest.raises(ValueError):
            BesqParams(mu=0.0, x0=-1.0)
        with pytest.raises(ValueError):
            BesqParams()


class TestDensities:
    def test_radius_density_value(self):
        p = BesqParams(mu=0.0)
        i0_1 = 1.2660658777520084  # 30-term series value of I_0(1)
        assert bessel_transition_density(1, 1, 1, p) == pytest.approx(math.exp(-1) * i0_1, rel=1e-12)

    def test_radius_density_vanishes_at_zero(self):
        p = BesqParams(mu=0.0)
        assert bessel_transition_density(1, 1e-12, 1, p) < 1e-11

    def test_radius_density_normalization(self):
        p = BesqParams(mu=1.5)
        mass, _ = quad(lambda x: bessel_transition_density(1, x, 1, p), 0, 60, limit=300)
        assert mass == pytest.approx(1.0, abs=1e-9)

    def test_squared_density_value(self):
        p = BesqParams(mu=0.0)
        i0_1 = 1.2660658777520084
        assert besq_transition_density(1, 1, 1, p) == pytest.approx(0.5 * math.exp(-1) * i0_1, rel=1e-12)

    def test_zero_start_gamma_limit(self):
        p = BesqParams(mu=0.0)
        assert besq_transition_density(0.0, 1.0, 0.5, p) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_squared_density_normalization(self):
        p = BesqParams(mu=1.5)
        mass, _ = quad(lambda y: besq_transition_density(2.0, y, 0.7, p), 0, 100, limit=300)
        assert mass == pytest.approx(1.0, abs=1e-8)

    def test_chapman_kolmogorov(self):
        p = BesqParams(mu=0.5)
        s, t, x, y = 0.4, 0.6, 1.2, 2.3
        lhs, _ = quad(
            lambda z: besq_transition_density(x, z, s, p) * besq_transition_density(z, y, t, p),
            0, 120, limit=400,
        )
        assert lhs == pytest.approx(besq_transition_density(x, y, s + t, p), rel=1e-6)

    def test_domain_errors(self):
        p = BesqParams(mu=0.0)
        with pytest.raises(ValueError):
            besq_transition_density(-1.0, 1.0, 1.0, p)
        with pytest.raises(ValueError):
            besq_transition_density(1.0, 0.0, 1.0, p)
        with pytest.raises(ValueError):
            bessel_transition_density(0.0, 1.0, 1.0, p)


class TestTransitionSampler:
    def test_mean_matches_moment_formula(self):
        # E R(t) = x + delta t
        p = BesqParams(mu=0.0)
        gen = RngStream(3, 0).generator()
        draws = sample_besq_transitions(1.0, 1.0, p, gen, size=1_000_000)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - 3.0) < 3 * se

    def test_variance_matches_moment_formula(self):
        # Var R(t) = 4 x t + 2 delta t^2 (noncentral chi-square moments)
        p = BesqParams(mu=0.0)
        gen = RngStream(4, 0).generator()
        draws = sample_besq_transitions(1.0, 1.0, p, gen, size=1_000_000)
        sq = (draws - draws.mean()) ** 2
        se = sq.std(ddof=1) / math.sqrt(draws.size)
        assert abs(sq.mean() - 8.0) < 3 * se

    def test_zero_start_is_gamma(self):
        # from x=0 the transition is Gamma(delta/2, scale 2t)
        p = BesqParams(mu=0.5)
        t = 0.7
        gen = RngStream(5, 0).generator()
        draws = sample_besq_transitions(0.0, t, p, gen, size=100_000)
        ref = gamma_dist.rvs(p.delta / 2.0, scale=2 * t, size=100_000,
                             random_state=np.random.default_rng(99))
        assert ks_two_sample(draws, ref, 0.01).passed

    def test_sampler_matches_density_cdf(self):
        for (x, t, mu) in [(1.0, 0.25, 0.0), (4.0, 1.0, 0.5), (1.0, 1.0, 2.0)]:
            p = BesqParams(mu=mu)
            gen = RngStream(6, int(10 * (x + t + mu))).generator()
            draws = np.sort(sample_besq_transitions(x, t, p, gen, size=100_000))
            qs = draws[np.linspace(500, draws.size - 500, 41, dtype=int)]
            cdf = quadrature_cdf(x, t, p, qs)
            emp = np.searchsorted(draws, qs, side="right") / draws.size
            # KS-style bound at alpha=0.01 for n=1e5
            assert np.max(np.abs(cdf - emp)) < 1.63 / math.sqrt(draws.size)

    def test_scaling_property(self):
        # (1/x) R^x(x t) =law R^1(t)
        p = BesqParams(mu=0.5)
        x, t = 3.0, 0.8
        g1 = RngStream(7, 0).generator()
        g2 = RngStream(7, 1).generator()
        a = sample_besq_transitions(x, x * t, p, g1, size=100_000) / x
        b = sample_besq_transitions(1.0, t, p, g2, size=100_000)
        assert ks_two_sample(a, b, 0.01).passed

    def test_additivity_in_dimension(self):
        # BESQ_d1(x1) + BESQ_d2(x2) =law BESQ_{d1+d2}(x1+x2)
        t = 0.6
        p1, p2 = BesqParams(delta=2.0), BesqParams(delta=3.0)
        p12 = BesqParams(delta=5.0)
        g = RngStream(8, 0).generator()
        a = (sample_besq_transitions(1.0, t, p1, g, size=100_000)
             + sample_besq_transitions(2.0, t, p2, g, size=100_000))
        b = sample_besq_transitions(3.0, t, p12, RngStream(8, 1).generator(), size=100_000)
        assert ks_two_sample(a, b, 0.01).passed

    def test_zero_duration_is_identity(self):
        p = BesqParams(mu=1.0)
        gen = RngStream(9, 0).generator()
        x = np.array([0.0, 1.0, 5.0])
        assert np.array_equal(sample_besq_transitions(x, 0.0, p, gen), x)

    def test_scalar_wrapper_deterministic(self):
        p = BesqParams(mu=0.0)
        a = sample_besq_transition(1.0, 1.0, p, RngStream(11, 2))
        b = sample_besq_transition(1.0, 1.0, p, RngStream(11, 2))
        assert a == b


class TestPathSimulation:
    def test_trivial_grid(self):
        p = BesqParams(mu=0.0, x0=2.0)
        path = simulate_path([0.0], p, RngStream(1, 0))
        assert path.times.tolist() == [0.0]
        assert path.values.tolist() == [2.0]

    def test_grid_validation(self):
        p = BesqParams(mu=0.0)
        with pytest.raises(ValueError):
            simulate_path([0.0, 0.5, 0.4], p, RngStream(1, 0))
        with pytest.raises(ValueError):
            simulate_path([0.1, 0.5], p, RngStream(1, 0))

    def test_determinism(self):
        p = BesqParams(mu=0.3)
        grid = np.linspace(0, 2, 9)
        a = simulate_path(grid, p, RngStream(21, 5))
        b = simulate_path(grid, p, RngStream(21, 5))
        assert np.array_equal(a.values, b.values)
        c = simulate_path(grid, p, RngStream(21, 6))
        assert not np.array_equal(a.values, c.values)

    def test_final_marginal_against_density(self):
        p = BesqParams(mu=0.5)
        grid = np.linspace(0, 1, 5)
        gen_stream = RngStream(22, 0)
        finals = np.array([simulate_path(grid, p, gen_stream.substream(i)).values[-1]
                           for i in range(20_000)])
        ref = sample_besq_transitions(1.0, 1.0, p, RngStream(22, 99).generator(), size=20_000)
        assert ks_two_sample(finals, ref, 0.01).passed

    def test_csv_round_trip(self, tmp_path):
        p = BesqParams(mu=0.3)
        path = simulate_path(np.linspace(0, 1, 6), p, RngStream(30, 0))
        f = tmp_path / "path.csv"
        path.to_csv(f)
        body = f.read_text().splitlines()
        assert body[0] == "t,value"
        parsed = np.array([[float(v) for v in line.split(",")] for line in body[1:]])
        assert np.array_equal(parsed[:, 0], path.times)
        assert np.array_equal(parsed[:, 1], path.values)


class TestHittingDetection:
    def test_start_at_level(self):
        path = PathGrid(np.array([0.0, 1.0]), np.array([2.0, 3.0]))
        assert first_hitting_on_path(path, 2.0) == 0.0

    def test_no_crossing(self):
        path = PathGrid(np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0, 5.0]))
        assert first_hitting_on_path(path, 2.0) is None

    def test_interpolated_crossing(self):
        path = PathGrid(np.array([0.0, 1.0]), np.array([1.0, 3.0]))
        assert first_hitting_on_path(path, 2.0) == pytest.approx(0.5)

    def test_cdf_refinement_bias(self):
        # grid detection overestimates tau: CDF at step h sits below CDF at
        # h/2, and the h -> h/2 drift bounds the remaining bias scale
        p = BesqParams(mu=0.0)
        t_probe = np.linspace(0.05, 2.0, 30)
        cdfs = {}
        for k, step in enumerate([4e-3, 2e-3, 1e-3]):
            tau = simulate_hitting_times(1.5, p, step, 4.0, 150_000, RngStream(31, k))
            tau = np.sort(tau[~np.isnan(tau)])
            cdfs[step] = np.searchsorted(tau, t_probe) / 150_000
        drift_coarse = np.max(np.abs(cdfs[4e-3] - cdfs[2e-3]))
        drift_fine = np.max(np.abs(cdfs[2e-3] - cdfs[1e-3]))
        assert drift_fine <= 2.0 * drift_coarse

    def test_first_return_semantics(self):
        # starting exactly at the level: initial touch is not a hit
        p = BesqParams(mu=0.0)
        tau = simulate_hitting_times(1.0, p, 1e-3, 2.0, 2000, RngStream(32, 0))
        tau = tau[~np.isnan(tau)]
        assert np.all(tau > 0)


class TestGbmClock:
    def test_initial_values(self):
        clock = simulate_gbm_clock(0.5, 1e-3, 1.0, RngStream(41, 0))
        assert clock.b_values[0] == 0.0
        assert clock.a_values[0] == 0.0
        assert clock.exp_values[0] == 1.0

    def test_clock_monotone(self):
        clock = simulate_gbm_clock(0.0, 1e-3, 2.0, RngStream(41, 1))
        assert np.all(np.diff(clock.a_values) >= 0)
        assert np.all(clock.exp_values > 0)

    def test_exponential_moment(self):
        # E e^{2 B_t} = e^{2t} for mu = 0
        t = 0.5
        vals = np.array([simulate_gbm_clock(0.0, 5e-3, t, RngStream(42, i)).exp_values[-1]
                         for i in range(40_000)])
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - math.exp(2 * t)) < 3 * se

    def test_csv_round_trip(self, tmp_path):
        clock = simulate_gbm_clock(0.2, 0.05, 0.4, RngStream(43, 0))
        f = tmp_path / "clock.csv"
        clock.to_csv(f)
        lines = f.read_text().splitlines()
        assert lines[0] == "t,b,a,exp"
        parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.array_equal(parsed[:, 1], clock.b_values)
        assert np.array_equal(parsed[:, 3], clock.exp_values)
