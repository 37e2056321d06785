"""Squared Bessel processes with stochastic time.

Exact transition sampling and densities for BESQ(mu), the ratio process
X(t,a) = R(t+aR(t))/R(t) with its distributional identities, first-hitting-
time densities via a Volterra integral equation (direct product integration
and Gaver-Stehfest inversion), the conditional law P(tau_y <= t | R(T) = x),
and a statistical verification suite that turns each identity into a
reproducible pass/fail test.
"""

from .core import (
    BesqParams,
    GbmClockPath,
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
from .bessel_time import (
    BesselTimeSample,
    CorrelatedPairSample,
    bessel_time_sample,
    correlated_pair_sample,
    correlated_pair_samples,
    h_moment,
    lamperti_identity_samples,
    pair_covariance_formula,
    post_hit_sample,
    post_hit_samples,
    time_inversion_samples,
    triple_identity_check,
)
from .hitting import (
    HittingDensity,
    McHittingCdf,
    conditional_hitting_cdf,
    hitting_probability_total,
    laplace_transform_numeric,
    mc_hitting_cdf,
    solve_hitting_density_direct,
    solve_hitting_density_kroute,
    solve_hitting_density_laplace,
    volterra_kernel,
    volterra_residual,
)
from .rng import RngStream
from .special import bessel_i_scaled, log_bessel_i, log_gamma
from .stats import TestResult, VerificationReport, chi_square_independence, ks_two_sample, mean_within_se
from .suite import IDENTITY_IDS, SuiteConfig, run_identity_suite

__version__ = "0.1.0"
