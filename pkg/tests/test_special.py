import math

import numpy as np
import pytest
import scipy.special as sc

from besq.special import (
    _log_asymptotic,
    _log_series,
    bessel_i_scaled,
    log_bessel_i,
    log_gamma,
    series_asymptotic_switch,
)


def series_oracle(mu, z, n_terms=30):
    # plain ascending series, independent implementation
    total = 0.0
    for k in range(n_terms):
        total += (z / 2.0) ** (2 * k + mu) / (math.gamma(k + 1) * math.gamma(k + mu + 1))
    return total


def test_value_at_zero():
    assert log_bessel_i(0.0, 0.0) == 0.0
    assert log_bessel_i(2.0, 0.0) == -math.inf


def test_i0_of_one_vs_series_oracle():
    assert math.exp(log_bessel_i(0.0, 1.0)) == pytest.approx(series_oracle(0.0, 1.0), rel=1e-12)
    assert math.exp(log_bessel_i(0.0, 1.0)) == pytest.approx(1.2660658777520084, rel=1e-10)


def test_half_order_closed_form():
    # I_{1/2}(z) = sqrt(2/(pi z)) sinh z
    for z in (0.3, 2.0, 10.0):
        expected = math.sqrt(2.0 / (math.pi * z)) * math.sinh(z)
        assert math.exp(log_bessel_i(0.5, z)) == pytest.approx(expected, rel=1e-10)


def test_scaled_values():
    assert bessel_i_scaled(0.0, 0.0) == 1.0
    assert bessel_i_scaled(2.0, 0.0) == 0.0
    assert bessel_i_scaled(0.0, 1.0) == pytest.approx(math.exp(-1) * series_oracle(0.0, 1.0), rel=1e-10)


def test_accuracy_envelope_against_scipy():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        mu = rng.uniform(0.0, 50.0)
        z = rng.uniform(1e-3, 700.0)
        ref = math.log(sc.ive(mu, z)) + z
        assert math.exp(log_bessel_i(mu, z) - ref) == pytest.approx(1.0, rel=1e-10)


def test_domain_errors():
    with pytest.raises(ValueError):
        log_bessel_i(-0.5, 1.0)
    with pytest.raises(ValueError):
        log_bessel_i(1.0, -1.0)
    with pytest.raises(ValueError):
        bessel_i_scaled(0.0, -2.0)


def test_recurrence_property():
    # I_{mu-1}(z) - I_{mu+1}(z) = (2 mu / z) I_mu(z)
    rng = np.random.default_rng(7)
    for _ in range(200):
        mu = rng.uniform(1.0, 10.0)
        z = rng.uniform(1e-2, 50.0)
        lo = math.exp(log_bessel_i(mu - 1.0, z) - log_bessel_i(mu, z))
        hi = math.exp(log_bessel_i(mu + 1.0, z) - log_bessel_i(mu, z))
        assert lo - hi == pytest.approx(2.0 * mu / z, rel=1e-8)


def test_monotone_in_argument():
    rng = np.random.default_rng(11)
    for _ in range(100):
        mu = rng.uniform(0.0, 8.0)
        z = rng.uniform(0.05, 60.0)
        assert log_bessel_i(mu, z * 1.01) > log_bessel_i(mu, z)


def test_branch_seam_agreement():
    for mu in (0.0, 0.4, 1.7, 4.0, 12.0, 37.0, 50.0):
        z_star = series_asymptotic_switch(mu)
        a = _log_series(mu, z_star)
        b = _log_asymptotic(mu, z_star)
        assert math.exp(a - b) == pytest.approx(1.0, rel=1e-9)


def test_log_gamma():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-13)
    assert log_gamma(10.0) == pytest.approx(math.log(362880.0), rel=1e-13)
    with pytest.raises(ValueError):
        log_gamma(0.0)
    with pytest.raises(ValueError):
        log_gamma(-1.0)
