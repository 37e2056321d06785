"""Log-scale modified Bessel function of the first kind, plus log-gamma.

Every transition density in this package feeds arguments like sqrt(x*y)/t
into I_mu, which overflows double precision long before the density itself
does.  Evaluation therefore happens on the log scale: an ascending power
series below a switch point and the classical large-argument asymptotic
expansion above it.

The series has only positive terms (no cancellation) and is summed with a
running max-rescaled accumulator, so it is usable for any argument; it is
only retired at large z because the asymptotic expansion is much cheaper
there.  The asymptotic sum is truncated at its smallest term, which keeps
the relative error at or below that term's size over mu in [0, 50],
z in [0, 700].
"""

from __future__ import annotations

import math

__all__ = ["log_bessel_i", "bessel_i_scaled", "log_gamma", "series_asymptotic_switch"]

# Series terms are dropped once they fall below this fraction of the running
# sum; double precision cannot represent smaller contributions.
_SERIES_FLOOR = 1e-17

_MAX_SERIES_TERMS = 20_000


def series_asymptotic_switch(mu: float) -> float:
    """Argument at which evaluation switches from series to asymptotic form.

    Both branches hold ~1e-11 relative accuracy at the switch, so values
    just below and just above agree well inside the 1e-9 seam tolerance.
    """
    return max(30.0, 10.0 * mu)


def _check_domain(mu: float, z: float) -> None:
    if not (mu >= 0.0 and math.isfinite(mu)):
        raise ValueError(f"Bessel order must be finite and nonnegative, got mu={mu}")
    if not (z >= 0.0 and math.isfinite(z)):
        raise ValueError(f"Bessel argument must be finite and nonnegative, got z={z}")


def _log_series(mu: float, z: float) -> float:
    # log sum_k (z/2)^(2k+mu) / (k! Gamma(k+mu+1)); all terms positive.
    log_half_z = math.log(z / 2.0)
    ratio_num = 0.25 * z * z  # t_{k+1}/t_k = ratio_num / ((k+1)(k+mu+1))
    m = -math.inf  # current max log-term
    s = 0.0        # sum of exp(log_term - m)
    for k in range(_MAX_SERIES_TERMS):
        lt = (2 * k + mu) * log_half_z - math.lgamma(k + 1.0) - math.lgamma(k + mu + 1.0)
        if lt <= m:
            rel = math.exp(lt - m)
            s += rel
        else:
            s = s * math.exp(m - lt) + 1.0
            m = lt
            rel = 1.0
        past_peak = ratio_num < (k + 1.0) * (k + mu + 1.0)
        if past_peak and rel <= _SERIES_FLOOR * s:
            break
    else:
        raise RuntimeError(f"Bessel series did not converge for mu={mu}, z={z}")
    return m + math.log(s)


def _log_asymptotic(mu: float, z: float) -> float:
    # e^z/sqrt(2 pi z) * sum_k (-1)^k a_k(mu)/z^k, truncated at smallest term.
    four_mu_sq = 4.0 * mu * mu
    s = 1.0
    term = 1.0
    prev_mag = math.inf
    for k in range(1, 2000):
        term *= -(four_mu_sq - (2 * k - 1) ** 2) / (8.0 * k * z)
        mag = abs(term)
        # For large mu the first few terms grow before decaying; only growth
        # past the hump (factors negative) marks the divergent tail.
        if mag >= prev_mag and (2 * k - 1) ** 2 > four_mu_sq:
            break
        s += term
        prev_mag = mag
        if mag <= _SERIES_FLOOR * abs(s):
            break
    return z - 0.5 * math.log(2.0 * math.pi * z) + math.log(s)


def log_bessel_i(mu: float, z: float) -> float:
    """log I_mu(z) for mu >= 0, z >= 0.

    Returns -inf at z=0 for mu > 0 (I_mu(0) = 0) and 0 for mu = 0.
    Relative error of exp(result) is <= 1e-10 for mu in [0, 50],
    z in [0, 700].
    """
    _check_domain(mu, z)
    if z == 0.0:
        return 0.0 if mu == 0.0 else -math.inf
    if z <= series_asymptotic_switch(mu):
        return _log_series(mu, z)
    return _log_asymptotic(mu, z)


def bessel_i_scaled(mu: float, z: float) -> float:
    """e^{-z} I_mu(z), computed without intermediate overflow."""
    _check_domain(mu, z)
    if z == 0.0:
        return 1.0 if mu == 0.0 else 0.0
    return math.exp(log_bessel_i(mu, z) - z)


def log_gamma(x: float) -> float:
    """log Gamma(x) for x > 0."""
    if not (x > 0.0):
        raise ValueError(f"log_gamma requires x > 0, got x={x}")
    return math.lgamma(x)
