"""The ratio process X(t,a) = R(t+aR(t))/R(t) and the constructions on it.

For a squared Bessel process R of index mu >= 0 started at 1, the process
a -> X(t,a) is again a squared Bessel process of the same index, started
at 1 and independent of the history up to t; the same holds with t
replaced by a stopping time.  Everything here samples such objects
exactly: transitions are chained through the exact Markov kernel at the
(random) time points the construction requires, so the only grids in
this module belong to hitting-time detection.

All samplers are vectorized across independent draws and consume a single
deterministic RngStream, so results are reproducible from (seed, stream).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .core import BesqParams, sample_besq_transitions, simulate_hitting_times
from .rng import RngStream

__all__ = [
    "BesselTimeSample",
    "CorrelatedPairSample",
    "TEST_FUNCTIONS",
    "bessel_time_sample",
    "bessel_time_marginal_samples",
    "bessel_time_pair_samples",
    "correlated_pair_sample",
    "correlated_pair_samples",
    "h_moment",
    "pair_covariance_formula",
    "triple_identity_check",
    "post_hit_sample",
    "post_hit_samples",
    "stopping_time_ratio_samples",
    "reflection_probabilities",
    "time_inversion_samples",
    "lamperti_identity_samples",
]


@dataclass
class BesselTimeSample:
    """One trajectory of a -> X(t,a) together with the R(t) that built it."""

    t: float
    a_grid: np.ndarray
    x_values: np.ndarray
    r_t: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("a,x\n")
            for a, x in zip(self.a_grid, self.x_values):
                fh.write("%.17g,%.17g\n" % (a, x))


@dataclass
class CorrelatedPairSample:
    """One joint draw of (check_r, u) = (X(t,a), R(t+a)) from a single path."""

    a: float
    check_r: float
    u: float


def _require_unit_start(p: BesqParams) -> None:
    if p.x0 != 1.0:
        raise ValueError("this construction requires the standing normalization x0 = 1")


def _check_a_grid(a_grid: np.ndarray) -> np.ndarray:
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid[0] != 0.0 or (a_grid.size > 1 and not np.all(np.diff(a_grid) > 0)):
        raise ValueError("a_grid must start at 0 and be strictly increasing")
    return a_grid


def bessel_time_sample(t: float, a_grid, p: BesqParams, rng: RngStream) -> BesselTimeSample:
    """Sample X(t, .) on a_grid by exact transitions through t + a*R(t).

    Draws R(t) first, then chains transitions over the induced times
    t + a_i R(t); the returned ratios have the exact finite-dimensional
    law of a squared Bessel process started at 1 on the a_grid.
    """
    _require_unit_start(p)
    if t < 0:
        raise ValueError("t must be nonnegative")
    a_grid = _check_a_grid(a_grid)
    gen = rng.generator()
    r_t = float(sample_besq_transitions(1.0, t, p, gen, size=1)[0])
    values = np.empty_like(a_grid)
    values[0] = r_t
    cur = r_t
    for i, da in enumerate(np.diff(a_grid), start=1):
        cur = float(sample_besq_transitions(cur, da * r_t, p, gen, size=1)[0])
        values[i] = cur
    return BesselTimeSample(t=t, a_grid=a_grid, x_values=values / r_t, r_t=r_t)


def bessel_time_marginal_samples(t: float, a: float, p: BesqParams, n: int, rng: RngStream):
    """n independent draws of (R(t), X(t,a)); the workhorse for marginal and
    independence tests."""
    _require_unit_start(p)
    gen = rng.generator()
    r_t = sample_besq_transitions(1.0, t, p, gen, size=n)
    r_end = sample_besq_transitions(r_t, a * r_t, p, gen)
    return r_t, r_end / r_t


def bessel_time_pair_samples(t: float, a1: float, a2: float, p: BesqParams, n: int, rng: RngStream):
    """n independent draws of (X(t,a1), X(t,a2)) with 0 < a1 < a2."""
    if not 0 < a1 < a2:
        raise ValueError("need 0 < a1 < a2")
    _require_unit_start(p)
    gen = rng.generator()
    r_t = sample_besq_transitions(1.0, t, p, gen, size=n)
    r_1 = sample_besq_transitions(r_t, a1 * r_t, p, gen)
    r_2 = sample_besq_transitions(r_1, (a2 - a1) * r_t, p, gen)
    return r_1 / r_t, r_2 / r_t


def correlated_pair_samples(t: float, a: float, p: BesqParams, n: int, rng: RngStream):
    """n joint draws of (X(t,a), R(t+a)) from one underlying path each.

    The three time points {t, t+a, t+aR(t)} are visited in sorted order,
    which depends on whether R(t) >= 1; both branches chain exact
    transitions along the same trajectory.
    """
    _require_unit_start(p)
    gen = rng.generator()
    r_t = sample_besq_transitions(1.0, t, p, gen, size=n)
    check_r = np.empty(n)
    u = np.empty(n)

    hi = r_t >= 1.0
    if np.any(hi):
        r = r_t[hi]
        u_hi = sample_besq_transitions(r, np.full(r.shape, a), p, gen)       # R(t+a)
        r_end = sample_besq_transitions(u_hi, a * (r - 1.0), p, gen)         # R(t+aR(t))
        check_r[hi] = r_end / r
        u[hi] = u_hi
    lo = ~hi
    if np.any(lo):
        r = r_t[lo]
        r_mid = sample_besq_transitions(r, a * r, p, gen)                    # R(t+aR(t))
        u_lo = sample_besq_transitions(r_mid, a * (1.0 - r), p, gen)         # R(t+a)
        check_r[lo] = r_mid / r
        u[lo] = u_lo
    return check_r, u


def correlated_pair_sample(t: float, a: float, p: BesqParams, rng: RngStream) -> CorrelatedPairSample:
    check_r, u = correlated_pair_samples(t, a, p, 1, rng)
    return CorrelatedPairSample(a=a, check_r=float(check_r[0]), u=float(u[0]))


def h_moment(s: float, t: float, delta: float) -> float:
    """H(s,t,delta) = E R(s)R(t) for R started at 1 with dimension delta.

    H = 1 + (t^s)(delta+4) + 2 delta (t^s)^2 + delta (tvs)(1 + delta (t^s))
    with ^ = min, v = max; symmetric in (s, t).
    """
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    lo, hi = (s, t) if s <= t else (t, s)
    return 1.0 + lo * (delta + 4.0) + 2.0 * delta * lo * lo + delta * hi * (1.0 + delta * lo)


def pair_covariance_formula(t: float, a: float, p: BesqParams) -> float:
    """Cov(X(t,a), R(t+a)) = E[R(t) H(a, a/R(t), delta)] - (1+da)(1+dt+da).

    The expectation is a quadrature of r H(a, a/r, delta) q_t(1,r) over r,
    split at the min/max kink r = 1; relative tolerance 1e-6 enforced.
    """
    from .core import besq_transition_density

    if t <= 0:
        raise ValueError("t must be positive")
    if a < 0:
        raise ValueError("a must be nonnegative")
    d = p.delta

    def integrand(r):
        return r * h_moment(a, a / r, d) * besq_transition_density(1.0, r, t, p)

    lo, e_lo = quad(integrand, 0.0, 1.0, limit=300, epsabs=1e-12, epsrel=1e-9)
    hi, e_hi = quad(integrand, 1.0, np.inf, limit=300, epsabs=1e-12, epsrel=1e-9)
    total = lo + hi
    if total != 0.0 and (e_lo + e_hi) > 1e-6 * abs(total):
        raise RuntimeError(
            f"covariance quadrature did not converge: value={total}, err={e_lo + e_hi}"
        )
    return total - (1.0 + d * a) * (1.0 + d * t + d * a)


# catalog of bounded test functions for reproducible MC comparisons
TEST_FUNCTIONS = {
    "exp": lambda x: np.exp(-x),
    "cap": lambda x: np.minimum(1.0, x),
    "ind": lambda x: (x <= 2.0).astype(float),
    "one": lambda x: np.ones_like(x),
}


def triple_identity_check(
    f_spec: str, g_spec: str, t: float, a: float, p: BesqParams, n: int, rng: RngStream
):
    """Both sides of the three-process representation of E f(X(t,a)) g(R(t+a)).

    Left side samples the pair from one path; right side uses three
    independent unit-start processes with the indicator split on whether
    the first one exceeds 1 at time t, nesting the random time arguments.
    Returns (lhs, rhs, pooled standard error).
    """
    f = TEST_FUNCTIONS[f_spec]
    g = TEST_FUNCTIONS[g_spec]
    check_r, u = correlated_pair_samples(t, a, p, n, rng.substream(0))
    lhs_samples = f(check_r) * g(u)

    gen = rng.substream(1).generator()
    r1 = sample_besq_transitions(1.0, t, p, gen, size=n)
    rhs_samples = np.empty(n)
    hi = r1 >= 1.0
    if np.any(hi):
        r1h = r1[hi]
        r2 = sample_besq_transitions(np.ones(r1h.shape), a / r1h, p, gen)
        r3 = sample_besq_transitions(np.ones(r1h.shape), a * (r1h - 1.0) / (r1h * r2), p, gen)
        rhs_samples[hi] = f(r2 * r3) * g(r1h * r2)
    lo = ~hi
    if np.any(lo):
        r1l = r1[lo]
        r2 = sample_besq_transitions(np.ones(r1l.shape), np.full(r1l.shape, a), p, gen)
        r3 = sample_besq_transitions(np.ones(r1l.shape), a * (1.0 - r1l) / (r1l * r2), p, gen)
        rhs_samples[lo] = f(r2) * g(r1l * r2 * r3)

    lhs, rhs = float(np.mean(lhs_samples)), float(np.mean(rhs_samples))
    se = math.sqrt(np.var(lhs_samples) / n + np.var(rhs_samples) / n)
    return lhs, rhs, se


# ---------------------------------------------------------------------------
# post-hitting constructions
# ---------------------------------------------------------------------------

def post_hit_samples(
    y: float,
    eps: float,
    p: BesqParams,
    step: float,
    n: int,
    rng: RngStream,
    horizon: float = None,
):
    """(tau_y, R(tau_y + eps*y)) for n paths; nan where no hit before cap.

    tau is grid-detected (see simulate_hitting_times); the post-hit value
    is one exact transition of length eps*y started from y itself, which
    is the exact conditional law given the hit.
    """
    if y <= 0 or eps <= 0:
        raise ValueError("require y > 0 and eps > 0")
    if horizon is None:
        horizon = 50.0 * max(1.0, y)
    tau = simulate_hitting_times(y, p, step, horizon, n, rng.substream(0))
    values = np.full(n, np.nan)
    hit = ~np.isnan(tau)
    if np.any(hit):
        gen = rng.substream(1).generator()
        values[hit] = sample_besq_transitions(y, eps * y, p, gen, size=int(hit.sum()))
    return tau, values


def post_hit_sample(y: float, eps: float, p: BesqParams, step: float, rng: RngStream,
                    horizon: float = None):
    """One draw of R(tau_y + eps*y), or None when the path never hits y
    before the horizon cap (possible for y < x0 with mu > 0)."""
    tau, values = post_hit_samples(y, eps, p, step, 1, rng, horizon=horizon)
    return None if np.isnan(values[0]) else float(values[0])


def stopping_time_ratio_samples(
    y: float, alpha: float, p: BesqParams, step: float, n: int, rng: RngStream, horizon: float = None
):
    """Samples for the alpha*tau_y identity R(alpha tau_y)/y = X(tau_y, tau_y(alpha-1)/y).

    Left side continues the path from its own hit: one exact transition of
    length (alpha-1) tau from y, divided by y.  Right side evaluates an
    independent unit-start process at the random times tau'(alpha-1)/y with
    tau' an independent copy.  Censored paths are dropped from both sides.
    """
    if alpha < 1.0:
        raise ValueError("alpha must be at least 1")
    if horizon is None:
        horizon = 50.0 * max(1.0, y)
    tau_l = simulate_hitting_times(y, p, step, horizon, n, rng.substream(0))
    tau_r = simulate_hitting_times(y, p, step, horizon, n, rng.substream(1))
    gen = rng.substream(2).generator()
    tl = tau_l[~np.isnan(tau_l)]
    tr = tau_r[~np.isnan(tau_r)]
    lhs = sample_besq_transitions(y, (alpha - 1.0) * tl, p, gen) / y
    rhs = sample_besq_transitions(np.ones(tr.shape), tr * (alpha - 1.0) / y, p, gen)
    return lhs, rhs


def reflection_probabilities(
    y: float, b: float, t: float, p: BesqParams, step: float, n: int, rng: RngStream
):
    """MC estimates of P(R(t) >= b) and P(R'((t-tau_y)/y) >= b/y, tau_y <= t).

    Returns (p_direct, p_reflected, pooled_se).  Requires 1 <= y <= b so
    that reaching b from 1 forces a crossing of y.
    """
    if not (1.0 <= y <= b):
        raise ValueError("representation needs 1 <= y <= b")
    gen = rng.substream(0).generator()
    direct = sample_besq_transitions(1.0, t, p, gen, size=n) >= b
    tau = simulate_hitting_times(y, p, step, t, n, rng.substream(1))
    hit = ~np.isnan(tau)
    reflected = np.zeros(n, dtype=bool)
    if np.any(hit):
        gen2 = rng.substream(2).generator()
        r_hat = sample_besq_transitions(np.ones(int(hit.sum())), (t - tau[hit]) / y, p, gen2)
        reflected[hit] = r_hat >= b / y
    p1, p2 = float(np.mean(direct)), float(np.mean(reflected))
    se = math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / n)
    return p1, p2, se


# ---------------------------------------------------------------------------
# time inversion and the Brownian-clock identity
# ---------------------------------------------------------------------------

def time_inversion_samples(t: float, a: float, p: BesqParams, n: int, rng: RngStream):
    """Samples of t^2 R(1/t + a) versus S^{Rhat_t}(t^2 a).

    Left side follows one path through 1/t and 1/t + a.  Right side draws
    Rhat_t = t^2 R'(1/t) from an independent path and continues with an
    independent transition of duration t^2 a from that random start.
    """
    _require_unit_start(p)
    if t <= 0:
        raise ValueError("t must be positive")
    gen = rng.generator()
    r_inv = sample_besq_transitions(1.0, 1.0 / t, p, gen, size=n)
    lhs = t * t * sample_besq_transitions(r_inv, a, p, gen)
    r_hat = t * t * sample_besq_transitions(1.0, 1.0 / t, p, gen, size=n)
    rhs = sample_besq_transitions(r_hat, t * t * a, p, gen)
    return lhs, rhs


def lamperti_identity_samples(
    t: float, s: float, mu: float, step: float, n: int, rng: RngStream, batch: int = 20_000
):
    """Samples of R(A_t + s) versus an independent copy started from a
    lognormal point.

    The left side draws W = e^{2B_t + 2 mu t} from a simulated Brownian
    path (the clock value A_t is computed alongside, and R(A_t) = W is
    the Lamperti coupling), then applies one exact transition of length s
    from W.  The right side is an independent pipeline with a direct
    lognormal draw.  For s = 0 both sides reduce to the lognormal itself.
    """
    if t <= 0 or s < 0:
        raise ValueError("require t > 0 and s >= 0")
    p = BesqParams(mu=mu)
    n_steps = max(1, int(round(t / step)))
    dt = t / n_steps
    gen = rng.substream(0).generator()
    lhs = np.empty(n)
    done = 0
    while done < n:
        m = min(batch, n - done)
        incr = gen.normal(0.0, math.sqrt(dt), size=(m, n_steps))
        b_t = incr.sum(axis=1)
        w = np.exp(2.0 * b_t + 2.0 * mu * t)
        lhs[done:done + m] = sample_besq_transitions(w, s, p, gen) if s > 0 else w
        done += m
    gen2 = rng.substream(1).generator()
    w2 = np.exp(2.0 * gen2.normal(0.0, math.sqrt(t), size=n) + 2.0 * mu * t)
    rhs = sample_besq_transitions(w2, s, p, gen2) if s > 0 else w2
    return lhs, rhs
