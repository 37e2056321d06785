"""Catalog of distributional identities and the deterministic suite runner.

Each entry converts one identity into a TestResult: statistical tests run
at alpha = 0.01 on a dedicated substream of the master seed, so the whole
report is a pure function of (config, seed) and entries may run in worker
threads without affecting the output.  A test-mode hook can corrupt one
entry's sampling side (wrong index, skipped normalization) to demonstrate
that the corresponding test actually has power against that identity.

Entry ids are stable API: reports key on them and the CLI filters by them.
"""

from __future__ import annotations

import datetime as _dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Optional

import numpy as np

from .core import BesqParams, sample_besq_transitions, simulate_gbm_clock, simulate_hitting_times
from .bessel_time import (
    bessel_time_marginal_samples,
    bessel_time_pair_samples,
    correlated_pair_samples,
    lamperti_identity_samples,
    pair_covariance_formula,
    post_hit_samples,
    reflection_probabilities,
    stopping_time_ratio_samples,
    time_inversion_samples,
    triple_identity_check,
)
from .hitting import conditional_hitting_cdf, solve_hitting_density_direct, volterra_residual
from .rng import RngStream
from .stats import TestResult, VerificationReport, chi_square_independence, ks_two_sample, mean_within_se

__all__ = ["SuiteConfig", "run_identity_suite", "IDENTITY_IDS"]


@dataclass
class SuiteConfig:
    n: int = 100_000          # draws per statistical comparison
    alpha: float = 0.01
    grid_step: float = 1e-3   # hitting-time detection step inside the suite
    clock_step: float = 1e-3  # Brownian clock step
    workers: int = 1
    corrupt_identity: Optional[str] = None  # test-mode hook

    def snapshot(self) -> dict:
        return asdict(self)


_CORRUPT_DMU = 0.25  # index shift used by the corruption hook


def _p(mu: float, corrupt: bool) -> BesqParams:
    return BesqParams(mu=mu + _CORRUPT_DMU) if corrupt else BesqParams(mu=mu)


def _combine(identity_id, cfg, rng, parts: List[TestResult], details: str) -> TestResult:
    # normalized max: passes iff every part passes
    ratios = [p.statistic / p.critical_value if p.critical_value > 0 else math.inf * (p.statistic > 0)
              for p in parts]
    worst = int(np.argmax(ratios))
    return TestResult(
        identity_id=identity_id,
        statistic=float(ratios[worst]),
        critical_value=1.0,
        n=max(p.n for p in parts),
        seed=rng.seed,
        passed=all(p.passed for p in parts),
        details=details + f" | worst: {parts[worst].details}",
    )


# ---------------------------------------------------------------------------
# catalog entries
# ---------------------------------------------------------------------------

def _ratio_marginal(cfg, rng, corrupt):
    t, a, mu = 0.7, 0.5, 0.0
    p = BesqParams(mu=mu)
    _, x = bessel_time_marginal_samples(t, a, _p(mu, corrupt), cfg.n, rng.substream(0))
    gen = rng.substream(1).generator()
    r_a = sample_besq_transitions(1.0, a, p, gen, size=cfg.n)
    res = ks_two_sample(x, r_a, cfg.alpha, "ratio-marginal", rng.seed)
    res.details += f" | X({t},{a}) vs R({a}), mu={mu}"
    return res


def _ratio_independence(cfg, rng, corrupt):
    t, a, mu = 1.0, 1.0, 0.0
    r_t, x = bessel_time_marginal_samples(t, a, BesqParams(mu=mu), cfg.n, rng.substream(0))
    if corrupt:
        x = x * r_t / (1.0 + 2.0 * (mu + 1.0) * t)  # drop the ratio normalization
    res = chi_square_independence(r_t, x, 5, cfg.alpha, "ratio-independence", rng.seed)
    res.details += f" | (R({t}), X({t},{a})), mu={mu}"
    return res


def _post_hit_law(cfg, rng, corrupt):
    y, eps, mu = 2.0, 0.3, 0.0
    _, vals = post_hit_samples(y, eps, _p(mu, corrupt), cfg.grid_step, cfg.n, rng.substream(0))
    vals = vals[~np.isnan(vals)]
    gen = rng.substream(1).generator()
    ref = y * sample_besq_transitions(1.0, eps, BesqParams(mu=mu), gen, size=cfg.n)
    res = ks_two_sample(vals, ref, cfg.alpha, "post-hit-law", rng.seed)
    res.details += f" | R(tau_{y}+{eps}*{y}) vs {y}*R({eps})"
    return res


def _post_hit_conditional(cfg, rng, corrupt):
    y, eps, mu, t_cond = 2.0, 0.3, 0.0, 0.5
    tau, vals = post_hit_samples(y, eps, _p(mu, corrupt), cfg.grid_step, cfg.n, rng.substream(0))
    keep = (~np.isnan(vals)) & (tau > t_cond)
    gen = rng.substream(1).generator()
    ref = y * sample_besq_transitions(1.0, eps, BesqParams(mu=mu), gen, size=cfg.n)
    res = ks_two_sample(vals[keep], ref, cfg.alpha, "post-hit-conditional", rng.seed)
    res.details += f" | given tau_{y} > {t_cond} (kept {int(keep.sum())})"
    return res


def _post_hit_window(cfg, rng, corrupt):
    # window probability P(|R(tau_y + eps y) - y| <= 0.1 y) is strictly
    # decreasing in eps (continuity at tau forces it toward 1 as eps -> 0)
    y, mu = 2.0, 0.0
    eps_list = [0.001, 0.01, 0.1]
    if corrupt:
        eps_list = [0.01, 0.01, 0.01]
    probs = []
    for i, eps in enumerate(eps_list):
        _, vals = post_hit_samples(y, eps, BesqParams(mu=mu), cfg.grid_step, cfg.n, rng.substream(i))
        vals = vals[~np.isnan(vals)]
        probs.append(float(np.mean(np.abs(vals - y) <= 0.1 * y)))
    worst_gap = max(probs[i + 1] - probs[i] for i in range(len(probs) - 1))
    return TestResult(
        identity_id="post-hit-window", statistic=worst_gap, critical_value=0.0,
        n=cfg.n, seed=rng.seed, passed=worst_gap < 0.0,
        details=f"P at eps {eps_list}: {[round(q, 4) for q in probs]} (decreasing in eps)",
    )


def _ratio_process_law(cfg, rng, corrupt):
    t, a1, a2, mu = 1.0, 0.3, 0.9, 0.0
    p = BesqParams(mu=mu)
    x1, x2 = bessel_time_pair_samples(t, a1, a2, _p(mu, corrupt), cfg.n, rng.substream(0))
    gen = rng.substream(1).generator()
    r1 = sample_besq_transitions(1.0, a1, p, gen, size=cfg.n)
    r2 = sample_besq_transitions(r1, a2 - a1, p, gen)
    parts = [
        ks_two_sample(x1, r1, cfg.alpha, "first coordinate", rng.seed),
        ks_two_sample(x2 / x1, r2 / r1, cfg.alpha, "increment ratio", rng.seed),
    ]
    return _combine("ratio-process-law", cfg, rng, parts,
                    f"(X({t},{a1}), X({t},{a2})) vs BESQ pair")


def _ratio_at_stopping_time(cfg, rng, corrupt):
    y, a, mu = 1.5, 0.5, 0.0
    p = BesqParams(mu=mu)
    tau = simulate_hitting_times(y, p, cfg.grid_step, 50.0, cfg.n, rng.substream(0))
    tau = tau[~np.isnan(tau)]
    gen = rng.substream(1).generator()
    x = sample_besq_transitions(y, a * y, _p(mu, corrupt), gen, size=tau.size) / y
    gen2 = rng.substream(2).generator()
    r_a = sample_besq_transitions(1.0, a, p, gen2, size=cfg.n)
    parts = [
        ks_two_sample(x, r_a, cfg.alpha, "marginal at stopping time", rng.seed),
        chi_square_independence(tau, x, 5, cfg.alpha, "independence of tau", rng.seed),
    ]
    return _combine("ratio-at-stopping-time", cfg, rng, parts,
                    f"X(tau_{y}, {a}) vs R({a}) and independence from tau")


def _reflection(cfg, rng, corrupt):
    y, b, t, mu = 1.5, 2.5, 1.0, 0.0
    p = BesqParams(mu=mu)
    if corrupt:
        # wrong index in the restarted copy only
        p1, p2, se = _reflection_corrupt(cfg, rng, y, b, t, mu)
    else:
        p1, p2, se = reflection_probabilities(y, b, t, p, cfg.grid_step, cfg.n, rng)
    return TestResult(
        identity_id="reflection", statistic=abs(p1 - p2), critical_value=3.0 * se,
        n=cfg.n, seed=rng.seed, passed=abs(p1 - p2) < 3.0 * se,
        details=f"P(R({t})>={b})={p1:.5f} restarted={p2:.5f} se={se:.5f}",
    )


def _reflection_corrupt(cfg, rng, y, b, t, mu):
    p = BesqParams(mu=mu)
    gen = rng.substream(0).generator()
    direct = sample_besq_transitions(1.0, t, p, gen, size=cfg.n) >= b
    tau = simulate_hitting_times(y, p, cfg.grid_step, t, cfg.n, rng.substream(1))
    hit = ~np.isnan(tau)
    reflected = np.zeros(cfg.n, dtype=bool)
    gen2 = rng.substream(2).generator()
    bad = BesqParams(mu=mu + _CORRUPT_DMU)
    r_hat = sample_besq_transitions(np.ones(int(hit.sum())), (t - tau[hit]) / y, bad, gen2)
    reflected[hit] = r_hat >= b / y
    p1, p2 = float(np.mean(direct)), float(np.mean(reflected))
    se = math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / cfg.n)
    return p1, p2, se


def _stopping_time_scaling(cfg, rng, corrupt):
    y, alpha_mult, mu = 1.5, 2.0, 0.0
    lhs, rhs = stopping_time_ratio_samples(y, alpha_mult, BesqParams(mu=mu), cfg.grid_step,
                                           cfg.n, rng)
    if corrupt:
        gen = rng.substream(9).generator()
        rhs = sample_besq_transitions(np.ones(rhs.shape), np.full(rhs.shape, (alpha_mult - 1.0) / y),
                                      BesqParams(mu=mu + _CORRUPT_DMU), gen)
    res = ks_two_sample(lhs, rhs, cfg.alpha, "stopping-time-scaling", rng.seed)
    res.details += f" | R({alpha_mult}*tau_{y})/{y} vs independent copy at tau'({alpha_mult}-1)/{y}"
    return res


def _markov_restart(cfg, rng, corrupt):
    t, s, mu = 0.8, 0.7, 0.5
    p = BesqParams(mu=mu)
    gen = rng.substream(0).generator()
    one_step = sample_besq_transitions(1.0, t + s, p, gen, size=cfg.n)
    gen2 = rng.substream(1).generator()
    r_t = sample_besq_transitions(1.0, t, p, gen2, size=cfg.n)
    two_step = sample_besq_transitions(r_t, s, _p(mu, corrupt), gen2)
    res = ks_two_sample(one_step, two_step, cfg.alpha, "markov-restart", rng.seed)
    res.details += f" | R({t}+{s}) vs restarted copy from R({t})"
    return res


def _conditional_mean(cfg, rng, corrupt):
    t, a, mu = 1.0, 0.5, 0.0   # delta = 2, target (1+da)(1+dt) = 6
    p = BesqParams(mu=mu)
    d = p.delta
    gen = rng.substream(0).generator()
    r_t = sample_besq_transitions(1.0, t, p, gen, size=cfg.n)
    val = sample_besq_transitions(r_t, a * r_t, _p(mu, corrupt), gen)
    target = (1.0 + d * a) * (1.0 + d * t)
    parts = [mean_within_se(val, target, 3.0, "unconditional mean", rng.seed)]
    # E[val - (1+da) R(t) | R(t) in bin] = 0 exactly, and differencing keeps
    # the bin-mean noise inside the tested statistic
    edges = np.quantile(r_t, np.linspace(0, 1, 6)[1:-1])
    bins = np.searchsorted(edges, r_t, side="right")
    centered = val - (1.0 + d * a) * r_t
    for bb in range(5):
        parts.append(mean_within_se(
            centered[bins == bb], 0.0, 3.0, f"bin {bb} conditional mean", rng.seed,
        ))
    return _combine("conditional-mean", cfg, rng, parts,
                    f"E R(t+aR(t)) vs (1+{d}*{a})(1+{d}*{t})={target}")


def _pair_covariance(cfg, rng, corrupt):
    t, a, mu = 1.0, 1.0, 0.0
    p = BesqParams(mu=mu)
    check_r, u = correlated_pair_samples(t, a, _p(mu, corrupt), cfg.n, rng)
    prod = (check_r - check_r.mean()) * (u - u.mean())
    cov = float(prod.mean())
    se = float(np.std(prod, ddof=1) / math.sqrt(cfg.n))
    formula = pair_covariance_formula(t, a, p)
    return TestResult(
        identity_id="pair-covariance", statistic=abs(cov - formula), critical_value=3.0 * se,
        n=cfg.n, seed=rng.seed, passed=abs(cov - formula) < 3.0 * se,
        details=f"MC cov={cov:.5f} formula={formula:.5f} se={se:.5f}",
    )


def _triple_identity(cfg, rng, corrupt):
    t, a, mu = 1.0, 1.0, 0.0
    lhs, rhs, se = triple_identity_check("exp", "exp", t, a, _p(mu, False), cfg.n, rng)
    if corrupt:
        lhs2, _, _ = triple_identity_check("exp", "exp", t, a, _p(mu, True), cfg.n, rng.substream(7))
        lhs = lhs2
    return TestResult(
        identity_id="triple-identity", statistic=abs(lhs - rhs), critical_value=3.0 * se,
        n=cfg.n, seed=rng.seed, passed=abs(lhs - rhs) < 3.0 * se,
        details=f"pair side={lhs:.6f} three-process side={rhs:.6f} se={se:.2g}",
    )


def _time_inversion(cfg, rng, corrupt):
    t, a, mu = 1.0, 1.0, 0.0
    lhs, rhs = time_inversion_samples(t, a, _p(mu, False), cfg.n, rng.substream(0))
    if corrupt:
        _, rhs = time_inversion_samples(t, a, _p(mu, True), cfg.n, rng.substream(1))
    res = ks_two_sample(lhs, rhs, cfg.alpha, "time-inversion", rng.seed)
    res.details += f" | t^2 R(1/t+a) vs restarted copy, (t,a)=({t},{a})"
    return res


def _time_inversion_half(cfg, rng, corrupt):
    t, mu = 2.0, 0.0
    a = 1.0 / t
    lhs, rhs = time_inversion_samples(t, a, _p(mu, False), cfg.n, rng.substream(0))
    if corrupt:
        _, rhs = time_inversion_samples(t, a, _p(mu, True), cfg.n, rng.substream(1))
    res = ks_two_sample(lhs, rhs, cfg.alpha, "time-inversion-half", rng.seed)
    res.details += f" | a = 1/t case: t^2 R(2/t) vs copy run for duration t"
    return res


def _clock_decomposition(cfg, rng, corrupt):
    h, s, mu = 0.4, 0.35, 0.3
    n_paths = 2000
    worst = 0.0
    ratios = np.empty(n_paths)
    w_h = np.empty(n_paths)
    for i in range(n_paths):
        clock = simulate_gbm_clock(mu, cfg.clock_step, h + s, rng.substream(i))
        k = int(round(h / (clock.times[1] - clock.times[0])))
        a_h = clock.a_values[k]
        e_h = clock.exp_values[k]
        shifted = np.exp(2.0 * (clock.b_values[k:] - clock.b_values[k])
                         + 2.0 * mu * (clock.times[k:] - clock.times[k]))
        dt = clock.times[1] - clock.times[0]
        a_hat = np.concatenate([[0.0], np.cumsum(0.5 * dt * (shifted[:-1] + shifted[1:]))])
        recomposed = a_h + e_h * a_hat[-1]
        worst = max(worst, abs(recomposed - clock.a_values[-1]) / clock.a_values[-1])
        ratios[i] = clock.exp_values[-1] / e_h
        w_h[i] = e_h
    mu_eff = mu + _CORRUPT_DMU if corrupt else mu
    gen = rng.substream(10_000).generator()
    ref = np.exp(2.0 * gen.normal(0.0, math.sqrt(s), size=cfg.n) + 2.0 * mu_eff * s)
    parts = [
        TestResult("pathwise decomposition", worst, 1e-10, n_paths, rng.seed, worst < 1e-10,
                   f"max rel defect {worst:.2e}"),
        ks_two_sample(ratios, ref, cfg.alpha, "shifted exponential law", rng.seed),
        chi_square_independence(w_h, ratios, 5, cfg.alpha, "independence of history", rng.seed),
    ]
    return _combine("clock-decomposition", cfg, rng, parts,
                    f"A_(h+s) = A_h + e^(2B_h+2mu h) A-hat_s at (h,s,mu)=({h},{s},{mu})")


def _clock_restart_law(cfg, rng, corrupt):
    t, mu = 0.5, 0.0
    lhs0, _ = lamperti_identity_samples(t, 0.0, mu, cfg.clock_step, cfg.n, rng.substream(0))
    gen = rng.substream(1).generator()
    mu_eff = mu + _CORRUPT_DMU if corrupt else mu
    ref = np.exp(gen.normal(2.0 * mu_eff * t, 2.0 * math.sqrt(t), size=cfg.n))
    s = 0.5
    lhs, rhs = lamperti_identity_samples(t, s, mu, cfg.clock_step, cfg.n, rng.substream(2))
    parts = [
        ks_two_sample(lhs0, ref, cfg.alpha, "s=0 lognormal law", rng.seed),
        ks_two_sample(lhs, rhs, cfg.alpha, f"s={s} restarted law", rng.seed),
    ]
    return _combine("clock-restart-law", cfg, rng, parts,
                    f"R(A_t + s) vs copy from lognormal start, t={t}")


def _hitting_equation_residual(cfg, rng, corrupt):
    y, mu = 1.5, 0.0
    sol = solve_hitting_density_direct(y, mu, 5.0, 1024)
    if corrupt:
        sol.g_values = sol.g_values * 1.02
    res = volterra_residual(sol)
    worst = float(np.max(np.abs(res)))
    return TestResult(
        identity_id="hitting-equation-residual", statistic=worst, critical_value=1e-3,
        n=sol.g_values.size, seed=rng.seed, passed=worst < 1e-3,
        details=f"max relative residual at off-collocation points, y={y}, mu={mu}",
    )


def _conditional_hit_certainty(cfg, rng, corrupt):
    mu = 0.0
    sol = solve_hitting_density_direct(1.0, mu, 1.0, 64)
    worst = 0.0
    for x in (1.0, 2.0, 5.0):
        for t in (0.5, 1.0):
            if corrupt:
                v = _corrupt_certainty(t, x, mu)
            else:
                v = conditional_hitting_cdf(1.0, t, t, x, sol, mu)
            worst = max(worst, abs(v - 1.0))
    return TestResult(
        identity_id="conditional-hit-certainty", statistic=worst, critical_value=1e-3,
        n=6, seed=rng.seed, passed=worst < 1e-3,
        details="P(tau_1 <= t | R(t)=x) over x in {1,2,5}, t in {0.5,1}",
    )


def _corrupt_certainty(t, x, mu):
    from .core import besq_transition_density
    num = besq_transition_density(1.0, x, t, BesqParams(mu=mu + _CORRUPT_DMU))
    den = besq_transition_density(1.0, x, t, BesqParams(mu=mu))
    return min(1.0, num / den)


_CATALOG: List[tuple] = [
    ("ratio-marginal", _ratio_marginal),
    ("ratio-independence", _ratio_independence),
    ("post-hit-law", _post_hit_law),
    ("post-hit-conditional", _post_hit_conditional),
    ("post-hit-window", _post_hit_window),
    ("ratio-process-law", _ratio_process_law),
    ("ratio-at-stopping-time", _ratio_at_stopping_time),
    ("reflection", _reflection),
    ("stopping-time-scaling", _stopping_time_scaling),
    ("markov-restart", _markov_restart),
    ("conditional-mean", _conditional_mean),
    ("pair-covariance", _pair_covariance),
    ("triple-identity", _triple_identity),
    ("time-inversion", _time_inversion),
    ("time-inversion-half", _time_inversion_half),
    ("clock-decomposition", _clock_decomposition),
    ("clock-restart-law", _clock_restart_law),
    ("hitting-equation-residual", _hitting_equation_residual),
    ("conditional-hit-certainty", _conditional_hit_certainty),
]

IDENTITY_IDS = [name for name, _ in _CATALOG]


def run_identity_suite(
    config: SuiteConfig, master_seed: int, only: Optional[List[str]] = None
) -> VerificationReport:
    """Run every catalog entry on its own substream of the master seed.

    Individual identity failures never abort the suite; infrastructure
    errors (bad config, solver exceptions) do propagate.  The report is
    deterministic given (config, master_seed) regardless of worker count.
    """
    selected = [(i, name, fn) for i, (name, fn) in enumerate(_CATALOG)
                if only is None or name in only]
    if only is not None:
        unknown = set(only) - {name for _, name, _ in selected}
        if unknown:
            raise ValueError(f"unknown identity ids: {sorted(unknown)}")

    def run_one(item):
        idx, name, fn = item
        stream = RngStream(master_seed, idx)
        return fn(config, stream, config.corrupt_identity == name)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_one, selected))
    else:
        results = [run_one(item) for item in selected]
    return VerificationReport(
        results=results,
        suite_seed=master_seed,
        timestamp=_dt.datetime.now().isoformat(timespec="seconds"),
        config=config.snapshot(),
    )
