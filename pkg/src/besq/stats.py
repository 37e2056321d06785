"""Statistical tests that turn distributional identities into pass/fail rows.

Three tests cover every identity in the suite: a two-sample
Kolmogorov-Smirnov test with the asymptotic critical value (sample sizes
here are always >= 1e4), a chi-square independence test on quantile-binned
contingency tables, and a k-standard-error check for moment formulas.
Each returns a TestResult whose ``passed`` flag is exactly
``statistic < critical_value``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np
from scipy.stats import chi2 as _chi2_dist

__all__ = [
    "TestResult",
    "VerificationReport",
    "ks_two_sample",
    "chi_square_independence",
    "mean_within_se",
]


@dataclass
class TestResult:
    identity_id: str
    statistic: float
    critical_value: float
    n: int
    seed: int
    passed: bool
    details: str = ""

    def row(self) -> dict:
        return {
            "identity_id": self.identity_id,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "n": self.n,
            "seed": self.seed,
            "passed": self.passed,
            "details": self.details,
        }


@dataclass
class VerificationReport:
    results: List[TestResult]
    suite_seed: int
    timestamp: Optional[str] = None
    config: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json(self) -> str:
        # timestamp deliberately excluded: reports must be byte-identical
        # across runs with the same seed and config
        payload = {
            "suite_seed": self.suite_seed,
            "config": self.config,
            "results": [r.row() for r in self.results],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = []
        header = f"{'identity':34s} {'statistic':>12s} {'critical':>12s} {'n':>9s} result"
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.results:
            lines.append(
                f"{r.identity_id:34s} {r.statistic:12.5g} {r.critical_value:12.5g} "
                f"{r.n:9d} {'pass' if r.passed else 'FAIL'}"
            )
        lines.append(f"{sum(r.passed for r in self.results)}/{len(self.results)} passed"
                     + (f"  (run at {self.timestamp})" if self.timestamp else ""))
        return "\n".join(lines)


def ks_two_sample(a, b, alpha: float = 0.01, identity_id: str = "ks", seed: int = 0) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test at level alpha.

    D = sup |F_a - F_b| against the asymptotic critical value
    c(alpha) sqrt((m+n)/(m n)), c(alpha) = sqrt(-ln(alpha/2)/2).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs nonempty samples")
    m, n = a.size, b.size
    sa, sb = np.sort(a), np.sort(b)
    support = np.concatenate([sa, sb])
    support.sort(kind="mergesort")
    f_a = np.searchsorted(sa, support, side="right") / m
    f_b = np.searchsorted(sb, support, side="right") / n
    d_stat = float(np.max(np.abs(f_a - f_b)))
    c_alpha = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    crit = c_alpha * math.sqrt((m + n) / (m * n))
    return TestResult(
        identity_id=identity_id, statistic=d_stat, critical_value=crit,
        n=min(m, n), seed=seed, passed=d_stat < crit,
        details=f"m={m} n={n} alpha={alpha}",
    )


def chi_square_independence(
    x, y, bins: int = 5, alpha: float = 0.01, identity_id: str = "chi2", seed: int = 0
) -> TestResult:
    """Chi-square independence test on a quantile-binned contingency table.

    Both margins are cut at their own empirical quantiles into ``bins``
    cells; under independence the statistic is asymptotically chi-square
    with (bins-1)^2 degrees of freedom.  Heavily tied margins that produce
    degenerate bins are reported as failures with a diagnostic.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("samples must have equal length")
    if bins < 2:
        raise ValueError("need at least 2 bins")
    qs = np.linspace(0, 1, bins + 1)[1:-1]
    x_edges = np.quantile(x, qs)
    y_edges = np.quantile(y, qs)
    if np.unique(x_edges).size != x_edges.size or np.unique(y_edges).size != y_edges.size:
        return TestResult(
            identity_id=identity_id, statistic=math.inf, critical_value=0.0,
            n=x.size, seed=seed, passed=False, details="degenerate quantile bins (ties)",
        )
    xi = np.searchsorted(x_edges, x, side="right")
    yi = np.searchsorted(y_edges, y, side="right")
    table = np.zeros((bins, bins))
    np.add.at(table, (xi, yi), 1.0)
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    expected = rows * cols / x.size
    stat = float(np.sum((table - expected) ** 2 / expected))
    dof = (bins - 1) ** 2
    crit = float(_chi2_dist.ppf(1.0 - alpha, dof))
    return TestResult(
        identity_id=identity_id, statistic=stat, critical_value=crit,
        n=x.size, seed=seed, passed=stat < crit,
        details=f"bins={bins} dof={dof} alpha={alpha}",
    )


def mean_within_se(
    samples, target: float, k: float = 3.0, identity_id: str = "mean", seed: int = 0
) -> TestResult:
    """Passes iff |sample mean - target| <= k standard errors."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("need at least two samples")
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    stat = abs(mean - target)
    crit = k * se
    return TestResult(
        identity_id=identity_id, statistic=stat, critical_value=crit,
        n=samples.size, seed=seed, passed=stat <= crit,
        details=f"mean={mean:.6g} target={target:.6g} se={se:.3g} k={k}",
    )
