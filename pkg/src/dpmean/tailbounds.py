"""Evaluators for the concentration bounds on sums/averages of bounded
k-th-moment variables, a Monte Carlo tail verifier, the bucket-partition
diagnostic, and the lemma-level check suite.

All logs are natural.  The hidden constants of the asymptotic statements are
handled by a frozen calibration protocol: a pre-registered search over
{1, 2, 4, 8, 16} picks the smallest dominating constant per (family, bound)
once (scripts/calibrate_tail_constants.py), and the acceptance suite asserts
domination with those frozen constants on fresh seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ParameterError,
    Seed,
    SyntheticSpec,
    derive_rng,
    sample_batch_means,
)

__all__ = [
    "TailBoundQuery",
    "BoundValue",
    "bound_heavytail",
    "bound_berry_esseen",
    "bound_highd",
    "bound_norm_onesample",
    "bound_markov",
    "berry_esseen_threshold",
    "heavytail_window",
    "highd_threshold",
    "acceptance_t_grid",
    "TailPoint",
    "mc_tail",
    "BucketPartition",
    "bucket_diagnostic",
    "LemmaCheckReport",
    "lemma_checks",
    "FROZEN_CALIBRATION",
]

# Frozen calibration constants per (family, bound), produced once by the
# pre-registered search in scripts/calibrate_tail_constants.py (1e6 trials,
# seed 20250810) and never retuned by tests.  The berry_esseen constant is
# driven by grid points whose true tail sits below the Monte Carlo
# resolution floor (empirical count 0, 3x Wilson stderr ~ 1.5e-6 against a
# bound ~ 1.7e-7), not by an observed violation.
FROZEN_CALIBRATION = {
    ("scaled_gaussian", "heavytail"): 1.0,
    ("scaled_gaussian", "berry_esseen"): 16.0,
    ("scaled_gaussian", "highd"): 1.0,
    ("point_mass_mixture", "heavytail"): 1.0,
    ("point_mass_mixture", "berry_esseen"): 16.0,
    ("point_mass_mixture", "highd"): 1.0,
}


@dataclass(frozen=True)
class TailBoundQuery:
    """(m, k, d, t, constant) tuple for evaluating one concentration bound."""

    m: int
    k: float
    t: float
    d: int = 1
    constant: float = 1.0

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ParameterError("need m >= 1 and d >= 1")
        if not (self.t > 0):
            raise ParameterError(f"t must be > 0, got {self.t}")
        if self.constant < 0:
            raise ParameterError("constant must be >= 0")


@dataclass(frozen=True)
class BoundValue:
    value: float
    valid: bool  # whether t lies in the theorem's validity window
    dominant: str | None = None


def berry_esseen_threshold(m: int, k: float) -> float:
    """Validity threshold sqrt((k-1) ln m / m) for the average-form tail bound."""
    return math.sqrt((k - 1) * math.log(m) / m)


def heavytail_window(m: int, k: float) -> tuple:
    """(lower, upper) validity window recorded for the heavy-tail sum theorem.

    Lower is sqrt(ln m / m) (the Theta(sqrt(log m / m)) shape with c1 = 1);
    upper is the explicit form (1/(3 e ln m 4^{k-1}))^{1/(k-2)} that the
    first-term-domination argument yields.  At desk-scale m the window can be
    empty; evaluators still compute, they only flag.
    """
    if m < 2:
        return math.inf, 0.0  # degenerate: no valid window at m = 1
    lower = math.sqrt(math.log(m) / m)
    upper = (1.0 / (3 * math.e * math.log(m) * 4 ** (k - 1))) ** (1.0 / (k - 2))
    return lower, upper


def highd_threshold(m: int, k: float, d: int, c3: float = 1.0) -> float:
    """High-dimensional validity threshold t1 = c3 sqrt(d ln m / m) (c3 = 1 pinned)."""
    return c3 * math.sqrt(d * math.log(m) / m)


def bound_heavytail(q: TailBoundQuery) -> BoundValue:
    """C * (1/(m^{k-1} t^k) + exp(-m t^2 / 12)) for the one-sided average tail.

    Requires k >= 3.  Out-of-window t is flagged, still evaluated.
    """
    if q.k < 3:
        raise ParameterError(f"heavy-tail sum bound needs k >= 3, got {q.k}")
    poly = 1.0 / (q.m ** (q.k - 1) * q.t**q.k)
    expo = math.exp(-q.m * q.t**2 / 12.0)
    lo, hi = heavytail_window(q.m, q.k)
    return BoundValue(
        value=q.constant * (poly + expo),
        valid=lo < q.t < hi,
        dominant="polynomial" if poly >= expo else "exponential",
    )


def bound_berry_esseen(q: TailBoundQuery) -> BoundValue:
    """C * m^{-k+1} t^{-k}, valid for t >= sqrt((k-1) ln m / m)."""
    value = q.constant * q.m ** (-q.k + 1) * q.t ** (-q.k)
    return BoundValue(value=value, valid=q.t >= berry_esseen_threshold(q.m, q.k))


def bound_highd(q: TailBoundQuery) -> BoundValue:
    """C * (d^{k/2}/(m^{k-1} t^k) + exp(-m t^2 / d)) for the L2-norm tail."""
    poly = q.d ** (q.k / 2) / (q.m ** (q.k - 1) * q.t**q.k)
    expo = math.exp(-q.m * q.t**2 / q.d)
    return BoundValue(
        value=q.constant * (poly + expo),
        valid=q.t >= highd_threshold(q.m, q.k, q.d),
        dominant="polynomial" if poly >= expo else "exponential",
    )


def bound_norm_onesample(d: int, k: float, t: float) -> float:
    """One-sample norm tail min(1, d^{k/2} t^{-k})."""
    if t <= 0:
        raise ParameterError("t must be > 0")
    return min(1.0, d ** (k / 2) * t ** (-k))


def bound_markov(k: float, t: float) -> float:
    """Markov tail min(1, t^{-k}) for mean zero, k-th moment at most 1."""
    if t <= 0:
        raise ParameterError("t must be > 0")
    return min(1.0, t ** (-k))


_BOUNDS = {
    "heavytail": bound_heavytail,
    "berry_esseen": bound_berry_esseen,
    "highd": bound_highd,
}


def acceptance_t_grid(bound: str, m: int, k: float, d: int = 1, points: int = 12) -> np.ndarray:
    """Pre-registered 12-point geometric t-grid for the domination tests.

    berry_esseen: [thresh, 3 thresh].  heavytail: [thresh_BE, max(1/ln m,
    2 thresh_BE)] (the explicit-constant window is empty at desk-scale m, so
    the grid starts at the average-form threshold, where the polynomial term
    is provably a valid bound, and spans up to the Theta(1/log m) shape).
    highd: [t1, 3 t1] with c3 = 1.
    """
    if bound == "berry_esseen":
        lo = berry_esseen_threshold(m, k)
        hi = 3 * lo
    elif bound == "heavytail":
        lo = berry_esseen_threshold(m, k)
        hi = max(1 / math.log(m), 2 * lo)
    elif bound == "highd":
        lo = highd_threshold(m, k, d)
        hi = 3 * lo
    else:
        raise ParameterError(f"unknown bound {bound!r}")
    return np.geomspace(lo, hi, points)


@dataclass(frozen=True)
class TailPoint:
    t: float
    empirical: float
    std_error: float


def _wilson_halfwidth(count: int, n: int, z: float = 1.0) -> float:
    return z / (n + z * z) * math.sqrt(count * (n - count) / n + z * z / 4)


def mc_tail(
    spec: SyntheticSpec,
    m: int,
    d: int,
    t_grid,
    trials: int,
    seed: Seed,
    mode: str = "auto",
) -> list:
    """Empirical tail probabilities of the m-sample average at each t.

    mode "one_sided" measures P[mean - mu >= t] (the univariate theorems'
    form), "two_sided" measures P[|mean - mu| >= t], "norm" measures
    P[||mean - mu||_2 >= t]; "auto" picks one_sided for d = 1 and norm
    otherwise.  Std errors are Wilson-interval (z = 1) half-widths.
    """
    if trials < 100_000:
        raise ParameterError(f"need trials >= 1e5, got {trials}")
    if d != spec.dim:
        raise ParameterError(f"d = {d} does not match spec dimension {spec.dim}")
    if mode == "auto":
        mode = "one_sided" if d == 1 else "norm"
    if mode not in ("one_sided", "two_sided", "norm"):
        raise ParameterError(f"unknown mode {mode!r}")
    if mode != "norm" and d != 1:
        raise ParameterError("one/two-sided modes are univariate")
    dev = sample_batch_means(spec, m, trials, seed) - spec.mean_vector()
    if mode == "one_sided":
        stat = dev[:, 0]
    elif mode == "two_sided":
        stat = np.abs(dev[:, 0])
    else:
        stat = np.linalg.norm(dev, axis=1)
    out = []
    for t in np.atleast_1d(t_grid):
        count = int((stat >= t).sum())
        out.append(
            TailPoint(
                t=float(t),
                empirical=count / trials,
                std_error=_wilson_halfwidth(count, trials),
            )
        )
    return out


@dataclass
class BucketPartition:
    """Dyadic partition of the moderate range [1/t, m t / (3 ln m)).

    Level ell covers [r2 / 2^ell, r2 / 2^{ell-1}); the claim under test says
    that when the moderate values sum to at least m t / 3, some level ell
    holds at least 2^{ell-1} values.
    """

    r1: float
    r2: float
    levels: list = field(default_factory=list)  # (ell, count) pairs
    s1_count: int = 0
    s2_count: int = 0
    s3_count: int = 0
    s2_sum: float = 0.0
    claim_applicable: bool = False
    claim_holds: bool = True


def bucket_diagnostic(values, t: float) -> BucketPartition:
    """Partition ``values`` into light/moderate/heavy and check the dyadic
    bucket claim: sum over moderates >= m t / 3 implies some |B_ell| >= 2^{ell-1}."""
    values = np.asarray(values, dtype=np.float64)
    m = values.size
    if m < 2:
        raise ParameterError("need at least 2 values")
    if not (t > 0):
        raise ParameterError("t must be > 0")
    r1 = 1.0 / t
    r2 = m * t / (3 * math.log(m))
    part = BucketPartition(r1=r1, r2=r2)
    part.s1_count = int((values < r1).sum())
    moderate = values[(values >= r1) & (values < r2)]
    part.s2_count = moderate.size
    part.s3_count = int((values >= r2).sum())
    part.s2_sum = float(moderate.sum())
    if r2 > r1:
        n_levels = max(1, math.ceil(math.log2(r2 / r1)))
        for ell in range(1, n_levels + 1):
            lo, hi = r2 / 2**ell, r2 / 2 ** (ell - 1)
            count = int(((values >= lo) & (values < hi)).sum())
            part.levels.append((ell, count))
    part.claim_applicable = part.s2_sum >= m * t / 3
    if part.claim_applicable:
        part.claim_holds = any(count >= 2 ** (ell - 1) for ell, count in part.levels)
    return part


@dataclass
class LemmaCheckReport:
    checks: list = field(default_factory=list)  # (name, passed, detail)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def add(self, name: str, ok: bool, detail: str) -> None:
        self.checks.append((name, bool(ok), detail))

    def summary(self) -> str:
        lines = [f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}" for name, ok, detail in self.checks]
        lines.append(f"lemma checks: {'all passed' if self.passed else 'FAILURES PRESENT'}")
        return "\n".join(lines)


def _lemma_families(k: float) -> list:
    return [
        SyntheticSpec("scaled_gaussian", mean=(0.0,), k=k),
        SyntheticSpec("point_mass_mixture", mean=(0.0,), k=k, extra={"alpha": 0.02, "v": [1.0]}),
        SyntheticSpec("student_t", mean=(0.0,), k=k, extra={"df": 2 * k}),
    ]


def lemma_checks(seed: Seed, trials: int = 200_000) -> LemmaCheckReport:
    """Run the lemma-level verification battery.

    (a) exact binomials C(m, j) <= (e m / j)^j for all m <= 64;
    (b) Monte Carlo Var(X 1{X < r}) <= 1 for mean-zero unit-k-th-moment
        generators over an r grid;
    (c) empirical Bernstein tails P[sum X_i >= m t] <= 1.1 exp(-m t^2/(1+rt))
        for truncated-Gaussian variables (non-positive mean, variance <= 1,
        X <= r) over an (m, t, r) grid.
    """
    report = LemmaCheckReport()

    worst = None
    ok = True
    for m in range(1, 65):
        for j in range(1, m + 1):
            lhs = math.comb(m, j)
            rhs = (math.e * m / j) ** j
            if lhs > rhs:
                ok = False
                worst = (m, j)
    report.add(
        "binomial_upper_bound",
        ok,
        "C(m, j) <= (em/j)^j for all m <= 64" if ok else f"violated at {worst}",
    )

    for spec in _lemma_families(3.5):
        draws = sample_batch_means(spec, 1, trials, seed)[:, 0]
        worst_var, worst_r = 0.0, None
        for r in (0.5, 1.0, 2.0, math.inf):
            y = np.where(draws < r, draws, 0.0)
            var = float(y.var(ddof=1))
            if var > worst_var:
                worst_var, worst_r = var, r
        slack = 1.0 + 0.03  # MC slack at 2e5 draws
        report.add(
            f"truncated_variance[{spec.family}]",
            worst_var <= slack,
            f"max Var(X 1(X<r)) = {worst_var:.4f} at r={worst_r} (limit 1 + slack)",
        )

    rng = derive_rng(seed, 99)
    ok = True
    detail = []
    for m in (16, 64):
        draws = rng.standard_normal((trials, m))
        for r in (0.5, 1.0, 2.0):
            x = np.minimum(draws, r)
            sums = x.sum(axis=1)
            for t in (0.25, 0.5, 1.0):
                bound = math.exp(-m * t * t / (1 + r * t))
                emp = float((sums >= m * t).mean())
                if emp > 1.1 * bound:
                    ok = False
                    detail.append(f"(m={m}, r={r}, t={t}): {emp:.2e} > 1.1 * {bound:.2e}")
    report.add(
        "bernstein_nonpositive_mean",
        ok,
        "empirical <= 1.1 * bound on the whole grid" if ok else "; ".join(detail),
    )
    return report
