"""Differential-privacy primitives: Laplace/Gaussian noise, private histograms,
the exponential mechanism, and a composition ledger.

Constants for the stability histogram follow the standard instantiation
(threshold 1 + 2 ln(2/delta)/epsilon); the source guarantees are asymptotic,
so these are our pinned choices.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ParameterError, PrivacyBudget, Seed, derive_rng

__all__ = [
    "laplace_noise",
    "gaussian_mechanism",
    "HistogramSpec",
    "NoisyHistogram",
    "private_histogram",
    "exponential_mechanism",
    "BudgetLedger",
    "ledger_total",
]


def _laplace(rng: np.random.Generator, scale: float, size=None) -> np.ndarray | float:
    # Inverse-CDF from a single uniform per draw keeps the stream accounting
    # trivial: one uniform consumed per variate.
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_noise(scale: float, seed: Seed, size: int | None = None):
    """Zero-centered Laplace(scale) draw(s); scalar when ``size`` is None."""
    if not (scale > 0):
        raise ParameterError(f"scale must be > 0, got {scale}")
    rng = derive_rng(seed)
    out = _laplace(rng, scale, size)
    return float(out) if size is None else out


def gaussian_mechanism(
    value: np.ndarray, l2_sensitivity: float, budget: PrivacyBudget, seed: Seed
) -> np.ndarray:
    """Add isotropic Gaussian noise calibrated to (epsilon, delta).

    Per-coordinate stddev is ``l2_sensitivity * sqrt(2 ln(2/delta)) / epsilon``.
    Requires delta > 0; zero sensitivity returns the value exactly.
    """
    if budget.delta <= 0:
        raise ParameterError("gaussian mechanism requires delta > 0")
    if l2_sensitivity < 0:
        raise ParameterError("sensitivity must be >= 0")
    value = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if l2_sensitivity == 0:
        return value.copy()
    sigma = l2_sensitivity * math.sqrt(2 * math.log(2 / budget.delta)) / budget.epsilon
    rng = derive_rng(seed)
    return value + sigma * rng.standard_normal(value.shape)


@dataclass(frozen=True)
class HistogramSpec:
    """Contiguous width-r buckets covering [-R-2r, R+2r), half-open on the right.

    ``half_range`` is rounded up to a multiple of ``bucket_width`` so bucket
    edges land on integer multiples of r (including 0).
    """

    bucket_width: float
    half_range: float

    def __post_init__(self):
        if not (self.bucket_width > 0):
            raise ParameterError(f"bucket_width must be > 0, got {self.bucket_width}")
        if not (self.half_range > 0):
            raise ParameterError(f"half_range must be > 0, got {self.half_range}")

    @classmethod
    def build(cls, r: float, R: float) -> "HistogramSpec":
        if not (r > 0 and R > 0):
            raise ParameterError("need r > 0 and R > 0")
        steps = math.ceil(R / r - 1e-12)
        return cls(bucket_width=float(r), half_range=float(steps * r))

    @property
    def num_buckets(self) -> int:
        return 2 * (round(self.half_range / self.bucket_width) + 2)

    @property
    def edges(self) -> np.ndarray:
        lo = -self.half_range - 2 * self.bucket_width
        return lo + self.bucket_width * np.arange(self.num_buckets + 1)

    @property
    def lo(self) -> float:
        return -self.half_range - 2 * self.bucket_width

    @property
    def hi(self) -> float:
        return self.half_range + 2 * self.bucket_width

    def bucket_index(self, x: np.ndarray) -> np.ndarray:
        """Bucket index per point; -1 for points outside [lo, hi)."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.floor((x - self.lo) / self.bucket_width).astype(np.int64)
        idx[(x < self.lo) | (x >= self.hi)] = -1
        return idx


@dataclass
class NoisyHistogram:
    """Private histogram release: noisy counts plus a per-bucket release mask."""

    counts: np.ndarray
    released: np.ndarray
    spec: HistogramSpec
    n_dropped: int = 0

    def __post_init__(self):
        if len(self.counts) != self.spec.num_buckets:
            raise ParameterError("counts length does not match bucket grid")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bucket_left", "bucket_right", "noisy_count", "released"])
        edges = self.spec.edges
        for i in range(self.spec.num_buckets):
            writer.writerow(
                [
                    repr(float(edges[i])),
                    repr(float(edges[i + 1])),
                    repr(float(self.counts[i])),
                    int(self.released[i]),
                ]
            )
        return buf.getvalue()


def private_histogram(
    points: Sequence[float], spec: HistogramSpec, budget: PrivacyBudget, seed: Seed
) -> NoisyHistogram:
    """Pure or stability-based private histogram over ``spec``'s buckets.

    Pure mode (delta = 0): Laplace(2/epsilon) noise on every bucket, all
    released.  Approx mode (delta > 0): Laplace(2/epsilon) only on nonempty
    buckets, releasing those whose noisy count clears
    1 + 2 ln(2/delta)/epsilon; empty buckets are never released.  Points
    outside the grid are dropped and counted in ``n_dropped``.
    """
    points = np.asarray(points, dtype=np.float64)
    idx = spec.bucket_index(points)
    dropped = int((idx < 0).sum())
    counts = np.bincount(idx[idx >= 0], minlength=spec.num_buckets).astype(np.float64)
    rng = derive_rng(seed)
    noise = _laplace(rng, 2.0 / budget.epsilon, spec.num_buckets)
    if budget.is_pure:
        noisy = counts + noise
        released = np.ones(spec.num_buckets, dtype=bool)
    else:
        nonzero = counts > 0
        noisy = np.where(nonzero, counts + noise, 0.0)
        threshold = 1.0 + 2.0 * math.log(2.0 / budget.delta) / budget.epsilon
        released = nonzero & (noisy >= threshold)
        noisy = np.where(released, noisy, 0.0)
    return NoisyHistogram(counts=noisy, released=released, spec=spec, n_dropped=dropped)


def exponential_mechanism(
    scores: Iterable[tuple], sensitivity: float, epsilon: float, seed: Seed
):
    """Sample a candidate with probability proportional to exp(eps * score / (2 * sens)).

    Implemented by the Gumbel-argmax identity in one streaming pass: no
    normalization is materialized, so ``scores`` may be a generator.  Ties
    (a probability-zero event, but deterministic seeds can hit them in
    degenerate tests) go to the earliest candidate.
    """
    if not (sensitivity > 0):
        raise ParameterError(f"sensitivity must be > 0, got {sensitivity}")
    if not (epsilon >= 0):
        raise ParameterError(f"epsilon must be >= 0, got {epsilon}")
    rng = derive_rng(seed)
    best = None
    best_key = -np.inf
    count = 0
    for candidate, score in scores:
        key = epsilon * float(score) / (2.0 * sensitivity) + rng.gumbel()
        if key > best_key:
            best, best_key = candidate, key
        count += 1
    if count == 0:
        raise ParameterError("exponential mechanism needs at least one candidate")
    return best


@dataclass
class BudgetLedger:
    """Composition accounting over a sequence of (epsilon_i, delta_i) charges.

    ``mode="basic"`` sums both coordinates.  ``mode="advanced"`` requires a
    common per-entry epsilon_0 <= 1 and a slack delta0, and composes to
    (epsilon_0 * sqrt(6 t ln(1/delta0)), delta0 + sum delta_i) over t entries.
    """

    entries: list = field(default_factory=list)
    mode: str = "basic"
    delta0: float | None = None

    def __post_init__(self):
        if self.mode not in ("basic", "advanced"):
            raise ParameterError(f"unknown ledger mode {self.mode!r}")
        if self.mode == "advanced" and not (self.delta0 and self.delta0 > 0):
            raise ParameterError("advanced mode requires delta0 > 0")

    def add(self, epsilon: float, delta: float = 0.0) -> None:
        if epsilon < 0 or delta < 0:
            raise ParameterError("ledger entries must be nonnegative")
        self.entries.append((float(epsilon), float(delta)))

    def total(self) -> tuple:
        """Composed (epsilon, delta); (0.0, 0.0) for an empty ledger."""
        if not self.entries:
            return (0.0, 0.0)
        eps = [e for e, _ in self.entries]
        deltas = [d for _, d in self.entries]
        if self.mode == "basic":
            return (math.fsum(eps), math.fsum(deltas))
        eps0 = eps[0]
        if any(not math.isclose(e, eps0, rel_tol=1e-12) for e in eps):
            raise ParameterError("advanced composition requires a common epsilon_0")
        if eps0 > 1:
            raise ParameterError("advanced composition requires epsilon_0 <= 1")
        t = len(self.entries)
        total_eps = eps0 * math.sqrt(6 * t * math.log(1 / self.delta0))
        return (total_eps, self.delta0 + math.fsum(deltas))


def ledger_total(ledger: BudgetLedger) -> tuple:
    """Composed (epsilon, delta) of the ledger; (0, 0) for an empty ledger."""
    return ledger.total()
