"""VaR / AVaR on finite cost distributions and the approximation error bounds."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

MASS_TOL = 1e-9
# Slack on the cumulative mass when locating the tau-quantile.
CDF_TOL = 1e-12


@dataclass(frozen=True)
class CostDistribution:
    """Probability mass function over nonnegative, strictly increasing costs."""

    support: tuple[float, ...]
    mass: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.mass):
            raise ValueError("support and mass differ in length")
        if not self.support:
            raise ValueError("empty distribution")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        if any(m < 0.0 for m in self.mass):
            raise ValueError("negative probability mass")
        if self.support[0] < 0.0:
            raise ValueError("costs must be nonnegative")
        if abs(math.fsum(self.mass) - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {math.fsum(self.mass)!r}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], drop_zero: bool = True) -> "CostDistribution":
        acc: dict[float, float] = {}
        for value, p in pairs:
            acc[float(value)] = acc.get(float(value), 0.0) + float(p)
        items = sorted((v, p) for v, p in acc.items() if p > 0.0 or not drop_zero)
        return cls(tuple(v for v, _ in items), tuple(p for _, p in items))

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> "CostDistribution":
        counts = Counter(float(s) for s in samples)
        total = sum(counts.values())
        return cls.from_pairs((v, c / total) for v, c in counts.items())

    @classmethod
    def point(cls, value: float) -> "CostDistribution":
        return cls((float(value),), (1.0,))

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.support, self.mass))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.support, self.mass))

    def prob_at_least(self, threshold: float) -> float:
        return math.fsum(p for v, p in zip(self.support, self.mass) if v >= threshold)

    def shifted(self, c: float) -> "CostDistribution":
        return CostDistribution(tuple(v + c for v in self.support), self.mass)

    def scaled(self, lam: float) -> "CostDistribution":
        if lam <= 0:
            raise ValueError("scale must be positive")
        return CostDistribution(tuple(v * lam for v in self.support), self.mass)


def linf_distance(a: CostDistribution, b: CostDistribution) -> float:
    """Largest pointwise mass difference over the union of supports."""
    da, db = a.as_dict(), b.as_dict()
    return max(abs(da.get(v, 0.0) - db.get(v, 0.0)) for v in set(da) | set(db))


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau!r}")


def var(dist: CostDistribution, tau: float) -> float:
    _check_tau(tau)
    cdf = np.cumsum(dist.mass)
    idx = int(np.searchsorted(cdf, tau - CDF_TOL, side="left"))
    return dist.support[min(idx, len(dist.support) - 1)]


def avar_objective(dist: CostDistribution, tau: float, s: float) -> float:
    """Rockafellar-Uryasev objective ``s + E[(Y - s)^+] / (1 - tau)``."""
    _check_tau(tau)
    tail = math.fsum(max(v - s, 0.0) * p for v, p in zip(dist.support, dist.mass))
    return s + tail / (1.0 - tau)


def avar(dist: CostDistribution, tau: float) -> float:
    # The R-U objective is minimised at s = VaR_tau, atoms included.
    return avar_objective(dist, tau, var(dist, tau))


def suboptimality_gap(n: int, k_upper: float, gamma: float, tau: float, d: int) -> float:
    """Upper bound on how much truncating the process after ``d`` stages can
    understate the optimal AVaR."""
    _check_tau(tau)
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    return n * k_upper * (1.0 - gamma) ** ((d + 1) // n) / ((1.0 - tau) * gamma)


def discretization_error_bound(zeta: float, d: int) -> float:
    return d * zeta


def write_distribution_csv(dist: CostDistribution, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cost", "prob"])
        for v, p in zip(dist.support, dist.mass):
            w.writerow([repr(v), repr(p)])


def read_distribution_csv(path: str | Path) -> CostDistribution:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return CostDistribution.from_pairs((float(v), float(p)) for v, p in rows[1:])
