import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avarmdp.risk import (
    CostDistribution,
    avar,
    avar_objective,
    linf_distance,
    read_distribution_csv,
    suboptimality_gap,
    var,
    write_distribution_csv,
)

FAST = CostDistribution.from_pairs([(1, 0.5), (2, 0.25), (3, 0.25)])


def geometric(n_terms: int = 80) -> CostDistribution:
    return CostDistribution.from_pairs((k, 0.5**k) for k in range(1, n_terms))


def avar_by_integration(dist: CostDistribution, tau: float) -> float:
    """(1 - tau)^-1 times the integral of the quantile function over (tau, 1].

    The quantile is a step function, so the integral is a sum over the CDF
    intervals that overlap (tau, 1]."""
    total = 0.0
    lo = 0.0
    for v, p in zip(dist.support, dist.mass):
        hi = lo + p
        overlap = max(0.0, min(hi, 1.0) - max(lo, tau))
        total += v * overlap
        lo = hi
    return total / (1.0 - tau)


def test_constructor_invariants():
    with pytest.raises(ValueError):
        CostDistribution((1.0, 2.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        CostDistribution((2.0, 1.0), (0.5, 0.5))
    with pytest.raises(ValueError):
        CostDistribution((1.0,), (-0.1,))
    d = CostDistribution.from_pairs([(2, 0.25), (1, 0.5), (2, 0.25), (5, 0.0)])
    assert d.as_dict() == {1.0: 0.5, 2.0: 0.5}


def test_var_examples():
    assert var(FAST, 0.5) == 1.0
    assert var(FAST, 0.6) == 2.0
    assert var(FAST, 0.75) == 2.0
    assert var(FAST, 0.95) == 3.0
    assert var(CostDistribution.point(5.0), 0.3) == 5.0


def test_avar_examples():
    assert avar(FAST, 0.5) == pytest.approx(2.5, abs=1e-12)
    assert avar(FAST, 0.95) == pytest.approx(3.0, abs=1e-12)
    assert avar(CostDistribution.point(5.0), 0.99) == 5.0
    # Untruncated geometric law of always-fast: AVaR_0.5 = 1 + 2 = 3.
    assert avar(geometric(), 0.5) == pytest.approx(3.0, abs=1e-12)


def test_avar_objective_is_minimised_at_var():
    for tau in (0.1, 0.5, 0.75, 0.9):
        best = min(avar_objective(FAST, tau, s) for s in FAST.support)
        assert avar(FAST, tau) == best
        for s in np.linspace(0, 4, 41):
            assert avar_objective(FAST, tau, s) >= best - 1e-12


def test_tau_outside_unit_interval():
    for tau in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            avar(FAST, tau)


def test_csv_round_trip_is_exact(tmp_path):
    d = CostDistribution.from_pairs([(0.1, 1 / 3), (0.7, 2 / 3)])
    p = tmp_path / "d.csv"
    write_distribution_csv(d, p)
    assert p.read_text().splitlines()[0] == "cost,prob"
    assert read_distribution_csv(p) == d


def test_gap_formula():
    assert suboptimality_gap(2, 2.0, 0.5, 0.5, 19) == pytest.approx(16 * 0.5**10)
    assert suboptimality_gap(2, 2.0, 0.5, 0.5, 3) == pytest.approx(4.0)
    # gamma = 1 leaves only the k = 0 term
    assert suboptimality_gap(3, 1.0, 1.0, 0.5, 0) == 6.0
    assert suboptimality_gap(3, 1.0, 1.0, 0.5, 2) == 0.0


distributions = st.lists(
    st.tuples(st.integers(0, 40), st.floats(0.01, 1.0)), min_size=1, max_size=8
).map(lambda rows: CostDistribution.from_pairs(
    (v / 4.0, w / sum(w for _, w in rows)) for v, w in rows
))
taus = st.floats(0.01, 0.99)


@settings(max_examples=200, deadline=None)
@given(distributions, taus)
def test_avar_matches_quantile_integral(dist, tau):
    assert abs(avar(dist, tau) - avar_by_integration(dist, tau)) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(distributions, taus, taus)
def test_avar_ordering(dist, t1, t2):
    lo, hi = sorted((t1, t2))
    assert avar(dist, lo) <= avar(dist, hi) + 1e-9
    assert avar(dist, lo) >= dist.mean - 1e-9
    assert avar(dist, lo) >= var(dist, lo) - 1e-9
    assert avar(dist, lo) <= dist.support[-1] + 1e-9


@settings(max_examples=200, deadline=None)
@given(distributions, taus, st.floats(0, 5), st.floats(0.1, 4))
def test_translation_and_homogeneity(dist, tau, c, lam):
    assert avar(dist.shifted(c), tau) == pytest.approx(avar(dist, tau) + c, abs=1e-9)
    assert avar(dist.scaled(lam), tau) == pytest.approx(lam * avar(dist, tau), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20), st.floats(0.01, 1.0)), min_size=1, max_size=8),
    taus,
)
def test_subadditivity_and_monotonicity(outcomes, tau):
    # A joint law of (X, Y) on a finite sample space.
    total = sum(w for *_, w in outcomes)
    px = [(x, w / total) for x, _, w in outcomes]
    py = [(y, w / total) for _, y, w in outcomes]
    pxy = [(x + y, w / total) for x, y, w in outcomes]
    pmax = [(max(x, y), w / total) for x, y, w in outcomes]
    X, Y = CostDistribution.from_pairs(px), CostDistribution.from_pairs(py)
    S, Mx = CostDistribution.from_pairs(pxy), CostDistribution.from_pairs(pmax)
    assert avar(S, tau) <= avar(X, tau) + avar(Y, tau) + 1e-9
    assert avar(Mx, tau) >= max(avar(X, tau), avar(Y, tau)) - 1e-9


def test_linf_distance():
    a = CostDistribution.from_pairs([(1, 0.5), (2, 0.5)])
    b = CostDistribution.from_pairs([(1, 0.25), (3, 0.75)])
    assert linf_distance(a, b) == 0.75
    assert linf_distance(a, a) == 0.0


def test_from_samples():
    d = CostDistribution.from_samples([2, 1, 2, 2])
    assert d.as_dict() == {1.0: 0.25, 2.0: 0.75}
    assert math.isclose(d.prob_at_least(2.0), 0.75)
