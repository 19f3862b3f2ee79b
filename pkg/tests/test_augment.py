import numpy as np
import pytest

from _models import STAY, make_single, random_mdp, tiny2
from avarmdp.augment import (
    augmented_initial,
    build_augmented,
    discretization_step,
    exact_levels,
)
from avarmdp.mdp import CostBounds, MdpError, cost_bounds


@pytest.mark.parametrize(
    "lo, hi, d, n_prime, zeta, n_levels",
    [(1, 2, 10, 40, 0.5, 40), (1, 2, 3, 6, 1.0, 6), (0.1, 1, 5, 10, 0.1, 50)],
)
def test_discretization_step(lo, hi, d, n_prime, zeta, n_levels):
    disc = discretization_step(CostBounds(lo, hi), d, n_prime)
    assert disc.zeta == pytest.approx(zeta) and disc.n_levels == n_levels
    assert disc.n_levels >= n_prime


def test_discretization_rejects_bad_input():
    with pytest.raises(MdpError):
        discretization_step(CostBounds(0.0, 1.0), 3, 3)
    with pytest.raises(ValueError):
        discretization_step(CostBounds(1.0, 1.0), 3, 0)


def test_exact_levels_gives_smallest_cost_step():
    for lo, hi, d in [(1, 2, 3), (0.9, 2, 3), (0.3, 0.7, 11), (2, 2, 1)]:
        b = CostBounds(lo, hi)
        assert discretization_step(b, d, exact_levels(b, d)).zeta == lo


def test_tiny2_layers():
    m = tiny2()
    aug = build_augmented(m, discretization_step(cost_bounds(m), 3, 6))
    assert aug.n_levels == 6
    layer = [sorted(aug.states[i] for i in L) for L in aug.layers]
    assert layer[0] == [("A", 0, 0)]
    assert layer[1] == [("A", 1, 1), ("M", 1, 1), ("M", 2, 1)]
    assert layer[2] == [("A", 2, 2), ("M", 1, 2), ("M", 2, 2), ("M", 3, 2)]
    assert [len(L) for L in aug.layers] == [1, 3, 4, 5]
    assert len(aug.states) == 13
    assert aug.clamped == 0
    assert aug.summary()["states_per_layer"] == [1, 3, 4, 5]


def test_single_transient_chain():
    m = make_single()
    aug = build_augmented(m, discretization_step(cost_bounds(m), 2, 2))
    assert sorted(aug.states) == [("A", 0, 0), ("M", 1, 1), ("M", 1, 2)]


def test_zero_horizon():
    m = tiny2()
    aug = build_augmented(m, discretization_step(cost_bounds(m), 0, 1))
    assert aug.states == [("A", 0, 0)]
    assert aug.is_terminal(0)


def test_initial_mass():
    m = tiny2()
    aug = build_augmented(m, discretization_step(cost_bounds(m), 3, 6))
    beta = augmented_initial(m, aug)
    assert beta[aug.index[("A", 0, 0)]] == 1.0 and beta.sum() == 1.0


def test_zero_increment_is_rejected():
    m = tiny2(fast_cost=0.4)
    disc = discretization_step(CostBounds(1.0, 2.0), 3, 6)
    with pytest.raises(MdpError):
        build_augmented(m, disc)


@pytest.mark.parametrize("seed", range(20))
def test_kernel_structure_and_mass(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, integer_costs=False, cost_range=(0.5, 2.5))
    d = int(rng.integers(1, 6))
    disc = discretization_step(cost_bounds(m), d, int(rng.integers(1, 12)))
    aug = build_augmented(m, disc)
    assert len(aug.states) <= m.n * (aug.n_levels + 1) * (d + 1)
    assert aug.clamped == 0
    mass = augmented_initial(m, aug)
    for z, layer in enumerate(aug.layers):
        assert abs(sum(mass[i] for i in layer) - 1.0) <= 1e-12
        for i in layer:
            x, y, zz = aug.states[i]
            assert zz == z
            if z == d:
                assert aug.succ[i] == {}
                continue
            for u, row in aug.succ[i].items():
                assert sum(p for _, p in row) == pytest.approx(1.0, abs=1e-12)
                for j, p in row:
                    x2, y2, z2 = aug.states[j]
                    assert z2 == z + 1
                    if x == m.absorbing:
                        assert (x2, y2) == (x, y) and u == STAY
                    else:
                        assert y2 == y + disc.increment(m.cost[(x, u)])
                    # uniform policy for the mass check
                    mass[j] += mass[i] * p / len(aug.succ[i])
