"""Stage- and cost-augmented surrogate MDP.

Augmented states are triples ``(x, y, z)``: base state, discretized running
cost level and stage. Stages run ``0..d``; every stage-``d`` state is terminal
(implicit zero-cost exit), so a trajectory visits stage ``d`` exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import Action, CostBounds, Mdp, MdpError, State

AugState = tuple[State, int, int]

# Absorbs float noise in c / zeta (e.g. 0.3 / 0.1 == 2.9999999999999996).
RATIO_TOL = 1e-9


@dataclass(frozen=True)
class Discretization:
    zeta: float
    n_levels: int
    d: int
    n_prime: int

    def increment(self, cost: float) -> int:
        return math.floor(cost / self.zeta + RATIO_TOL)


def discretization_step(bounds: CostBounds, d: int, n_prime: int) -> Discretization:
    if bounds.k_lower <= 0.0:
        raise MdpError("cost lower bound must be positive")
    if d < 0 or n_prime < 1:
        raise ValueError("need d >= 0 and n_prime >= 1")
    if d == 0:
        return Discretization(zeta=bounds.k_lower, n_levels=0, d=0, n_prime=n_prime)
    zeta = min(bounds.k_lower, d * bounds.k_upper / n_prime)
    n_levels = math.ceil(d * bounds.k_upper / zeta - RATIO_TOL)
    return Discretization(zeta=zeta, n_levels=n_levels, d=d, n_prime=n_prime)


def exact_levels(bounds: CostBounds, d: int) -> int:
    """Level count ``N'`` for which the step equals the smallest cost."""
    # floor, so that d * k_upper / N' >= k_lower and the min picks k_lower
    return max(1, math.floor(d * bounds.k_upper / bounds.k_lower + RATIO_TOL))


@dataclass
class AugmentedMdp:
    mdp: Mdp
    disc: Discretization
    states: list[AugState]
    index: dict[AugState, int]
    # succ[i][u] = [(j, p), ...]; empty dict for stage-d (terminal) states.
    succ: list[dict[Action, list[tuple[int, float]]]]
    clamped: int = 0
    layers: list[list[int]] = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.disc.d

    @property
    def zeta(self) -> float:
        return self.disc.zeta

    @property
    def n_levels(self) -> int:
        return self.disc.n_levels

    def actions(self, i: int) -> tuple[Action, ...]:
        return self.mdp.actions[self.states[i][0]]

    def is_terminal(self, i: int) -> bool:
        return self.states[i][2] == self.disc.d

    def step(self, state: AugState, u: Action, x_next: State) -> AugState:
        """Deterministic (y, z) update for an observed base transition."""
        x, y, z = state
        inc = self.disc.increment(self.mdp.cost[(x, u)])
        return (x_next, min(y + inc, self.disc.n_levels), z + 1)

    def summary(self) -> dict:
        return {
            "zeta": self.zeta,
            "n_levels": self.n_levels,
            "d": self.d,
            "n_states": len(self.states),
            "states_per_layer": [len(layer) for layer in self.layers],
        }


def build_augmented(mdp: Mdp, disc: Discretization) -> AugmentedMdp:
    """Forward (breadth-first) construction of the reachable augmented states."""
    for x, u in mdp.pairs():
        if disc.increment(mdp.cost[(x, u)]) <= 0:
            raise MdpError(f"zero cost increment at ({x}, {u}); zeta exceeds the smallest cost")

    states: list[AugState] = []
    index: dict[AugState, int] = {}
    succ: list[dict[Action, list[tuple[int, float]]]] = []
    clamped = 0

    def intern(s: AugState) -> int:
        j = index.get(s)
        if j is None:
            j = index[s] = len(states)
            states.append(s)
            succ.append({})
        return j

    frontier = [intern((x, 0, 0)) for x in mdp.states if mdp.initial.get(x, 0.0) > 0.0]
    layers = [frontier]
    for z in range(disc.d):
        nxt: list[int] = []
        for i in layers[z]:
            x, y, _ = states[i]
            for u in mdp.actions[x]:
                raw = y + disc.increment(mdp.cost[(x, u)])
                if raw > disc.n_levels:
                    clamped += 1
                y2 = min(raw, disc.n_levels)
                row = []
                for x2, p in mdp.successors(x, u):
                    key = (x2, y2, z + 1)
                    fresh = key not in index
                    j = intern(key)
                    if fresh:
                        nxt.append(j)
                    row.append((j, p))
                succ[i][u] = row
        layers.append(nxt)
    return AugmentedMdp(mdp=mdp, disc=disc, states=states, index=index, succ=succ, clamped=clamped, layers=layers)


def augmented_initial(mdp: Mdp, aug: AugmentedMdp) -> np.ndarray:
    beta = np.zeros(len(aug.states))
    for x, p in mdp.initial.items():
        if p > 0.0:
            beta[aug.index[(x, 0, 0)]] = p
    return beta
