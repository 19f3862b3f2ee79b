"""Monte Carlo rollouts and exact trajectory enumeration.

Random streams: run ``r`` of a batch with root seed ``s`` draws from
``Generator(Philox(SeedSequence([s, r])))``. Philox is counter-based, so a run
is reproducible on its own and batches can be split across workers without
changing any number. Each step consumes exactly two uniforms (action, then
successor); the initial state consumes one.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np

from .augment import RATIO_TOL, AugmentedMdp
from .mdp import Action, Mdp, State
from .risk import CostDistribution, avar, var
from .solver import AugmentedPolicy

StationaryPolicy = Mapping[State, Union[Action, Mapping[Action, float]]]
Policy = Union[AugmentedPolicy, StationaryPolicy]

MAX_LEAVES = 10**7


class PolicyCoverageError(KeyError):
    """The policy has no decision for a state the process actually reached."""


class LeafBudgetError(RuntimeError):
    pass


def make_rng(seed: int, run: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, run])))


def action_probs(mdp: Mdp, policy: Policy, x: State, y: int, z: int) -> dict[Action, float]:
    if x == mdp.absorbing:
        return {mdp.actions[x][0]: 1.0}
    if isinstance(policy, AugmentedPolicy):
        try:
            return policy.table[(x, y, z)]
        except KeyError:
            raise PolicyCoverageError((x, y, z)) from None
    try:
        choice = policy[x]
    except KeyError:
        raise PolicyCoverageError(x) from None
    return {choice: 1.0} if isinstance(choice, str) else dict(choice)


def _pick(items, weights, r: float):
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if r < acc:
            return item
    # r landed in the rounding sliver above the last cumulative weight
    return next(item for item, w in zip(reversed(items), reversed(weights)) if w > 0)


def _level_step(mdp: Mdp, policy: Policy, x: State, u: Action, y: int) -> int:
    if not isinstance(policy, AugmentedPolicy) or x == mdp.absorbing:
        return y
    inc = math.floor(mdp.cost[(x, u)] / policy.zeta + RATIO_TOL)
    return min(y + inc, policy.n_levels)


def _draw_initial(mdp: Mdp, rng) -> State:
    support = [x for x in mdp.states if mdp.initial.get(x, 0.0) > 0.0]
    return _pick(support, [mdp.initial[x] for x in support], rng.random())


def rollout(mdp: Mdp, policy: Policy, d: int, seed) -> tuple[float, int | None]:
    """Truncated total cost over at most ``d`` steps and the absorption time
    (``None`` on timeout). ``seed`` is an int or any object with ``random()``."""
    rng = make_rng(seed) if isinstance(seed, (int, np.integer)) else seed
    x = _draw_initial(mdp, rng)
    y = 0
    cost = 0.0
    for t in range(d):
        if x == mdp.absorbing:
            return cost, t
        probs = action_probs(mdp, policy, x, y, t)
        u = _pick(list(probs), list(probs.values()), rng.random())
        succ = mdp.successors(x, u)
        x_next = _pick([s for s, _ in succ], [p for _, p in succ], rng.random())
        cost += mdp.cost[(x, u)]
        y = _level_step(mdp, policy, x, u, y)
        x = x_next
    return cost, (d if x == mdp.absorbing else None)


@dataclass(frozen=True)
class TraceStep:
    t: int
    x: State
    cost: float
    aug_state: tuple[State, int, int] | None


def trajectory(mdp: Mdp, policy: Policy, d: int, seed, aug: AugmentedMdp | None = None) -> list[TraceStep]:
    """Run exactly ``d`` steps (absorbed runs keep self-looping) recording the
    running cost. With ``aug`` the augmented chain is stepped in lockstep on its
    own kernel, sharing every uniform draw with the base chain."""
    rng = make_rng(seed) if isinstance(seed, (int, np.integer)) else seed
    x = _draw_initial(mdp, rng)
    cost = 0.0
    y = 0
    i = aug.index[(x, 0, 0)] if aug is not None else None
    steps = [TraceStep(0, x, 0.0, aug.states[i] if aug is not None else None)]
    for t in range(d):
        probs = action_probs(mdp, policy, x, y, t)
        u = _pick(list(probs), list(probs.values()), rng.random())
        r = rng.random()
        succ = mdp.successors(x, u)
        x_next = _pick([s for s, _ in succ], [p for _, p in succ], r)
        if aug is not None:
            row = aug.succ[i][u]
            i = _pick([j for j, _ in row], [p for _, p in row], r)
        cost += mdp.cost[(x, u)]
        y = _level_step(mdp, policy, x, u, y)
        x = x_next
        steps.append(TraceStep(t + 1, x, cost, aug.states[i] if aug is not None else None))
    return steps


@dataclass
class RolloutBatch:
    costs: np.ndarray
    t_star: list[int | None]

    @property
    def runs(self) -> int:
        return len(self.costs)

    @property
    def timeouts(self) -> np.ndarray:
        return np.array([t is None for t in self.t_star])

    def distribution(self) -> CostDistribution:
        return CostDistribution.from_samples(self.costs)

    @property
    def mean(self) -> float:
        return float(np.mean(self.costs))

    def var(self, tau: float) -> float:
        return var(self.distribution(), tau)

    def avar(self, tau: float) -> float:
        return avar(self.distribution(), tau)

    def exceedances(self, threshold: float) -> int:
        return int(np.sum(self.costs >= threshold))

    def summary(self, tau: float, deadline: float | None = None) -> dict[str, Any]:
        out = {
            "runs": self.runs,
            "mean": self.mean,
            "var": self.var(tau),
            "avar": self.avar(tau),
            "tau": tau,
            "timeouts": int(self.timeouts.sum()),
        }
        if deadline is not None:
            out["deadline"] = deadline
            out["exceedances"] = self.exceedances(deadline)
        return out


def monte_carlo(mdp: Mdp, policy: Policy, d: int, runs: int, seed: int = 0) -> RolloutBatch:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    costs, times = [], []
    for r in range(runs):
        c, t = rollout(mdp, policy, d, make_rng(seed, r))
        costs.append(c)
        times.append(t)
    return RolloutBatch(costs=np.array(costs), t_star=times)


def enumerate_trajectories(
    mdp: Mdp, policy: Policy, d: int, zeta: float | None = None, max_leaves: int = MAX_LEAVES
) -> CostDistribution:
    """Exact law of the ``d``-step truncated cost by depth-first expansion of
    every (action, successor) branch.

    With ``zeta`` the law of the discretized cost ``zeta * sum floor(c / zeta)``
    is returned instead (same values as the augmented chain produces).
    """
    acc: dict[Any, float] = {}
    leaves = 0
    stack = [(x, 0, 0, 0.0, p) for x, p in mdp.initial.items() if p > 0.0]
    while stack:
        x, y, z, cost, prob = stack.pop()
        if z == d or x == mdp.absorbing:
            leaves += 1
            if leaves > max_leaves:
                raise LeafBudgetError(f"more than {max_leaves} leaves")
            key = y if zeta is not None else round(cost, 9)
            acc[key] = acc.get(key, 0.0) + prob
            continue
        for u, q in action_probs(mdp, policy, x, y, z).items():
            if q <= 0.0:
                continue
            c = mdp.cost[(x, u)]
            if zeta is not None:
                y2 = y + math.floor(c / zeta + RATIO_TOL)
            else:
                y2 = _level_step(mdp, policy, x, u, y)
            for x2, p in mdp.successors(x, u):
                stack.append((x2, y2, z + 1, cost + c, prob * q * p))
    if zeta is not None:
        return CostDistribution.from_pairs((k * zeta, p) for k, p in acc.items())
    return CostDistribution.from_pairs(acc.items())


def write_batch_csv(batch: RolloutBatch, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "cost", "t_star", "timeout_flag"])
        for r, (c, t) in enumerate(zip(batch.costs, batch.t_star)):
            w.writerow([r, repr(float(c)), "" if t is None else t, int(t is None)])


def histogram(batch: RolloutBatch, bin_width: float | None = None) -> list[tuple[float, int]]:
    if bin_width is None:
        counts = Counter(float(c) for c in batch.costs)
    else:
        counts = Counter(math.floor(c / bin_width + RATIO_TOL) * bin_width for c in batch.costs)
    return sorted(counts.items())


def write_histogram_csv(batch: RolloutBatch, path: str | Path, bin_width: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cost_bin", "count"])
        for b, n in histogram(batch, bin_width):
            w.writerow([repr(float(b)), n])
