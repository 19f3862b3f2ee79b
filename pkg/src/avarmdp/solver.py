"""Occupancy-measure linear programs for AVaR minimisation on the augmented MDP.

For a fixed threshold ``s`` the Rockafellar-Uryasev objective is linear in the
occupancy vector, so the bilinear problem is solved as a family of LPs over
the breakpoints ``s = zeta * k``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .augment import (
    AugmentedMdp,
    AugState,
    augmented_initial,
    build_augmented,
    discretization_step,
    exact_levels,
)
from .mdp import Action, Mdp, cost_bounds
from .risk import CostDistribution, _check_tau

log = logging.getLogger(__name__)

ZERO_OCCUPANCY = 1e-12


class LpError(RuntimeError):
    pass


LpBackend = Callable[[np.ndarray, sp.csr_matrix, np.ndarray], np.ndarray]


# Tight tolerances keep theta summing to 1 within 1e-9; HiGHS defaults leave
# residuals near 1e-7. The default settings and interior point are fallbacks
# for the rare numerical-difficulty status.
_TIGHT = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
_ATTEMPTS = (("highs-ds", _TIGHT), ("highs-ds", {}), ("highs-ipm", {}))
RESIDUAL_WARN = 1e-8


def highs_backend(c: np.ndarray, a_eq: sp.csr_matrix, b_eq: np.ndarray) -> np.ndarray:
    """min c.x  s.t.  a_eq x = b_eq, x >= 0  (HiGHS dual simplex, basic solution)."""
    messages = []
    for method, options in _ATTEMPTS:
        res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method=method, options=options)
        if res.status == 0:
            x = np.maximum(res.x, 0.0)
            residual = float(np.max(np.abs(a_eq @ x - b_eq), initial=0.0))
            if residual > RESIDUAL_WARN:
                log.warning("LP equality residual %.2e after %s", residual, method)
            return x
        messages.append(f"{method}: {res.message}")
        if res.status in (2, 3):
            break
    raise LpError("LP solve failed: " + " | ".join(messages))


@dataclass
class OccupancyLp:
    aug: AugmentedMdp
    # Column layout: rho variables first (one per (state, action)), then theta(0..N).
    columns: list[tuple[int, Action]]
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    k_upper: float

    @property
    def n_rho(self) -> int:
        return len(self.columns)

    @property
    def n_theta(self) -> int:
        return self.aug.n_levels + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.a_eq.shape

    def theta_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.n_rho :]

    def rho_of(self, x: np.ndarray) -> np.ndarray:
        return x[: self.n_rho]

    @property
    def level_costs(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.aug.zeta


@dataclass
class OccupancySolution:
    rho_star: np.ndarray
    theta_levels: np.ndarray
    theta_star: CostDistribution
    s_star: float
    objective: float
    tau: float
    grid_slack: float = 0.0


@dataclass
class AugmentedPolicy:
    """Randomised policy on augmented states (stages ``0..d-1``)."""

    table: dict[AugState, dict[Action, float]]
    zeta: float
    n_levels: int
    d: int

    def probs(self, state: AugState) -> dict[Action, float]:
        return self.table[state]


def levels_to_distribution(levels: np.ndarray, zeta: float) -> CostDistribution:
    return CostDistribution.from_pairs((k * zeta, float(m)) for k, m in enumerate(levels) if m > 0.0)


def build_lp(aug: AugmentedMdp, beta_prime: np.ndarray | None = None, k_upper: float | None = None) -> OccupancyLp:
    if beta_prime is None:
        beta_prime = augmented_initial(aug.mdp, aug)
    if len(beta_prime) != len(aug.states):
        raise ValueError("initial mass does not match the materialized augmented states")
    if k_upper is None:
        k_upper = cost_bounds(aug.mdp).k_upper if aug.mdp.transient else 0.0

    columns = [(i, u) for i in range(len(aug.states)) for u in aug.actions(i)]
    n_states = len(aug.states)
    n_rho = len(columns)
    rows, cols, vals = [], [], []
    for col, (i, u) in enumerate(columns):
        rows.append(i)
        cols.append(col)
        vals.append(1.0)
        for j, p in aug.succ[i].get(u, ()):
            rows.append(j)
            cols.append(col)
            vals.append(-p)
        x, y, z = aug.states[i]
        if z == aug.d:
            rows.append(n_states + y)
            cols.append(col)
            vals.append(-1.0)
    for k in range(aug.n_levels + 1):
        rows.append(n_states + k)
        cols.append(n_rho + k)
        vals.append(1.0)
    shape = (n_states + aug.n_levels + 1, n_rho + aug.n_levels + 1)
    a_eq = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    b_eq = np.concatenate([np.asarray(beta_prime, dtype=float), np.zeros(aug.n_levels + 1)])
    return OccupancyLp(aug=aug, columns=columns, a_eq=a_eq, b_eq=b_eq, k_upper=k_upper)


def solve_fixed_s(
    lp: OccupancyLp, tau: float, s: float, backend: LpBackend = highs_backend
) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimise ``s + sum_k (zeta k - s)^+ theta(k) / (1 - tau)`` over the occupancy polytope."""
    _check_tau(tau)
    c = np.zeros(lp.n_rho + lp.n_theta)
    c[lp.n_rho :] = np.maximum(lp.level_costs - s, 0.0) / (1.0 - tau)
    x = backend(c, lp.a_eq, lp.b_eq)
    return lp.rho_of(x), lp.theta_of(x), float(s + c @ x)


def s_grid(lp: OccupancyLp, stride: int = 1) -> list[float]:
    """Breakpoints ``zeta * k`` in ``[0, k_upper * d]``, capped at the largest
    stage-``d`` level that is reachable at all: beyond it the objective is ``s``."""
    aug = lp.aug
    zeta = aug.zeta
    reachable = max(aug.states[i][1] for i in aug.layers[aug.d])
    k_max = min(reachable, int(np.floor(lp.k_upper * aug.d / zeta + 1e-9)))
    ks = list(range(0, k_max + 1, stride))
    if ks[-1] != k_max:
        ks.append(k_max)
    return [k * zeta for k in ks]


def search_s(
    lp: OccupancyLp,
    tau: float,
    stride: int = 1,
    backend: LpBackend = highs_backend,
    workers: int | None = None,
) -> OccupancySolution:
    """Best fixed-``s`` LP over the breakpoint grid (exact when ``stride == 1``)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    grid = s_grid(lp, stride)

    def run(s):
        return solve_fixed_s(lp, tau, s, backend)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, grid))
    else:
        results = [run(s) for s in grid]

    best = None
    for s, (rho, theta, obj) in zip(grid, results):
        # Grid is increasing in s, so strict improvement keeps the smaller s on ties.
        if best is None or obj < best[3] - 1e-12:
            best = (rho, theta, s, obj)
    rho, theta, s_star, obj = best
    log.debug("s-grid of %d points, best s=%g objective=%g", len(grid), s_star, obj)
    slack = tau * stride * lp.aug.zeta if stride > 1 else 0.0
    return OccupancySolution(
        rho_star=rho,
        theta_levels=theta,
        theta_star=levels_to_distribution(theta, lp.aug.zeta),
        s_star=s_star,
        objective=obj,
        tau=tau,
        grid_slack=slack,
    )


def extract_policy(lp: OccupancyLp, rho_star: np.ndarray) -> AugmentedPolicy:
    aug = lp.aug
    per_state: dict[int, dict[Action, float]] = {}
    for col, (i, u) in enumerate(lp.columns):
        if not aug.is_terminal(i):
            per_state.setdefault(i, {})[u] = float(rho_star[col])
    table: dict[AugState, dict[Action, float]] = {}
    for i, occ in per_state.items():
        total = sum(occ.values())
        if total > ZERO_OCCUPANCY:
            table[aug.states[i]] = {u: v / total for u, v in occ.items() if v > 0.0}
        else:
            table[aug.states[i]] = {u: 1.0 / len(occ) for u in occ}
    return AugmentedPolicy(table=table, zeta=aug.zeta, n_levels=aug.n_levels, d=aug.d)


def induced_levels(aug: AugmentedMdp, policy: AugmentedPolicy) -> np.ndarray:
    """Stage-``d`` mass per cost level, by forward propagation of the initial mass."""
    mass = augmented_initial(aug.mdp, aug)
    for layer in aug.layers[: aug.d]:
        for i in layer:
            m = mass[i]
            if m == 0.0:
                continue
            for u, q in policy.probs(aug.states[i]).items():
                for j, p in aug.succ[i][u]:
                    mass[j] += m * q * p
    levels = np.zeros(aug.n_levels + 1)
    for i in aug.layers[aug.d]:
        levels[aug.states[i][1]] += mass[i]
    return levels


def induced_distribution(aug: AugmentedMdp, policy: AugmentedPolicy) -> CostDistribution:
    return levels_to_distribution(induced_levels(aug, policy), aug.zeta)


@dataclass
class AvarResult:
    aug: AugmentedMdp
    lp: OccupancyLp
    solution: OccupancySolution
    policy: AugmentedPolicy


def solve_avar(
    mdp: Mdp,
    tau: float,
    d: int,
    n_prime: int | None = None,
    stride: int = 1,
    backend: LpBackend = highs_backend,
    workers: int | None = None,
) -> AvarResult:
    """Full pipeline for a given horizon. ``n_prime=None`` picks the step equal
    to the smallest transient cost."""
    bounds = cost_bounds(mdp)
    if n_prime is None:
        n_prime = exact_levels(bounds, d)
    disc = discretization_step(bounds, d, n_prime)
    aug = build_augmented(mdp, disc)
    lp = build_lp(aug, k_upper=bounds.k_upper)
    sol = search_s(lp, tau, stride=stride, backend=backend, workers=workers)
    return AvarResult(aug=aug, lp=lp, solution=sol, policy=extract_policy(lp, sol.rho_star))
