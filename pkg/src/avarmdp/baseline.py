"""Risk-neutral total-cost value iteration (the comparison baseline)."""

from __future__ import annotations

import numpy as np

from .mdp import Action, Mdp, State

MAX_ITER = 1_000_000


class ConvergenceError(RuntimeError):
    pass


def value_iteration(mdp: Mdp, tol: float = 1e-10) -> tuple[dict[State, float], dict[State, Action]]:
    """Minimal expected cost-to-absorption and a greedy deterministic policy.

    Starts from V = 0 and stops once the sup-norm change is at most ``tol``.
    Ties go to the first declared action. The returned values are the exact
    cost of the greedy policy: with slowly mixing self-loops the last sweep can
    still sit well above ``tol`` away from the fixed point.
    """
    idx = mdp.index
    xm = idx[mdp.absorbing]
    rows = []
    for x in mdp.transient:
        opts = []
        for u in mdp.actions[x]:
            succ = mdp.successors(x, u)
            opts.append(
                (u, mdp.cost[(x, u)], np.array([idx[y] for y, _ in succ]), np.array([p for _, p in succ]))
            )
        rows.append((idx[x], opts))

    v = np.zeros(mdp.n)
    for _ in range(MAX_ITER):
        new = v.copy()
        for i, opts in rows:
            new[i] = min(c + p @ v[j] for _, c, j, p in opts)
        new[xm] = 0.0
        delta = np.max(np.abs(new - v))
        v = new
        if delta <= tol:
            break
    else:
        raise ConvergenceError(f"value iteration did not converge in {MAX_ITER} sweeps")

    policy: dict[State, Action] = {}
    for i, opts in rows:
        q = [c + p @ v[j] for _, c, j, p in opts]
        best = min(q)
        # Relative slack so exact ties resolve to declaration order.
        slack = 1e-9 * max(1.0, abs(best))
        policy[mdp.states[i]] = next(u for (u, *_), qu in zip(opts, q) if qu <= best + slack)
    policy[mdp.absorbing] = mdp.actions[mdp.absorbing][0]
    exact = policy_values(mdp, policy)
    if max(abs(exact[x] - v[idx[x]]) for x in mdp.states) > 1e-6 * max(1.0, float(np.max(v))):
        raise ConvergenceError("greedy policy does not reproduce the value iterates")
    return exact, policy


def policy_values(mdp: Mdp, policy: dict[State, Action]) -> dict[State, float]:
    """Exact expected total cost of a stationary deterministic policy (linear solve)."""
    tr = list(mdp.transient)
    pos = {x: i for i, x in enumerate(tr)}
    a = np.eye(len(tr))
    b = np.zeros(len(tr))
    for x in tr:
        u = policy[x]
        b[pos[x]] = mdp.cost[(x, u)]
        for y, p in mdp.successors(x, u):
            if y in pos:
                a[pos[x], pos[y]] -= p
    sol = np.linalg.solve(a, b)
    out = {x: float(sol[pos[x]]) for x in tr}
    out[mdp.absorbing] = 0.0
    return out
