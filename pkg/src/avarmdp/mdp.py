"""Transient total-cost MDPs: data model, structural checks and horizon selection.

An :class:`Mdp` has a single absorbing state with one zero-cost self-loop
action. Every other state is transient and every transient action must
carry a strictly positive cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Literal

TOL = 1e-12

State = str
Action = str


class MdpError(ValueError):
    """Raised when a model file or an MDP value is structurally unusable."""


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple[str, ...]
    message: str

    @property
    def is_assumption(self) -> bool:
        return self.kind in ("cost-positivity", "reachability")

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.message}"


@dataclass(frozen=True)
class Mdp:
    """Finite transient total-cost MDP.

    ``transition[(x, u)]`` is a sparse row ``{y: p}``; missing entries are 0.
    ``states`` includes the absorbing state.
    """

    states: tuple[State, ...]
    actions: dict[State, tuple[Action, ...]]
    transition: dict[tuple[State, Action], dict[State, float]]
    cost: dict[tuple[State, Action], float]
    initial: dict[State, float]
    absorbing: State
    name: str = field(default="", compare=False)

    @property
    def n(self) -> int:
        return len(self.states)

    @cached_property
    def transient(self) -> tuple[State, ...]:
        return tuple(x for x in self.states if x != self.absorbing)

    @cached_property
    def index(self) -> dict[State, int]:
        return {x: i for i, x in enumerate(self.states)}

    def pairs(self, include_absorbing: bool = False) -> Iterator[tuple[State, Action]]:
        for x in self.states:
            if x == self.absorbing and not include_absorbing:
                continue
            for u in self.actions.get(x, ()):
                yield x, u

    def p(self, x: State, u: Action, y: State) -> float:
        return self.transition.get((x, u), {}).get(y, 0.0)

    def successors(self, x: State, u: Action) -> list[tuple[State, float]]:
        """Positive-probability successors of ``(x, u)`` in state declaration order."""
        row = self.transition.get((x, u), {})
        return [(y, row[y]) for y in self.states if row.get(y, 0.0) > 0.0]

    def with_changes(self, **kwargs: Any) -> "Mdp":
        fields = dict(
            states=self.states,
            actions=self.actions,
            transition=self.transition,
            cost=self.cost,
            initial=self.initial,
            absorbing=self.absorbing,
            name=self.name,
        )
        fields.update(kwargs)
        return Mdp(**fields)


@dataclass(frozen=True)
class CostBounds:
    k_lower: float
    k_upper: float


@dataclass(frozen=True)
class ReachabilityReport:
    satisfied: bool
    avoid_set: frozenset[State]


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    method: Literal["exact-enumeration", "safe-lower-bound"]


# -- construction and I/O --------------------------------------------------


def make_mdp(
    states,
    absorbing: State,
    actions: dict[State, list[Action]],
    transitions: dict[tuple[State, Action], dict[State, float]],
    costs: dict[tuple[State, Action], float],
    initial: dict[State, float],
    name: str = "",
) -> Mdp:
    return Mdp(
        states=tuple(states),
        actions={x: tuple(us) for x, us in actions.items()},
        transition={k: dict(v) for k, v in transitions.items()},
        cost={k: float(v) for k, v in costs.items()},
        initial={x: float(p) for x, p in initial.items()},
        absorbing=absorbing,
        name=name,
    )


def mdp_from_dict(doc: dict[str, Any]) -> Mdp:
    """Parse the JSON model document (``states``, ``absorbing``, ``actions``,
    ``transitions``, ``costs``, ``initial``)."""
    try:
        states = [str(x) for x in doc["states"]]
        absorbing = str(doc["absorbing"])
        actions = {str(x): [str(u) for u in us] for x, us in doc["actions"].items()}
        transitions: dict[tuple[State, Action], dict[State, float]] = {}
        for t in doc["transitions"]:
            key = (str(t["from"]), str(t["action"]))
            row = transitions.setdefault(key, {})
            to = str(t["to"])
            row[to] = row.get(to, 0.0) + float(t["p"])
        costs = {(str(c["state"]), str(c["action"])): float(c["c"]) for c in doc["costs"]}
        initial = {str(x): float(p) for x, p in doc["initial"].items()}
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MdpError(f"malformed MDP document: {exc!r}") from exc

    known = set(states)
    if len(known) != len(states):
        raise MdpError("duplicate state identifiers")
    if absorbing not in known:
        raise MdpError(f"absorbing state {absorbing!r} is not declared")
    for x in list(actions) + list(initial):
        if x not in known:
            raise MdpError(f"unknown state {x!r}")
    for (x, u), row in transitions.items():
        if x not in known or u not in actions.get(x, []):
            raise MdpError(f"transition from undeclared pair ({x}, {u})")
        for y in row:
            if y not in known:
                raise MdpError(f"transition to unknown state {y!r}")
    for x, u in costs:
        if x not in known or u not in actions.get(x, []):
            raise MdpError(f"cost for undeclared pair ({x}, {u})")
    # Absorbing state may omit its action list and cost entry.
    if absorbing not in actions:
        actions[absorbing] = ["stay"]
        transitions.setdefault((absorbing, "stay"), {absorbing: 1.0})
    for u in actions[absorbing]:
        costs.setdefault((absorbing, u), 0.0)
    return make_mdp(states, absorbing, actions, transitions, costs, initial, name=str(doc.get("name", "")))


def mdp_to_dict(mdp: Mdp) -> dict[str, Any]:
    return {
        "name": mdp.name,
        "states": list(mdp.states),
        "absorbing": mdp.absorbing,
        "actions": {x: list(mdp.actions.get(x, ())) for x in mdp.states},
        "transitions": [
            {"from": x, "action": u, "to": y, "p": p}
            for x, u in mdp.pairs(include_absorbing=True)
            for y, p in mdp.transition.get((x, u), {}).items()
            if p != 0.0
        ],
        "costs": [{"state": x, "action": u, "c": mdp.cost.get((x, u), 0.0)} for x, u in mdp.pairs(True)],
        "initial": {x: p for x, p in mdp.initial.items() if p != 0.0},
    }


def load_mdp(path: str | Path) -> Mdp:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MdpError(f"{path}: invalid JSON ({exc})") from exc
    return mdp_from_dict(doc)


def save_mdp(mdp: Mdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=2) + "\n")


# -- validation ---------------------------------------------------------------


def validate(mdp: Mdp) -> list[Violation]:
    """Return every violated structural invariant; an empty list means valid."""
    out: list[Violation] = []
    xm = mdp.absorbing
    for x in mdp.states:
        if not mdp.actions.get(x):
            out.append(Violation("no-actions", (x,), "state has an empty action set"))
    if len(mdp.actions.get(xm, ())) != 1:
        out.append(Violation("absorbing-actions", (xm,), "absorbing state must have exactly one action"))

    for x, u in mdp.pairs(include_absorbing=True):
        row = mdp.transition.get((x, u), {})
        if any(p < 0.0 or p > 1.0 for p in row.values()):
            out.append(Violation("probability-range", (x, u), "probability outside [0, 1]"))
        total = math.fsum(row.values())
        if abs(total - 1.0) > TOL:
            out.append(Violation("row-sum", (x, u), f"row sums to {total!r}, not 1"))

    for u in mdp.actions.get(xm, ()):
        if abs(mdp.p(xm, u, xm) - 1.0) > TOL:
            out.append(Violation("absorbing-loop", (xm, u), "absorbing action must self-loop with probability 1"))
        if mdp.cost.get((xm, u), 0.0) != 0.0:
            out.append(Violation("absorbing-cost", (xm, u), "absorbing action must have zero cost"))

    if mdp.initial.get(xm, 0.0) != 0.0:
        out.append(Violation("initial-absorbing", (xm,), "initial mass on the absorbing state"))
    if any(p < 0.0 for p in mdp.initial.values()):
        out.append(Violation("initial-range", (), "negative initial mass"))
    total = math.fsum(mdp.initial.values())
    if abs(total - 1.0) > TOL:
        out.append(Violation("initial-sum", (), f"initial distribution sums to {total!r}, not 1"))

    for x, u in mdp.pairs():
        c = mdp.cost.get((x, u))
        if c is None or not c > 0.0:
            out.append(Violation("cost-positivity", (x, u), f"transient cost {c!r} is not positive"))
    return out


def cost_bounds(mdp: Mdp) -> CostBounds:
    costs = [mdp.cost.get(k, 0.0) for k in mdp.pairs()]
    if not costs:
        raise MdpError("MDP has no transient state-action pairs")
    lo, hi = min(costs), max(costs)
    if lo <= 0.0:
        raise MdpError(f"non-positive transient cost {lo!r}")
    return CostBounds(k_lower=lo, k_upper=hi)


def check_reachability(mdp: Mdp) -> ReachabilityReport:
    """Greatest set of transient states that some action selection keeps away
    from the absorbing state forever; the reachability assumption holds iff it
    is empty."""
    alive = set(mdp.transient)
    changed = True
    while changed:
        changed = False
        for x in list(alive):
            if not any(all(y in alive for y, _ in mdp.successors(x, u)) for u in mdp.actions.get(x, ())):
                alive.discard(x)
                changed = True
    return ReachabilityReport(satisfied=not alive, avoid_set=frozenset(alive))


def _edge_weights(mdp: Mdp) -> dict[State, dict[State, float]]:
    """Smallest positive action probability on each directed edge x -> y (y != x)."""
    w: dict[State, dict[State, float]] = {}
    for x, u in mdp.pairs():
        for y, p in mdp.successors(x, u):
            if y == x:
                continue
            out = w.setdefault(x, {})
            out[y] = min(out.get(y, math.inf), p)
    return w


def compute_gamma(mdp: Mdp, method: str = "exact-enumeration") -> GammaEstimate:
    if method == "safe-lower-bound":
        p_min = min(
            (p for x, u in mdp.pairs() for _, p in mdp.successors(x, u)),
            default=1.0,
        )
        return GammaEstimate(p_min ** (mdp.n - 1), "safe-lower-bound")
    if method != "exact-enumeration":
        raise ValueError(f"unknown gamma method {method!r}")

    weights = _edge_weights(mdp)
    xm = mdp.absorbing
    gamma = math.inf
    for start in mdp.transient:
        best = math.inf
        # DFS over simple paths start -> xm; xm only as the final vertex.
        stack = [(start, 1.0, frozenset([start]))]
        while stack:
            x, prob, seen = stack.pop()
            for y, p in weights.get(x, {}).items():
                if y == xm:
                    best = min(best, prob * p)
                elif y not in seen:
                    stack.append((y, prob * p, seen | {y}))
        if best == math.inf:
            raise MdpError(f"no positive-probability path from {start!r} to the absorbing state")
        gamma = min(gamma, best)
    if gamma == math.inf:
        gamma = 1.0
    return GammaEstimate(gamma, "exact-enumeration")


def default_gamma_method(mdp: Mdp) -> str:
    return "exact-enumeration" if mdp.n <= 12 else "safe-lower-bound"


def choose_horizon(bounds: CostBounds, n: int, gamma: float, tau: float, epsilon: float) -> int:
    """Smallest horizon whose truncation gap is at most ``epsilon``."""
    from .risk import suboptimality_gap

    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if gamma == 1.0:
        return n
    # gap(d) depends on d only through k = floor((d + 1) / n); solve for k first.
    scale = n * bounds.k_upper / ((1.0 - tau) * gamma)
    k = max(0, math.ceil(math.log(epsilon / scale) / math.log(1.0 - gamma))) if scale > epsilon else 0
    d = max(1, k * n - 1)
    while d > 1 and suboptimality_gap(n, bounds.k_upper, gamma, tau, d - 1) <= epsilon:
        d -= 1
    while suboptimality_gap(n, bounds.k_upper, gamma, tau, d) > epsilon:
        d += 1
    return d
