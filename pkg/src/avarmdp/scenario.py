"""Rapid-deployment graphs compiled into transient total-cost MDPs.

Each directed edge offers speed options ``(label, duration, p)``. Attempting
an option costs ``duration``; it succeeds with probability ``p`` and otherwise
leaves the robot where it was.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .mdp import Mdp, MdpError, make_mdp

DURATIONS = (1, 2, 3)
SUCCESS = (0.5, 0.8, 0.99)
LABELS = {1: ("go",), 2: ("fast", "slow"), 3: ("fast", "medium", "slow")}


class ScenarioError(MdpError):
    pass


@dataclass(frozen=True)
class SpeedOption:
    label: str
    duration: float
    p: float


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    options: tuple[SpeedOption, ...]


@dataclass(frozen=True)
class DeploymentGraph:
    vertices: tuple[str, ...]
    start: str
    goal: str
    edges: tuple[Edge, ...]


def graph_problems(g: DeploymentGraph) -> list[str]:
    problems = []
    known = set(g.vertices)
    if len(known) != len(g.vertices):
        problems.append("duplicate vertices")
    for v in (g.start, g.goal):
        if v not in known:
            problems.append(f"unknown vertex {v!r}")
    if g.start == g.goal:
        problems.append("start equals goal")
    out: dict[str, list[str]] = {}
    labels: dict[str, set[str]] = {}
    for e in g.edges:
        if e.src not in known or e.dst not in known:
            problems.append(f"edge {e.src}->{e.dst} uses an unknown vertex")
            continue
        if e.src == e.dst:
            problems.append(f"self-loop edge at {e.src}")
        if not e.options:
            problems.append(f"edge {e.src}->{e.dst} has no options")
        for o in e.options:
            if not o.duration > 0:
                problems.append(f"edge {e.src}->{e.dst} option {o.label}: duration must be positive")
            if not 0.0 < o.p <= 1.0:
                problems.append(f"edge {e.src}->{e.dst} option {o.label}: success probability must be in (0, 1]")
            name = f"{e.dst}:{o.label}"
            if name in labels.setdefault(e.src, set()):
                problems.append(f"duplicate action {name} at {e.src}")
            labels[e.src].add(name)
        if e.src != g.goal:
            out.setdefault(e.src, []).append(e.dst)
    if problems:
        return problems

    # Goal reachability, then acyclicity of the non-goal part: a directed cycle
    # would let a policy circle forever without reaching the goal.
    reach = {g.goal}
    changed = True
    while changed:
        changed = False
        for v in g.vertices:
            if v not in reach and any(w in reach for w in out.get(v, ())):
                reach.add(v)
                changed = True
    for v in g.vertices:
        if v not in reach:
            problems.append(f"goal is not reachable from {v!r}")
    state: dict[str, int] = {}

    def visit(v: str) -> bool:
        state[v] = 1
        for w in out.get(v, ()):
            if w == g.goal:
                continue
            if state.get(w) == 1 or (w not in state and visit(w)):
                return True
        state[v] = 2
        return False

    for v in g.vertices:
        if v not in state and visit(v):
            problems.append("directed cycle among non-goal vertices")
            break
    return problems


def compile_deployment(g: DeploymentGraph) -> Mdp:
    problems = graph_problems(g)
    if problems:
        raise ScenarioError("; ".join(problems))
    actions: dict[str, list[str]] = {v: [] for v in g.vertices}
    transitions, costs = {}, {}
    for e in g.edges:
        if e.src == g.goal:
            continue
        for o in e.options:
            u = f"{e.dst}:{o.label}"
            actions[e.src].append(u)
            row = {e.dst: o.p}
            if o.p < 1.0:
                row[e.src] = 1.0 - o.p
            transitions[(e.src, u)] = row
            costs[(e.src, u)] = float(o.duration)
    actions[g.goal] = ["stay"]
    transitions[(g.goal, "stay")] = {g.goal: 1.0}
    costs[(g.goal, "stay")] = 0.0
    return make_mdp(g.vertices, g.goal, actions, transitions, costs, {g.start: 1.0}, name="deployment")


def generate_grid_instance(width: int, height: int, options_per_edge: int = 3, seed: int = 0) -> DeploymentGraph:
    """Monotone grid (moves right or up) from corner ``0,0`` to the opposite corner.

    Each edge draws ``options_per_edge`` distinct durations and success
    probabilities and pairs them in sorted order, so faster options fail more.
    """
    if width < 2 or height < 2:
        raise ValueError("grid needs width, height >= 2")
    if options_per_edge not in LABELS:
        raise ValueError("options_per_edge must be 1, 2 or 3")
    rng = np.random.default_rng(seed)

    def name(i, j):
        return f"{i},{j}"

    vertices = tuple(name(i, j) for j in range(height) for i in range(width))
    edges = []
    for j in range(height):
        for i in range(width):
            for di, dj in ((1, 0), (0, 1)):
                if i + di >= width or j + dj >= height:
                    continue
                durs = sorted(rng.choice(DURATIONS, options_per_edge, replace=False).tolist())
                probs = sorted(rng.choice(SUCCESS, options_per_edge, replace=False).tolist())
                opts = tuple(
                    SpeedOption(lab, float(dur), float(p))
                    for lab, dur, p in zip(LABELS[options_per_edge], durs, probs)
                )
                edges.append(Edge(name(i, j), name(i + di, j + dj), opts))
    return DeploymentGraph(vertices, name(0, 0), name(width - 1, height - 1), tuple(edges))


def graph_from_dict(doc: dict[str, Any]) -> DeploymentGraph:
    try:
        edges = tuple(
            Edge(
                str(e["from"]),
                str(e["to"]),
                tuple(SpeedOption(str(o["label"]), float(o["duration"]), float(o["p"])) for o in e["options"]),
            )
            for e in doc["edges"]
        )
        return DeploymentGraph(tuple(str(v) for v in doc["vertices"]), str(doc["start"]), str(doc["goal"]), edges)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed graph document: {exc!r}") from exc


def graph_to_dict(g: DeploymentGraph) -> dict[str, Any]:
    return {
        "vertices": list(g.vertices),
        "start": g.start,
        "goal": g.goal,
        "edges": [
            {
                "from": e.src,
                "to": e.dst,
                "options": [{"label": o.label, "duration": o.duration, "p": o.p} for o in e.options],
            }
            for e in g.edges
        ],
    }


def load_graph(path: str | Path) -> DeploymentGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return graph_from_dict(doc)


def save_graph(g: DeploymentGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=2) + "\n")
