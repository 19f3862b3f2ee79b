"""Command-line front end.

Exit codes: 0 ok, 2 invalid input file, 3 modelling assumption violated,
4 LP failure, 5 policy does not cover a reached state.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from .baseline import value_iteration
from .mdp import (
    Mdp,
    MdpError,
    check_reachability,
    choose_horizon,
    compute_gamma,
    cost_bounds,
    default_gamma_method,
    mdp_from_dict,
    validate,
)
from .risk import (
    discretization_error_bound,
    suboptimality_gap,
    write_distribution_csv,
)
from .scenario import compile_deployment, graph_from_dict
from .sim import PolicyCoverageError, monte_carlo, write_batch_csv, write_histogram_csv
from .solver import AugmentedPolicy, AvarResult, LpError, solve_avar

log = logging.getLogger("avarmdp")

EXIT_INPUT, EXIT_ASSUMPTION, EXIT_LP, EXIT_COVERAGE = 2, 3, 4, 5

DEFAULTS: dict[str, Any] = {
    "tau": 0.95,
    "epsilon": None,
    "horizon": None,
    "levels": None,
    "stride": 1,
    "runs": 1000,
    "seed": 0,
    "deadline": None,
    "out": ".",
    "method": "avar",
    "solution": None,
    "tau_list": None,
    "sweep": None,
    "gamma_method": "auto",
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- loading ------------------------------------------------------------------


def load_model(path: str) -> Mdp:
    """MDP document, or a deployment graph (recognised by its ``vertices`` key)."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CliError(EXIT_INPUT, f"{path}: expected a JSON object")
    try:
        if "vertices" in doc:
            return compile_deployment(graph_from_dict(doc))
        return mdp_from_dict(doc)
    except MdpError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}") from exc


def checked_model(path: str) -> Mdp:
    mdp = load_model(path)
    problems = validate(mdp)
    structural = [v for v in problems if not v.is_assumption]
    if structural:
        raise CliError(EXIT_INPUT, "invalid model:\n" + "\n".join(f"  {v}" for v in structural))
    if problems:
        raise CliError(EXIT_ASSUMPTION, "assumption violated:\n" + "\n".join(f"  {v}" for v in problems))
    reach = check_reachability(mdp)
    if not reach.satisfied:
        states = ", ".join(sorted(reach.avoid_set))
        raise CliError(EXIT_ASSUMPTION, f"assumption violated: absorbing state avoidable from {{{states}}}")
    return mdp


def gamma_for(mdp: Mdp, method: str):
    return compute_gamma(mdp, default_gamma_method(mdp) if method == "auto" else method)


def resolve_horizon(mdp: Mdp, cfg: dict[str, Any]) -> tuple[int, float]:
    """Horizon from ``--horizon`` or from ``--epsilon``; also returns the gamma used."""
    gamma = gamma_for(mdp, cfg["gamma_method"]).value
    if (cfg["epsilon"] is None) == (cfg["horizon"] is None):
        raise CliError(EXIT_INPUT, "give exactly one of --epsilon / --horizon")
    if cfg["horizon"] is not None:
        return int(cfg["horizon"]), gamma
    bounds = cost_bounds(mdp)
    return choose_horizon(bounds, mdp.n, gamma, cfg["tau"], cfg["epsilon"]), gamma


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- solution documents ---------------------------------------------------------


def solution_doc(mdp: Mdp, res: AvarResult, tau: float, gamma: float) -> dict[str, Any]:
    sol, aug = res.solution, res.aug
    bounds = cost_bounds(mdp)
    policy = []
    for state in aug.states:
        probs = res.policy.table.get(state)
        if probs is None:
            continue
        x, y, z = state
        for u, p in probs.items():
            if p > 0.0:
                policy.append({"x": x, "y": y, "z": z, "action": u, "prob": p})
    return {
        "kind": "avar",
        "tau": tau,
        "d": aug.d,
        "zeta": aug.zeta,
        "n_levels": aug.n_levels,
        "s_star": sol.s_star,
        "objective": sol.objective,
        "theta": [[v, p] for v, p in zip(sol.theta_star.support, sol.theta_star.mass)],
        "gap_bound": suboptimality_gap(mdp.n, bounds.k_upper, gamma, tau, max(aug.d, 1)),
        "gamma": gamma,
        "discretization_bound": discretization_error_bound(aug.zeta, aug.d),
        "grid_slack": sol.grid_slack,
        "policy": policy,
    }


def baseline_doc(mdp: Mdp, values: dict, policy: dict, d: int | None) -> dict[str, Any]:
    return {
        "kind": "baseline",
        "d": d,
        "expected_cost": sum(p * values[x] for x, p in mdp.initial.items()),
        "values": values,
        "policy": [{"x": x, "action": u, "prob": 1.0} for x, u in policy.items()],
    }


def policy_from_doc(doc: dict[str, Any]):
    entries = doc["policy"]
    if doc.get("kind") == "avar" or (entries and "z" in entries[0]):
        table: dict = {}
        for e in entries:
            table.setdefault((e["x"], int(e["y"]), int(e["z"])), {})[e["action"]] = float(e["prob"])
        return AugmentedPolicy(table=table, zeta=float(doc["zeta"]), n_levels=int(doc["n_levels"]), d=int(doc["d"]))
    table = {}
    for e in entries:
        table.setdefault(e["x"], {})[e["action"]] = float(e["prob"])
    return table


# -- commands ---------------------------------------------------------------------


def cmd_validate(cfg: dict[str, Any]) -> int:
    mdp = load_model(cfg["model"])
    problems = validate(mdp)
    if problems:
        for v in problems:
            print(f"violation: {v}")
        return EXIT_INPUT if any(not v.is_assumption for v in problems) else EXIT_ASSUMPTION
    reach = check_reachability(mdp)
    if not reach.satisfied:
        print(f"violation: reachability; absorbing state avoidable from {sorted(reach.avoid_set)}")
        return EXIT_ASSUMPTION
    bounds = cost_bounds(mdp)
    gamma = gamma_for(mdp, cfg["gamma_method"])
    tau = cfg["tau"]
    sweep = cfg["sweep"] or [1, 2, 5, 10, 19, 20, 50, 100]
    kind = "exact" if gamma.method == "exact-enumeration" else "lower bound"
    head = cfg["horizon"] if cfg["horizon"] is not None else sweep[min(4, len(sweep) - 1)]
    gap_head = suboptimality_gap(mdp.n, bounds.k_upper, gamma.value, tau, head)
    print(f"valid; gamma={gamma.value:.6g} ({kind}); gap({head})={gap_head:.4g}")
    print(f"states={mdp.n} transient={len(mdp.transient)} k_lower={bounds.k_lower:g} k_upper={bounds.k_upper:g}")
    print("reachability: satisfied (avoid set empty)")
    print(f"suboptimality gap at tau={tau:g}:")
    for d in sweep:
        print(f"  d={d:<6d} gap={suboptimality_gap(mdp.n, bounds.k_upper, gamma.value, tau, d):.6g}")
    return 0


def _solve(mdp: Mdp, cfg: dict[str, Any], tau: float, d: int) -> AvarResult:
    try:
        return solve_avar(mdp, tau, d, n_prime=cfg["levels"], stride=cfg["stride"])
    except LpError as exc:
        raise CliError(EXIT_LP, str(exc)) from exc


def cmd_solve(cfg: dict[str, Any]) -> int:
    mdp = checked_model(cfg["model"])
    out = _out_dir(cfg)
    if cfg["method"] == "baseline":
        values, policy = value_iteration(mdp)
        _write_json(out / "solution.json", baseline_doc(mdp, values, policy, cfg["horizon"]))
        print(f"baseline expected cost={sum(p * values[x] for x, p in mdp.initial.items()):.6g}")
        return 0
    tau = cfg["tau"]
    d, gamma = resolve_horizon(mdp, cfg)
    if d == 0:
        log.warning("horizon d=0: no transitions are modelled, the objective is trivially 0")
    res = _solve(mdp, cfg, tau, d)
    doc = solution_doc(mdp, res, tau, gamma)
    _write_json(out / "solution.json", doc)
    write_distribution_csv(res.solution.theta_star, out / "theta.csv")
    print(
        f"objective={doc['objective']:.6f} s*={doc['s_star']:g} d={d} zeta={doc['zeta']:g} "
        f"N={doc['n_levels']} gap_bound={doc['gap_bound']:.4g}"
    )
    return 0


def _simulate(mdp, policy, d, cfg, out: Path, prefix: str) -> dict[str, Any]:
    try:
        batch = monte_carlo(mdp, policy, d, cfg["runs"], cfg["seed"])
    except PolicyCoverageError as exc:
        raise CliError(EXIT_COVERAGE, f"policy does not cover reached state {exc.args[0]!r}") from exc
    write_batch_csv(batch, out / f"{prefix}batch.csv")
    write_histogram_csv(batch, out / f"{prefix}histogram.csv")
    return batch.summary(cfg["tau"], cfg["deadline"])


def cmd_simulate(cfg: dict[str, Any]) -> int:
    mdp = checked_model(cfg["model"])
    if not cfg["solution"]:
        raise CliError(EXIT_INPUT, "--solution is required")
    try:
        doc = json.loads(Path(cfg["solution"]).read_text())
        policy = policy_from_doc(doc)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"bad solution file: {exc!r}") from exc
    d = cfg["horizon"] if cfg["horizon"] is not None else doc.get("d")
    if d is None:
        raise CliError(EXIT_INPUT, "no horizon in the solution file; pass --horizon")
    out = _out_dir(cfg)
    summary = _simulate(mdp, policy, int(d), cfg, out, "")
    _write_json(out / "summary.json", summary)
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()))
    return 0


def cmd_compare(cfg: dict[str, Any]) -> int:
    mdp = checked_model(cfg["model"])
    out = _out_dir(cfg)
    tau = cfg["tau"]
    d, gamma = resolve_horizon(mdp, cfg)
    values, base_policy = value_iteration(mdp)
    base_mean = sum(p * values[x] for x, p in mdp.initial.items())
    if cfg["deadline"] is None:
        cfg = dict(cfg, deadline=1.25 * base_mean)
    res = _solve(mdp, cfg, tau, d)
    _write_json(out / "solution.json", solution_doc(mdp, res, tau, gamma))
    report = {
        "tau": tau,
        "d": d,
        "deadline": cfg["deadline"],
        "runs": cfg["runs"],
        "seed": cfg["seed"],
        "baseline": _simulate(mdp, base_policy, d, cfg, out, "baseline_"),
        "risk_averse": _simulate(mdp, res.policy, d, cfg, out, "risk_averse_"),
    }
    report["baseline"]["expected_cost"] = base_mean
    report["risk_averse"]["objective"] = res.solution.objective

    taus = cfg["tau_list"] or []
    sweep = []
    for t in taus:
        r = res if t == tau else _solve(mdp, cfg, t, d)
        write_distribution_csv(r.solution.theta_star, out / f"theta_tau{t:g}.csv")
        sweep.append({"tau": t, "objective": r.solution.objective, "s_star": r.solution.s_star})
    report["tau_sweep"] = sweep
    _write_json(out / "compare.json", report)

    print(f"deadline T={cfg['deadline']:.6g}  d={d}  runs={cfg['runs']}  tau={tau:g}")
    print(f"{'policy':<12} {'mean':>9} {'AVaR':>9} {'>=T':>6}")
    for name in ("baseline", "risk_averse"):
        s = report[name]
        print(f"{name:<12} {s['mean']:>9.4f} {s['avar']:>9.4f} {s['exceedances']:>6d}")
    for row in sweep:
        print(f"tau={row['tau']:g} objective={row['objective']:.6f}")
    return 0


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "simulate": cmd_simulate, "compare": cmd_compare}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="MDP or deployment-graph JSON file")
    common.add_argument("--config", help="JSON file of option defaults (flags take precedence)")
    common.add_argument("--tau", type=float, default=None)
    horizon = common.add_mutually_exclusive_group()
    horizon.add_argument("--epsilon", type=float, default=None, help="target truncation gap")
    horizon.add_argument("--horizon", type=int, default=None, help="explicit horizon d")
    common.add_argument("--levels", type=int, default=None, help="requested number of cost levels N'")
    common.add_argument("--stride", type=int, default=None, help="s-grid subsampling stride")
    common.add_argument("--runs", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--deadline", type=float, default=None, help="deadline T for exceedance counts")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--gamma-method", dest="gamma_method", default=None,
                        choices=["auto", "exact-enumeration", "safe-lower-bound"])
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="avarmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", parents=[common], help="check a model and report gamma and gap bounds")
    p.add_argument("--sweep", type=_ints, default=None, help="comma-separated horizons for the gap table")
    p = sub.add_parser("solve", parents=[common], help="compute the AVaR-optimal policy")
    p.add_argument("--method", choices=["avar", "baseline"], default=None)
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo evaluation of a saved policy")
    p.add_argument("--solution", default=None)
    p = sub.add_parser("compare", parents=[common], help="risk-neutral baseline vs AVaR policy")
    p.add_argument("--tau-list", dest="tau_list", type=_floats, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_INPUT, f"bad config file: {exc}") from exc
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    given = {k: v for k, v in vars(args).items() if v is not None}
    if "epsilon" in given:
        cfg["horizon"] = None
    if "horizon" in given:
        cfg["epsilon"] = None
    cfg.update(given)
    if not 0.0 < cfg["tau"] < 1.0:
        raise CliError(EXIT_INPUT, "--tau must lie in (0, 1)")
    if cfg["runs"] < 1:
        raise CliError(EXIT_INPUT, "--runs must be >= 1")
    if cfg["stride"] < 1:
        raise CliError(EXIT_INPUT, "--stride must be >= 1")
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except MdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
