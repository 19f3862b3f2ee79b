import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _models import STAY, brute_avoid_set, brute_gamma, chain, random_mdp, tiny2
from avarmdp.mdp import (
    CostBounds,
    MdpError,
    check_reachability,
    choose_horizon,
    compute_gamma,
    cost_bounds,
    default_gamma_method,
    load_mdp,
    make_mdp,
    mdp_from_dict,
    mdp_to_dict,
    save_mdp,
    validate,
)
from avarmdp.risk import suboptimality_gap


def test_tiny2_is_valid():
    assert validate(tiny2()) == []
    assert cost_bounds(tiny2()) == CostBounds(1.0, 2.0)


def test_zero_cost_is_an_assumption_violation():
    m = tiny2(fast_cost=0.0)
    (v,) = validate(m)
    assert v.kind == "cost-positivity" and v.where == ("A", "fast")
    assert v.is_assumption
    with pytest.raises(MdpError):
        cost_bounds(m)


def test_structural_violations_are_reported():
    m = tiny2()
    bad_row = m.with_changes(transition={**m.transition, ("A", "fast"): {"A": 0.5, "M": 0.4}})
    assert [v.kind for v in validate(bad_row)] == ["row-sum"]

    leaky = m.with_changes(transition={**m.transition, ("M", STAY): {"A": 1.0}})
    kinds = {v.kind for v in validate(leaky)}
    assert "absorbing-loop" in kinds

    start_done = m.with_changes(initial={"M": 1.0})
    assert {v.kind for v in validate(start_done)} == {"initial-absorbing"}

    no_actions = m.with_changes(actions={**m.actions, "A": ()})
    assert "no-actions" in {v.kind for v in validate(no_actions)}


def test_row_sum_tolerance_is_tight():
    m = tiny2()
    off = m.with_changes(transition={**m.transition, ("A", "fast"): {"A": 0.5, "M": 0.5 + 1e-9}})
    assert [v.kind for v in validate(off)] == ["row-sum"]


def test_json_round_trip(tmp_path):
    m = tiny2()
    path = tmp_path / "m.json"
    save_mdp(m, path)
    back = load_mdp(path)
    assert back.transition == m.transition and back.cost == m.cost and back.initial == m.initial
    assert mdp_to_dict(back) == mdp_to_dict(m)


def test_absorbing_action_may_be_omitted():
    doc = mdp_to_dict(tiny2())
    doc["actions"].pop("M")
    doc["transitions"] = [t for t in doc["transitions"] if t["from"] != "M"]
    doc["costs"] = [c for c in doc["costs"] if c["state"] != "M"]
    m = mdp_from_dict(json.loads(json.dumps(doc)))
    assert validate(m) == []
    assert m.actions["M"] == (STAY,)


@pytest.mark.parametrize(
    "edit",
    [
        lambda d: d.pop("states"),
        lambda d: d.update(absorbing="Z"),
        lambda d: d["transitions"].append({"from": "A", "action": "fly", "to": "M", "p": 1.0}),
        lambda d: d["transitions"].append({"from": "A", "action": "fast", "to": "Q", "p": 0.0}),
    ],
)
def test_malformed_documents_raise(edit):
    doc = mdp_to_dict(tiny2())
    edit(doc)
    with pytest.raises(MdpError):
        mdp_from_dict(doc)


def test_reachability_examples():
    assert check_reachability(tiny2()).satisfied
    assert check_reachability(chain()).satisfied
    trap = make_mdp(
        ["A", "B", "M"],
        "M",
        {"A": ["go", "loop"], "B": ["back"], "M": [STAY]},
        {("A", "go"): {"M": 1.0}, ("A", "loop"): {"B": 1.0}, ("B", "back"): {"A": 1.0}, ("M", STAY): {"M": 1.0}},
        {("A", "go"): 1.0, ("A", "loop"): 1.0, ("B", "back"): 1.0, ("M", STAY): 0.0},
        {"A": 1.0},
    )
    rep = check_reachability(trap)
    assert not rep.satisfied and rep.avoid_set == {"A", "B"}


def test_gamma_examples():
    assert compute_gamma(tiny2()).value == 0.5
    assert compute_gamma(tiny2(), "safe-lower-bound").value == 0.5
    assert compute_gamma(chain(0.9)).value == pytest.approx(0.81, abs=1e-15)
    assert default_gamma_method(tiny2()) == "exact-enumeration"
    with pytest.raises(ValueError):
        compute_gamma(tiny2(), "guess")


@pytest.mark.parametrize("seed", range(40))
def test_validators_match_brute_force(seed):
    m = random_mdp(np.random.default_rng(seed))
    avoid = brute_avoid_set(m)
    rep = check_reachability(m)
    assert rep.avoid_set == avoid
    if rep.satisfied:
        exact = compute_gamma(m).value
        assert exact == brute_gamma(m)
        assert compute_gamma(m, "safe-lower-bound").value <= exact


def test_choose_horizon_examples():
    b = CostBounds(1.0, 2.0)
    d = choose_horizon(b, 2, 0.5, 0.5, 0.01)
    assert suboptimality_gap(2, 2.0, 0.5, 0.5, d) <= 0.01 < suboptimality_gap(2, 2.0, 0.5, 0.5, d - 1)
    assert d == 21
    assert choose_horizon(b, 2, 0.5, 0.95, 0.01) == 27
    assert choose_horizon(b, 5, 1.0, 0.5, 0.01) == 5


def test_choose_horizon_rejects_bad_parameters():
    b = CostBounds(1.0, 2.0)
    for args in [(0.0, 0.5, 0.1), (0.5, 1.0, 0.1), (0.5, 0.5, 0.0)]:
        with pytest.raises(ValueError):
            choose_horizon(b, 2, *args)


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 6),
    k_upper=st.floats(0.5, 10.0),
    gamma=st.floats(0.01, 0.99),
    tau=st.floats(0.01, 0.99),
    eps=st.floats(1e-4, 10.0),
    shrink=st.floats(0.1, 1.0),
    lift=st.floats(1.0, 3.0),
)
def test_choose_horizon_is_minimal_and_monotone(n, k_upper, gamma, tau, eps, shrink, lift):
    b = CostBounds(min(1.0, k_upper), k_upper)
    d = choose_horizon(b, n, gamma, tau, eps)
    assert d >= 1
    assert suboptimality_gap(n, k_upper, gamma, tau, d) <= eps
    if d > 1:
        assert suboptimality_gap(n, k_upper, gamma, tau, d - 1) > eps
    assert choose_horizon(b, n, gamma, tau, eps * lift) <= d
    assert choose_horizon(b, n, min(gamma / shrink, 0.99), tau, eps) <= d
