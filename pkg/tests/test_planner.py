import math

import numpy as np
import pytest

from ccc_lanechange.model import RoadGeometry, SafetyParams, VehicleClass, VehicleState
from ccc_lanechange.planner import (CandidateSet, PlanningParams, candidate_set, lateral_trigger,
                                    order_pairs, pair_from_ids, plan_references,
                                    trigger_margins)

from conftest import make_scenario, vehicle

SAFE = SafetyParams()


def states_of(sc):
    return {v.id: v.state for v in sc.all_vehicles()}


def test_default_candidate_set(default):
    assert candidate_set(default.scenario).ids == ("1", "2", "3", "4", "5")


def test_empty_candidate_set_with_tiny_range():
    sc = make_scenario([vehicle("1", 140, 28)], road=RoadGeometry(4.0, 1e-6, 1e-6))
    assert len(candidate_set(sc)) == 0


def test_boundary_vehicle_included():
    sc = make_scenario([vehicle("1", 90, 28), vehicle("2", 10, 26)],
                       road=RoadGeometry(4.0, 20.0, 100.0))
    assert candidate_set(sc).ids == ("1", "2")
    sc = make_scenario([vehicle("1", 90, 28), vehicle("2", 10, 26)],
                       road=RoadGeometry(4.0, 19.999, 100.0))
    assert candidate_set(sc).ids == ("1",)


def test_candidate_sentinels():
    S = CandidateSet(("a", "b"))
    assert S.id_at(0) is None and S.id_at(3) is None and S.id_at(1) == "a"
    assert S.pairs() == [(0, 1), (1, 2), (2, 3)]


def test_default_pair_and_reference_safety(default):
    sc = default.scenario
    params = default.config.planning(sc.t0)
    plan = plan_references(sc, states_of(sc), candidate_set(sc), sc.t0, params)
    assert (plan.pair.lead_id, plan.pair.rear_id) == ("3", "4")
    finite = [c for c in plan.pair_costs.values() if math.isfinite(c)]
    assert plan.pair.triplet_cost == pytest.approx(min(finite))
    # adjacent fast-lane references keep Eq.-style headway at every node
    lane = [v.id for v in sc.fast_lane]
    for a, b in zip(lane, lane[1:]):
        ra, rb = plan.references[a], plan.references[b]
        assert np.all(ra.x - rb.x >= SAFE.tau_react * rb.v + SAFE.delta_len - 1e-6)
    # terminal merging gaps around the changer
    c, lead, rear = (plan.references[k] for k in ("C", "3", "4"))
    assert lead.x[-1] - c.x[-1] >= SAFE.tau_react * c.v[-1] + SAFE.delta_len - 1e-6
    assert c.x[-1] - rear.x[-1] >= SAFE.tau_react * rear.v[-1] + SAFE.delta_len - 1e-6


def test_replanning_is_deterministic(default):
    sc = default.scenario
    params = default.config.planning(sc.t0)
    a = plan_references(sc, states_of(sc), candidate_set(sc), sc.t0, params)
    b = plan_references(sc, states_of(sc), candidate_set(sc), sc.t0, params)
    assert a.pair_costs == b.pair_costs
    for k in a.references:
        assert np.array_equal(a.references[k].u, b.references[k].u)


def test_empty_set_gives_virtual_pair():
    sc = make_scenario([vehicle("1", 200, 28)], road=RoadGeometry(4.0, 1.0, 1.0))
    S = candidate_set(sc)
    plan = plan_references(sc, states_of(sc), S, 0.0, PlanningParams())
    assert plan.pair.is_virtual
    assert set(plan.pair.references) == {"C"}
    assert plan.pair.triplet_cost == pytest.approx(plan.references["C"].cost)


def test_tie_break_prefers_pair_further_ahead():
    scored = [(5.0, 3, 2, "x"), (5.0 + 1e-12, 2, 1, "y"), (4.0 + 2.0, 1, 0, "z")]
    assert [s[3] for s in order_pairs(scored)] == ["y", "x", "z"]
    assert [s[3] for s in order_pairs([(2.0, 1, 0, "a"), (1.0, 4, 3, "b")])] == ["b", "a"]


def _trigger_case(rear_shift=0.0):
    lane = [vehicle("1", 120, 30), vehicle("2", 60, 30)]
    sc = make_scenario(lane, xC=100.0, vC=30.0, xU=200.0)
    st = states_of(sc)
    d = SAFE.tau_react * 30 + SAFE.delta_len
    st["C"] = VehicleState(100.0, 0.0, 0.0, 30.0)
    st["1"] = VehicleState(100.0 + d, 4.0, 0.0, 30.0)
    st["2"] = VehicleState(100.0 - d + rear_shift, 4.0, 0.0, 30.0)
    S = candidate_set(sc, st)
    return sc, st, pair_from_ids(S, "1", "2")


def test_trigger_inclusive_at_exact_gaps():
    sc, st, pair = _trigger_case()
    assert lateral_trigger(st, sc, pair)
    assert min(trigger_margins(st, sc, pair).values()) == pytest.approx(0.0, abs=1e-9)


def test_trigger_false_when_rear_too_close():
    sc, st, pair = _trigger_case(rear_shift=0.1)
    assert not lateral_trigger(st, sc, pair)
    assert trigger_margins(st, sc, pair)["rear"] == pytest.approx(-0.1, abs=1e-9)


def test_virtual_members_are_vacuous():
    sc, st, _ = _trigger_case(rear_shift=0.1)
    S = candidate_set(sc, st)
    assert lateral_trigger(st, sc, pair_from_ids(S, "2", None)) is False  # 2 is behind C
    st["2"] = VehicleState(0.0, 4.0, 0.0, 30.0)
    assert lateral_trigger(st, sc, pair_from_ids(S, "1", "2"))
