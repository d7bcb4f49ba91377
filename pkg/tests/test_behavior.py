import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccc_lanechange.behavior import BehaviorRequest, actual_trajectory
from ccc_lanechange.model import SafetyParams, VehicleClass
from ccc_lanechange.ocp import ConstantSpeedTrack, OcpSpec, rollout

from conftest import vehicle

SAFE = SafetyParams()


def _ref(v0=26.0, a=-1.5, n=40):
    return rollout(OcpSpec(0.0, v0, 0.0, 2.0, n, step=0.05), np.full(n, a))


def test_cav_follows_reference():
    cav = vehicle("2", 0.0, 26.0, VehicleClass.CAV)
    ref = _ref()
    tr = actual_trajectory(BehaviorRequest(cav, cav.state, ref, 0.0, None, SAFE))
    np.testing.assert_allclose(tr.u, ref.u, atol=1e-9)


def test_selfish_hdv_cruises():
    hdv = vehicle("4", 0.0, 26.0, VehicleClass.HDV, q=0.0)
    tr = actual_trajectory(BehaviorRequest(hdv, hdv.state, _ref(), 0.0, None, SAFE))
    np.testing.assert_allclose(tr.u, 0.0, atol=1e-9)


def test_invalid_probability_rejected():
    hdv = vehicle("4", 0.0, 26.0, VehicleClass.HDV)
    with pytest.raises(ValueError):
        BehaviorRequest(hdv, hdv.state, _ref(), 1.5, None, SAFE)


def test_infeasible_behaviour_names_vehicle():
    from ccc_lanechange.errors import InfeasibleError
    hdv = vehicle("4", 0.0, 26.0, VehicleClass.HDV)
    # predecessor already far inside the safety distance and braking hard
    pred = ConstantSpeedTrack(2.0, 15.0)
    with pytest.raises(InfeasibleError) as info:
        actual_trajectory(BehaviorRequest(hdv, hdv.state, _ref(), 0.5, pred, SAFE))
    assert info.value.vehicle == "4"


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(-3, 2))
def test_headway_kept_for_any_probability(P, a):
    hdv = vehicle("4", 0.0, 26.0, VehicleClass.HDV)
    pred = ConstantSpeedTrack(22.0, 24.0)
    tr = actual_trajectory(BehaviorRequest(hdv, hdv.state, _ref(a=a), P, pred, SAFE))
    xo, _ = pred.at(tr.grid)
    assert np.all(xo - tr.x >= SAFE.tau_react * tr.v + SAFE.delta_len - 1e-7)


def test_partially_compliant_hdv_deviates_in_default_run(runs):
    res = runs.get()
    M1 = res.compliance["4"][1, 0]
    assert M1 < 1.0
    # the actual first-step control is weaker braking than the reference's
    ref_u = res.references["4"][0, 2]
    act_u = res.states["4"][0, 4]
    assert ref_u < 0 and ref_u < act_u <= 0
