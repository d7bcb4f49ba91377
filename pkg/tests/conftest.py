from dataclasses import replace

import pytest

from ccc_lanechange.engine import ControllerMode, run_maneuver
from ccc_lanechange.model import (RoadGeometry, SafetyParams, Scenario, Vehicle, VehicleClass,
                                  VehicleParams, VehicleState)
from ccc_lanechange.scenario_io import load_scenario


@pytest.fixture(scope="session")
def default():
    """The bundled default scenario and its configuration."""
    return load_scenario("paper_default")


class RunCache:
    """Manoeuvres keyed by (HDV 4 proclivity, controller mode), simulated once per session."""

    def __init__(self, loaded):
        self.loaded = loaded
        self._runs = {}

    def get(self, q4=None, mode=ControllerMode.BOTH):
        mode = ControllerMode(mode)
        q4 = self.loaded.scenario.vehicle("4").q if q4 is None else q4
        key = (q4, mode)
        if key not in self._runs:
            sc = self.loaded.scenario.with_proclivity("4", q4)
            self._runs[key] = run_maneuver(sc, replace(self.loaded.config, controller_mode=mode))
        return self._runs[key]

    def all(self):
        return list(self._runs.values())


@pytest.fixture(scope="session")
def runs(default):
    return RunCache(default)


def vehicle(vid, x, v, cls=VehicleClass.CAV, q=1.0, y=4.0, v_d=None):
    v_d = v if v_d is None and cls is not VehicleClass.CAV else (30.0 if v_d is None else v_d)
    return Vehicle(vid, cls, VehicleParams(v_d=v_d), VehicleState(x, y, 0.0, v), q)


def make_scenario(lane, xC=30.0, vC=24.0, xU=75.0, vU=20.0, road=None):
    C = Vehicle("C", VehicleClass.CAV, VehicleParams(), VehicleState(xC, 0.0, 0.0, vC))
    U = Vehicle("U", VehicleClass.OBSTACLE, VehicleParams(v_d=vU), VehicleState(xU, 0.0, 0.0, vU))
    return Scenario(tuple(lane), C, U, road or RoadGeometry(), SafetyParams())
