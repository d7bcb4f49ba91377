"""Domain types and the kinematic/safety formulas every other module builds on.

Coordinates: ``x`` grows along the road, ``y = 0`` is the centre of the slow
lane and ``y = l`` the centre of the fast lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import BoundViolation, DomainError, ScenarioError


class VehicleClass(str, Enum):
    CAV = "CAV"
    HDV = "HDV"
    OBSTACLE = "OBSTACLE"


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0


@dataclass(frozen=True)
class ControlInput:
    u: float = 0.0
    phi: float = 0.0


@dataclass(frozen=True)
class VehicleParams:
    u_min: float = -7.0
    u_max: float = 3.3
    phi_min: float = -0.2
    phi_max: float = 0.2
    v_min: float = 15.0
    v_max: float = 35.0
    v_d: float = 30.0
    L_w: float = 2.5
    delta_v: float = 1.0

    def __post_init__(self):
        if not self.u_min < 0 < self.u_max:
            raise DomainError(f"need u_min < 0 < u_max, got [{self.u_min}, {self.u_max}]")
        if not 0 < self.v_min < self.v_max:
            raise DomainError(f"need 0 < v_min < v_max, got [{self.v_min}, {self.v_max}]")
        if self.v_d > self.v_max:
            raise DomainError(f"desired speed {self.v_d} exceeds v_max {self.v_max}")
        if not self.phi_min < self.phi_max:
            raise DomainError("need phi_min < phi_max")
        if self.L_w <= 0 or self.delta_v < 0:
            raise DomainError("wheelbase must be positive and delta_v non-negative")


@dataclass(frozen=True)
class SafetyParams:
    tau_react: float = 0.6
    delta_len: float = 1.5

    def __post_init__(self):
        if self.tau_react <= 0 or self.delta_len <= 0:
            raise DomainError("reaction time and length offset must be positive")


@dataclass(frozen=True)
class RoadGeometry:
    l: float = 4.0
    L_r: float = 100.0
    L_f: float = 100.0

    def __post_init__(self):
        if min(self.l, self.L_r, self.L_f) <= 0:
            raise DomainError("lane width and sensor ranges must be positive")


@dataclass(frozen=True)
class Vehicle:
    id: str
    cls: VehicleClass
    params: VehicleParams
    state: VehicleState
    q: float = 1.0  # initial proclivity to comply

    @property
    def controllable(self) -> bool:
        return self.cls is VehicleClass.CAV


@dataclass(frozen=True)
class Scenario:
    """Fast-lane vehicles (front to back), the lane changer C and obstacle U.

    Construction validates the initial configuration, so a ``Scenario``
    instance is always initially safe.
    """

    fast_lane: tuple[Vehicle, ...]
    changer: Vehicle
    obstacle: Vehicle
    road: RoadGeometry = field(default_factory=RoadGeometry)
    safety: SafetyParams = field(default_factory=SafetyParams)
    t0: float = 0.0
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "fast_lane", tuple(self.fast_lane))
        validate_scenario(self)

    def vehicle(self, vid: str) -> Vehicle:
        for veh in self.all_vehicles():
            if veh.id == vid:
                return veh
        raise KeyError(vid)

    def all_vehicles(self) -> tuple[Vehicle, ...]:
        return (*self.fast_lane, self.changer, self.obstacle)

    def with_proclivity(self, vid: str, q: float) -> Scenario:
        """Copy of the scenario with fast-lane vehicle ``vid`` given proclivity ``q``."""
        if all(v.id != vid for v in self.fast_lane):
            raise KeyError(vid)
        lane = tuple(replace(v, q=q) if v.id == vid else v for v in self.fast_lane)
        return replace(self, fast_lane=lane)


def safety_distance(v: float, safety: SafetyParams) -> float:
    """Speed-dependent minimum gap to the preceding vehicle."""
    if v < 0:
        raise DomainError(f"negative speed {v}")
    return safety.tau_react * v + safety.delta_len


def speed_disruption(v: float, v_d: float) -> float:
    return (v - v_d) ** 2


def step_dynamics(state: VehicleState, inp: ControlInput, L_w: float, dt: float,
                  params: VehicleParams | None = None) -> VehicleState:
    """One forward-Euler step of the control-affine kinematic bicycle.

    If ``params`` is given the new speed is checked against its bounds and a
    :class:`BoundViolation` is raised instead of clamping.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    c, s = math.cos(state.theta), math.sin(state.theta)
    v = state.v
    new = VehicleState(
        x=state.x + (v * c - v * s * inp.phi) * dt,
        y=state.y + (v * s + v * c * inp.phi) * dt,
        theta=state.theta + (v / L_w) * inp.phi * dt,
        v=v + inp.u * dt,
    )
    if params is not None and not (params.v_min - 1e-9 <= new.v <= params.v_max + 1e-9):
        raise BoundViolation("v", new.v, params.v_min, params.v_max)
    return new


def validate_scenario(sc: Scenario) -> None:
    """Raise :class:`ScenarioError` unless ``sc`` is well formed and initially safe."""
    if sc.changer.cls is not VehicleClass.CAV:
        raise ScenarioError("lane changer must be a CAV", "changer.class")
    if sc.obstacle.cls is not VehicleClass.OBSTACLE:
        raise ScenarioError("obstacle must have class OBSTACLE", "obstacle.class")
    ids = [v.id for v in sc.all_vehicles()]
    if len(set(ids)) != len(ids):
        raise ScenarioError("vehicle ids must be unique", "vehicles")
    for veh in (*sc.fast_lane, sc.changer):
        p, st = veh.params, veh.state
        if veh.cls is VehicleClass.OBSTACLE:
            raise ScenarioError("obstacle in the fast lane", f"vehicles[{veh.id}].class")
        if not p.v_min <= st.v <= p.v_max:
            raise ScenarioError(
                f"speed {st.v} outside [{p.v_min}, {p.v_max}]", f"vehicles[{veh.id}].v")
        if not -sc.road.l / 2 <= st.y <= 1.5 * sc.road.l:
            raise ScenarioError("lateral position off the road", f"vehicles[{veh.id}].y")
        if not 0.0 <= veh.q <= 1.0:
            raise ScenarioError("proclivity must lie in [0, 1]", f"vehicles[{veh.id}].q")
    if sc.obstacle.state.x <= sc.changer.state.x:
        raise ScenarioError("obstacle must be ahead of the lane changer",
                            f"vehicles[{sc.obstacle.id}].x")
    for lead, rear in zip(sc.fast_lane, sc.fast_lane[1:]):
        if not lead.state.x > rear.state.x:
            raise ScenarioError("fast lane must be ordered by decreasing x",
                                f"vehicles[{rear.id}].x")
        gap = lead.state.x - rear.state.x
        need = safety_distance(rear.state.v, sc.safety)
        if gap < need:
            raise ScenarioError(
                f"initial gap {gap:.3f} to {lead.id} below safe distance {need:.3f}",
                f"vehicles[{rear.id}].x")
    gap = sc.obstacle.state.x - sc.changer.state.x
    need = safety_distance(sc.changer.state.v, sc.safety)
    if gap < need:
        raise ScenarioError(
            f"initial gap {gap:.3f} to obstacle below safe distance {need:.3f}",
            f"vehicles[{sc.changer.id}].x")
