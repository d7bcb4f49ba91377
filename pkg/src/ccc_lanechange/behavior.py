"""How a fast-lane driver actually moves given a reference and its compliance."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InfeasibleError
from .model import SafetyParams, Vehicle, VehicleState
from .ocp import Headway, OcpSpec, Track, Trajectory, solve_hdv_behavior_ocp


@dataclass(frozen=True, eq=False)
class BehaviorRequest:
    vehicle: Vehicle
    state: VehicleState
    reference: Trajectory
    P: float
    predecessor: Track | None
    safety: SafetyParams
    extra_headway: tuple[Headway, ...] = ()
    disruption: str = "terminal"

    def __post_init__(self):
        if not 0.0 <= self.P <= 1.0:
            raise ValueError(f"P={self.P} outside [0, 1]")


def actual_trajectory(req: BehaviorRequest, tol: float = 1e-9) -> Trajectory:
    """Plan the vehicle executes over the reference's horizon.

    Controllable vehicles always act with ``P = 1``.  Headway to the
    predecessor is a hard constraint whatever ``P`` is.
    """
    veh, ref = req.vehicle, req.reference
    P = 1.0 if veh.controllable else req.P
    headway = list(req.extra_headway)
    if req.predecessor is not None:
        headway.insert(0, Headway(req.predecessor, True, req.safety, label="pred:"))
    spec = OcpSpec(x0=req.state.x, v0=req.state.v, t_start=float(ref.grid[0]),
                   t_end=ref.t_end, n_grid=len(ref.u), bounds=veh.params,
                   v_d=veh.params.v_d, terminal_speed="none", headway=tuple(headway),
                   step=ref.dt, disruption=req.disruption)
    try:
        return solve_hdv_behavior_ocp(ref, P, spec, tol=tol)
    except InfeasibleError as exc:
        raise InfeasibleError(f"behaviour infeasible ({exc})", vehicle=veh.id) from exc
