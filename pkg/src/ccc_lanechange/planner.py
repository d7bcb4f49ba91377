"""Merge-pair selection and the lateral trigger.

The lane changer's own problem is solved first (free terminal time).  Its
reference fixes the horizon for every fast-lane problem.  Each adjacent pair
of candidates, bracketed by virtual vehicles that impose nothing and cost
nothing, is then scored by the energy/disruption optimum of its two members
under the terminal merging gaps, and the cheapest feasible pair wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import AllPairsInfeasibleError, InfeasibleError
from .model import Scenario, SafetyParams, Vehicle, VehicleState, safety_distance
from .ocp import (ConstantSpeedTrack, CostWeights, Headway, OcpSpec, Trajectory,
                  solve_fixed_time_ocp, solve_free_time_ocp)

TIE_TOL = 1e-9


@dataclass(frozen=True)
class CandidateSet:
    """Fast-lane vehicles in sensor range, front to back.

    Position 0 and ``M + 1`` are the virtual vehicles ahead of and behind the
    set; they have no id.
    """

    ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def id_at(self, index: int) -> str | None:
        if index == 0 or index == len(self.ids) + 1:
            return None
        return self.ids[index - 1]

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(len(self.ids) + 1)]


@dataclass(frozen=True, eq=False)
class MergePair:
    lead: int
    rear: int
    lead_id: str | None
    rear_id: str | None
    triplet_cost: float
    references: dict[str, Trajectory] = field(default_factory=dict)

    @property
    def is_virtual(self) -> bool:
        return self.lead_id is None and self.rear_id is None


@dataclass(frozen=True)
class PlanningParams:
    weights: CostWeights = field(default_factory=CostWeights)
    deadline: float = 10.0  # absolute latest terminal time for the changer
    scan_step: float = 0.05
    grid_dt: float = 0.05
    min_horizon: float = 0.25
    tol: float = 1e-9


@dataclass(frozen=True, eq=False)
class Plan:
    t_start: float
    t_f: float  # changer's ideal terminal time
    horizon: float  # end of every reference (>= t_f)
    pair: MergePair
    references: dict[str, Trajectory]  # every fast-lane vehicle and the changer
    pair_costs: dict[tuple[int, int], float]


def candidate_set(scenario: Scenario, states: Mapping[str, VehicleState] | None = None,
                  t: float | None = None) -> CandidateSet:
    """Fast-lane vehicles with ``x_C - L_r <= x <= x_U + L_f`` (closed interval).

    ``states`` defaults to the scenario's initial states; ``t`` is informational.
    """
    states = states or {v.id: v.state for v in scenario.all_vehicles()}
    lo = states[scenario.changer.id].x - scenario.road.L_r
    hi = states[scenario.obstacle.id].x + scenario.road.L_f
    members = [v.id for v in scenario.fast_lane if lo <= states[v.id].x <= hi]
    members.sort(key=lambda vid: -states[vid].x)
    return CandidateSet(tuple(members))


def _spec(veh: Vehicle, st: VehicleState, t0: float, t1: float, n: int, dt: float,
          weights: CostWeights, headway=()) -> OcpSpec:
    return OcpSpec(x0=st.x, v0=st.v, t_start=t0, t_end=t1, n_grid=n, bounds=veh.params,
                   weights=weights, terminal_speed="soft", headway=tuple(headway), step=dt)


def changer_reference(scenario: Scenario, states: Mapping[str, VehicleState], t_k: float,
                      params: PlanningParams) -> tuple[float, float, Trajectory]:
    """Free-time reference for the lane changer: ``(t_f, horizon, trajectory)``.

    When the ideal terminal time leaves less than ``min_horizon``, the
    problem is re-solved on the fixed horizon ``t_k + min_horizon`` so the
    fast lane still gets a usable planning window.
    """
    C, U = scenario.changer, scenario.obstacle
    sc, su = states[C.id], states[U.id]
    dt = params.grid_dt
    obstacle = Headway(ConstantSpeedTrack(su.x, su.v, t_k), True, scenario.safety,
                       label="obstacle:")
    spec = OcpSpec(x0=sc.x, v0=sc.v, t_start=t_k, t_end=t_k + dt, n_grid=1,
                   bounds=C.params, weights=params.weights, terminal_speed="band",
                   headway=(obstacle,), step=dt)
    if params.deadline <= t_k:
        raise InfeasibleError("deadline passed before the merge", vehicle=C.id)
    t_f, traj = solve_free_time_ocp(spec, params.deadline, params.scan_step, grid_dt=dt,
                                    tol=params.tol)
    n_min = int(math.ceil(params.min_horizon / dt - 1e-9))
    if len(traj.u) >= n_min:
        return t_f, traj.grid[-1], traj
    fixed = solve_fixed_time_ocp(
        OcpSpec(x0=sc.x, v0=sc.v, t_start=t_k, t_end=t_k + n_min * dt, n_grid=n_min,
                bounds=C.params, weights=params.weights, terminal_speed="band",
                headway=(obstacle,), step=dt), tol=params.tol)
    fixed = Trajectory(fixed.grid, fixed.u, fixed.x, fixed.v,
                       fixed.cost + params.weights.alpha_t * (fixed.t_end - t_k))
    return t_f, fixed.t_end, fixed


def plan_references(scenario: Scenario, states: Mapping[str, VehicleState],
                    S: CandidateSet, t_k: float, params: PlanningParams) -> Plan:
    """Changer reference, optimal pair and references for the whole fast lane.

    Raises :class:`AllPairsInfeasibleError` when no pair admits a feasible
    triplet, and :class:`InfeasibleError` when the changer itself is stuck.
    """
    t_f, horizon, c_ref = changer_reference(scenario, states, t_k, params)
    J_C = c_ref.cost
    n, dt = len(c_ref.u), params.grid_dt
    w = params.weights
    lane = list(scenario.fast_lane)
    pos = {v.id: k for k, v in enumerate(lane)}
    safety = scenario.safety

    def solve(veh, pred_track, extra=()):
        hw = [] if pred_track is None else [Headway(pred_track, True, safety, label="pred:")]
        spec = _spec(veh, states[veh.id], t_k, horizon, n, dt, w, [*hw, *extra])
        return solve_fixed_time_ocp(spec, tol=params.tol)

    # undisturbed references, front to back
    free: dict[str, Trajectory] = {}
    for k, veh in enumerate(lane):
        pred = free[lane[k - 1].id] if k else None
        try:
            free[veh.id] = solve(veh, pred)
        except InfeasibleError as exc:
            raise InfeasibleError(f"no safe reference: {exc}", vehicle=veh.id) from exc

    lead_gap = Headway(c_ref, False, safety, terminal_only=True, label="merge_lead:")
    rear_gap = Headway(c_ref, True, safety, terminal_only=True, label="merge_rear:")

    scored: list[tuple[float, int, int, dict[str, Trajectory]]] = []
    pair_costs: dict[tuple[int, int], float] = {}
    for i, j in S.pairs():
        lead_id, rear_id = S.id_at(i), S.id_at(j)
        refs: dict[str, Trajectory] = {}
        cost = J_C
        try:
            if lead_id is not None:
                veh = lane[pos[lead_id]]
                pred = free[lane[pos[lead_id] - 1].id] if pos[lead_id] else None
                refs[lead_id] = solve(veh, pred, [lead_gap])
                cost += refs[lead_id].cost
            if rear_id is not None:
                veh = lane[pos[rear_id]]
                if pos[rear_id]:
                    pid = lane[pos[rear_id] - 1].id
                    pred = refs.get(pid, free[pid])
                else:
                    pred = None
                refs[rear_id] = solve(veh, pred, [rear_gap])
                cost += refs[rear_id].cost
        except InfeasibleError:
            pair_costs[(i, j)] = math.inf
            continue
        pair_costs[(i, j)] = cost
        scored.append((cost, j, i, refs))

    if not scored:
        raise AllPairsInfeasibleError(f"no feasible merge pair at t={t_k:.3f}")
    last_error: InfeasibleError | None = None
    for cost, j, i, refs in order_pairs(scored):
        try:
            full = _complete_lane(lane, free, refs, S, j, solve)
        except InfeasibleError as exc:
            last_error = exc
            continue
        full[scenario.changer.id] = c_ref
        pair = MergePair(i, j, S.id_at(i), S.id_at(j), cost,
                         {k: full[k] for k in (scenario.changer.id, S.id_at(i), S.id_at(j))
                          if k is not None})
        return Plan(t_k, t_f, horizon, pair, full, pair_costs)
    raise AllPairsInfeasibleError(f"followers cannot stay safe behind any pair: {last_error}")


def order_pairs(scored: list) -> list:
    """Sort ``(cost, rear, lead, ...)`` entries by cost; ties go to the smaller rear index."""
    ordered = sorted(scored, key=lambda s: (s[0], s[1]))
    if not ordered:
        return ordered
    best = ordered[0][0]
    ties = sorted((s for s in ordered if s[0] <= best + TIE_TOL), key=lambda s: s[1])
    return ties + [s for s in ordered if s[0] > best + TIE_TOL]


def _complete_lane(lane, free, refs, S, rear, solve):
    """Re-solve every vehicle behind the pair against its predecessor's new reference."""
    full = dict(free)
    full.update(refs)
    if not refs:
        return full
    last = S.id_at(rear) or S.id_at(rear - 1)
    start = next(k for k, v in enumerate(lane) if v.id == last) + 1
    for k in range(start, len(lane)):
        full[lane[k].id] = solve(lane[k], full[lane[k - 1].id])
    return full


def lateral_trigger(states: Mapping[str, VehicleState], scenario: Scenario,
                    pair: MergePair, safety: SafetyParams | None = None) -> bool:
    """Longitudinal safety of the changer with the obstacle and both pair members."""
    safety = safety or scenario.safety
    c = states[scenario.changer.id]
    u = states[scenario.obstacle.id]
    d_c = safety_distance(c.v, safety)
    if u.x - c.x < d_c:
        return False
    if pair.lead_id is not None and states[pair.lead_id].x - c.x < d_c:
        return False
    if pair.rear_id is not None:
        r = states[pair.rear_id]
        if c.x - r.x < safety_distance(r.v, safety):
            return False
    return True


def trigger_margins(states: Mapping[str, VehicleState], scenario: Scenario,
                    pair: MergePair) -> dict[str, float]:
    """Signed slack of each merging gap (non-negative when satisfied)."""
    safety = scenario.safety
    c = states[scenario.changer.id]
    u = states[scenario.obstacle.id]
    d_c = safety_distance(c.v, safety)
    out = {"obstacle": u.x - c.x - d_c}
    if pair.lead_id is not None:
        out["lead"] = states[pair.lead_id].x - c.x - d_c
    if pair.rear_id is not None:
        r = states[pair.rear_id]
        out["rear"] = c.x - r.x - safety_distance(r.v, safety)
    return out


def pair_from_ids(S: CandidateSet, lead_id: str | None, rear_id: str | None) -> MergePair:
    """A bare pair (no references), e.g. to evaluate the trigger by hand."""
    index = {vid: k + 1 for k, vid in enumerate(S.ids)}
    if lead_id is not None:
        i = index[lead_id]
    elif rear_id is not None:
        i = index[rear_id] - 1
    else:
        i = 0
    return MergePair(i, i + 1, lead_id, rear_id, math.nan)
