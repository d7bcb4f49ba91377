"""Closed-loop lane-change simulation with compliance control.

Loop at every sampling instant ``t_k``:

1. measure each fast-lane vehicle against the references planned at
   ``t_{k-1}`` and advance the compliance controllers,
2. re-plan the changer, the merge pair and every fast-lane reference,
3. let each fast-lane vehicle pick its actual plan from its reference and
   current compliance probability (front to back, so every vehicle respects
   the plan of the one ahead),
4. fire the lateral manoeuvre if the changer is longitudinally safe,
   otherwise integrate the plant for one sampling interval and repeat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .behavior import BehaviorRequest, actual_trajectory
from .compliance import (AgentComplianceState, ComplianceConfig, GlobalControllerState,
                         measure_error, step_all)
from .errors import ConfigError, InfeasibleError
from .model import (ControlInput, Scenario, VehicleState, safety_distance, speed_disruption,
                    step_dynamics)
from .ocp import (CostWeights, Headway, LateralTrajectory, OcpSpec, Trajectory,
                  solve_fixed_time_ocp, solve_lateral_ocp)
from .planner import (Plan, PlanningParams, candidate_set, lateral_trigger, plan_references,
                      trigger_margins)


class ControllerMode(str, Enum):
    BOTH = "both"
    GLOBAL_ONLY = "global"
    LOCAL_ONLY = "local"
    NONE = "none"


@dataclass(frozen=True)
class SimConfig:
    dt_sample: float = 0.2
    dt_plant: float = 0.05
    T_max: float = 10.0
    controller_mode: ControllerMode = ControllerMode.BOTH
    compliance: ComplianceConfig = field(default_factory=ComplianceConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    scan_step: float = 0.05
    lateral_T_max: float = 3.0
    hdv_disruption: str = "terminal"  # or "running"
    tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "controller_mode", ControllerMode(self.controller_mode))
        if self.dt_plant <= 0 or self.dt_sample <= 0 or self.T_max <= 0:
            raise ConfigError("time steps and T_max must be positive")
        if self.dt_plant > self.dt_sample + 1e-12:
            raise ConfigError("dt_plant must not exceed dt_sample")
        ratio = self.dt_sample / self.dt_plant
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("dt_plant must divide dt_sample")
        ratio = self.scan_step / self.dt_plant
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("scan_step must be a multiple of dt_plant")
        if self.hdv_disruption not in ("terminal", "running"):
            raise ConfigError(f"unknown hdv_disruption {self.hdv_disruption!r}")

    @property
    def plant_steps_per_sample(self) -> int:
        return int(round(self.dt_sample / self.dt_plant))

    def effective_compliance(self) -> ComplianceConfig:
        mode = self.controller_mode
        return replace(self.compliance,
                       update_global=mode in (ControllerMode.BOTH, ControllerMode.GLOBAL_ONLY),
                       update_local=mode in (ControllerMode.BOTH, ControllerMode.LOCAL_ONLY))

    def planning(self, t0: float) -> PlanningParams:
        return PlanningParams(weights=self.weights, deadline=t0 + self.T_max,
                              scan_step=self.scan_step, grid_dt=self.dt_plant,
                              min_horizon=self.dt_sample, tol=self.tol)


@dataclass(eq=False)
class ManeuverResult:
    feasible: bool
    reason: str
    t0: float
    t_lateral: float | None
    t_final: float | None
    pair: tuple[str | None, str | None] | None
    changer_id: str
    obstacle_id: str
    fast_lane_ids: tuple[str, ...]
    desired_speed: dict[str, float]
    times: np.ndarray  # plant instants
    states: dict[str, np.ndarray]  # rows: x, y, theta, v, u (u applied from that instant)
    references: dict[str, np.ndarray]  # rows: x_ref, v_ref, u_ref (nan where none)
    sample_times: np.ndarray
    compliance: dict[str, np.ndarray]  # rows: M, M_bar, P, c
    C_global: np.ndarray
    pair_history: list[tuple[float, str | None, str | None, float]]
    lateral: LateralTrajectory | None = None
    gap_margins: dict[str, float] = field(default_factory=dict)
    trigger_gaps: dict[str, float] = field(default_factory=dict)

    @property
    def vehicle_ids(self) -> tuple[str, ...]:
        return (*self.fast_lane_ids, self.changer_id, self.obstacle_id)

    @property
    def maneuver_time(self) -> float:
        if not self.feasible:
            return math.inf
        return self.t_final - self.t0

    @property
    def triplet_energy(self) -> float:
        if not self.feasible:
            return math.inf
        ids = [self.changer_id, *(vid for vid in self.pair if vid is not None)]
        dt = float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0
        total = 0.0
        for vid in ids:
            u = self.states[vid][:, 4]
            total += float(np.sum(u[np.isfinite(u)] ** 2)) * dt
        return total


def metrics(result: ManeuverResult) -> dict:
    """Manoeuvre time, triplet energy and terminal speed disruption per vehicle."""
    if not result.feasible:
        return {"feasible": False, "maneuver_time": math.inf, "triplet_energy": math.inf,
                "t_lateral": None, "pair": None, "disruption": {}, "reason": result.reason}
    disruption = {vid: speed_disruption(float(result.states[vid][-1, 3]),
                                        result.desired_speed[vid])
                  for vid in (*result.fast_lane_ids, result.changer_id)}
    return {"feasible": True, "maneuver_time": result.maneuver_time,
            "triplet_energy": result.triplet_energy, "t_lateral": result.t_lateral,
            "pair": list(result.pair), "disruption": disruption, "reason": result.reason}


class _Recorder:
    def __init__(self, scenario: Scenario, t0: float, dt: float):
        self.ids = [v.id for v in scenario.all_vehicles()]
        self.t0, self.dt = t0, dt
        self.steps = 0
        self.rows = {vid: [] for vid in self.ids}
        self.refs = {vid: [] for vid in self.ids}
        self.samples: list[float] = []
        self.comp = {v.id: [] for v in scenario.fast_lane}
        self.C: list[float] = []

    @property
    def t(self) -> float:
        return self.t0 + self.steps * self.dt

    def state(self, states, controls, refs):
        for vid in self.ids:
            s = states[vid]
            self.rows[vid].append((s.x, s.y, s.theta, s.v, controls.get(vid, math.nan)))
            self.refs[vid].append(refs.get(vid, (math.nan, math.nan, math.nan)))

    def sample(self, t, agents, g):
        self.samples.append(t)
        for vid, a in agents.items():
            self.comp[vid].append((a.M, a.M_bar, a.P, a.c))
        self.C.append(g.C)


def _ref_row(traj: Trajectory, i: int) -> tuple[float, float, float]:
    u = float(traj.u[i]) if i < len(traj.u) else math.nan
    if i < len(traj.x):
        return float(traj.x[i]), float(traj.v[i]), u
    x, v = traj.at(traj.grid[0] + i * traj.dt + np.zeros(1))
    return float(x[0]), float(v[0]), u


def run_maneuver(scenario: Scenario, cfg: SimConfig | None = None) -> ManeuverResult:
    """Simulate one cooperative lane change; infeasibility is recorded, not raised."""
    cfg = cfg or SimConfig()
    ccfg = cfg.effective_compliance()
    control_on = cfg.controller_mode is not ControllerMode.NONE
    t0, dt = scenario.t0, cfg.dt_plant
    params = cfg.planning(t0)
    lane = scenario.fast_lane
    C, U = scenario.changer, scenario.obstacle
    by_id = {v.id: v for v in scenario.all_vehicles()}
    states = {v.id: v.state for v in scenario.all_vehicles()}
    agents = {v.id: AgentComplianceState.initial(v.q, v.controllable, ccfg) for v in lane}
    g = GlobalControllerState()
    rec = _Recorder(scenario, t0, dt)
    rec.sample(t0, agents, g)
    pair_history: list[tuple[float, str | None, str | None, float]] = []
    margins = {"fast_lane": math.inf, "obstacle": math.inf}

    def track_margins():
        for lead, rear in zip(lane, lane[1:]):
            a, b = states[lead.id], states[rear.id]
            margins["fast_lane"] = min(margins["fast_lane"],
                                       a.x - b.x - safety_distance(b.v, scenario.safety))
        c, u = states[C.id], states[U.id]
        margins["obstacle"] = min(margins["obstacle"],
                                  u.x - c.x - safety_distance(c.v, scenario.safety))

    def result(feasible, reason, t_lat=None, t_fin=None, pair=None, lateral=None, trig=None):
        if len(rec.rows[C.id]) == rec.steps:
            rec.state(states, {}, {})
        return ManeuverResult(
            feasible=feasible, reason=reason, t0=t0, t_lateral=t_lat, t_final=t_fin,
            pair=pair, changer_id=C.id, obstacle_id=U.id,
            fast_lane_ids=tuple(v.id for v in lane),
            desired_speed={v.id: v.params.v_d for v in scenario.all_vehicles()},
            times=t0 + dt * np.arange(rec.steps + 1),
            states={k: np.array(v, dtype=float) for k, v in rec.rows.items()},
            references={k: np.array(v, dtype=float) for k, v in rec.refs.items()},
            sample_times=np.array(rec.samples),
            compliance={k: np.array(v, dtype=float) for k, v in rec.comp.items()},
            C_global=np.array(rec.C), pair_history=pair_history, lateral=lateral,
            gap_margins=dict(margins), trigger_gaps=trig or {})

    track_margins()
    k = 0
    try:
        while True:
            t_k = t0 + k * cfg.dt_sample
            plan = plan_references(scenario, states, candidate_set(scenario, states, t_k),
                                   t_k, params)
            pair_history.append((t_k, plan.pair.lead_id, plan.pair.rear_id,
                                 plan.pair.triplet_cost))
            if lateral_trigger(states, scenario, plan.pair):
                break
            if t_k + cfg.dt_sample > t0 + cfg.T_max + 1e-9:
                return result(False, f"no safe merge gap before T_max={cfg.T_max}")
            actual = _fast_lane_behaviour(scenario, states, plan.references,
                                          {vid: a.P for vid, a in agents.items()}, cfg)
            actual[C.id] = plan.references[C.id]
            for i in range(cfg.plant_steps_per_sample):
                controls = {vid: float(tr.u[i]) for vid, tr in actual.items()}
                controls[U.id] = 0.0
                rec.state(states, controls,
                          {vid: _ref_row(tr, i) for vid, tr in plan.references.items()})
                states = {vid: step_dynamics(st, ControlInput(controls[vid]),
                                             by_id[vid].params.L_w, dt, by_id[vid].params)
                          for vid, st in states.items()}
                rec.steps += 1
                track_margins()
            k += 1
            t_next = t0 + k * cfg.dt_sample
            agents, g = _update_compliance(lane, plan.references, states, agents, g, ccfg,
                                           t_next, control_on)
            rec.sample(t_next, agents, g)
    except InfeasibleError as exc:
        return result(False, str(exc))

    t_lat = t0 + k * cfg.dt_sample
    trig = trigger_margins(states, scenario, plan.pair)
    pair = (plan.pair.lead_id, plan.pair.rear_id)
    try:
        t_fin, lateral = solve_lateral_ocp(
            states[C.id].v, C.params.L_w, scenario.road.l, t_lat + cfg.lateral_T_max,
            cfg.weights, C.params, time_step=dt, t_start=t_lat, y0=states[C.id].y,
            tol=cfg.tol)
    except InfeasibleError as exc:
        return result(False, f"lateral manoeuvre: {exc}", t_lat, pair=pair, trig=trig)

    # changer path during the lane change is open loop, so roll it out first
    n_lat = len(lateral.phi)
    c_path = [states[C.id]]
    for i in range(n_lat):
        c_path.append(step_dynamics(c_path[-1], ControlInput(0.0, float(lateral.phi[i])),
                                    C.params.L_w, dt, C.params))
    c_track = Trajectory(lateral.grid, np.zeros(n_lat),
                         np.array([s.x for s in c_path]), np.array([s.v for s in c_path]))
    # the fast lane is re-planned every sample against the rest of the changer's path
    i0, m = 0, cfg.plant_steps_per_sample
    while i0 < n_lat:
        seg = Trajectory(c_track.grid[i0:], c_track.u[i0:], c_track.x[i0:], c_track.v[i0:])
        try:
            refs, actual = _lateral_phase_plans(scenario, states, plan, seg, agents, cfg)
        except InfeasibleError as exc:
            return result(False, f"fast lane during lane change: {exc}", t_lat, pair=pair,
                          trig=trig)
        steps = min(m, n_lat - i0)
        for i in range(steps):
            controls = {vid: float(tr.u[i]) for vid, tr in actual.items()}
            controls[U.id] = 0.0
            controls[C.id] = 0.0
            rec.state(states, controls, {vid: _ref_row(tr, i) for vid, tr in refs.items()})
            nxt = {vid: step_dynamics(st, ControlInput(controls[vid]),
                                      by_id[vid].params.L_w, dt, by_id[vid].params)
                   for vid, st in states.items() if vid != C.id}
            nxt[C.id] = c_path[i0 + i + 1]
            states = nxt
            rec.steps += 1
            track_margins()
        i0 += steps
        if steps == m:
            k += 1
            agents, g = _update_compliance(lane, refs, states, agents, g, ccfg,
                                           t0 + k * cfg.dt_sample, control_on)
            rec.sample(t0 + k * cfg.dt_sample, agents, g)
    return result(True, "merged", t_lat, t_lat + n_lat * dt, pair, lateral, trig)


def _update_compliance(lane, refs, states, agents, g, ccfg, t, control_on):
    """Measure each fast-lane vehicle against its reference at ``t`` and step the controllers."""
    if not control_on:
        return agents, g
    errors = []
    for veh in lane:
        xr, vr = refs[veh.id].at(np.array([t]))
        errors.append(measure_error(states[veh.id], VehicleState(float(xr[0]), v=float(vr[0]))))
    new, g = step_all([agents[v.id] for v in lane], g, errors, ccfg)
    return {v.id: a for v, a in zip(lane, new)}, g


def _fast_lane_behaviour(scenario, states, refs, P, cfg, extra=None):
    """Actual plans front to back; each vehicle keeps headway to the plan ahead."""
    out: dict[str, Trajectory] = {}
    prev = None
    for veh in scenario.fast_lane:
        req = BehaviorRequest(veh, states[veh.id], refs[veh.id], P[veh.id], prev,
                              scenario.safety, tuple((extra or {}).get(veh.id, ())),
                              disruption=cfg.hdv_disruption)
        out[veh.id] = actual_trajectory(req, tol=cfg.tol)
        prev = out[veh.id]
    return out


def _lateral_phase_plans(scenario, states, plan: Plan, c_track: Trajectory, agents, cfg):
    """References and actual plans while the changer crosses into the fast lane.

    Each vehicle gets an energy/disruption reference over the lane-change
    window; the pair keeps its merging gaps to the changer throughout.
    """
    t_lat, t_end = float(c_track.grid[0]), float(c_track.grid[-1])
    n, dt = len(c_track.u), cfg.dt_plant
    safety = scenario.safety
    extra: dict[str, list[Headway]] = {}
    if plan.pair.lead_id is not None:
        extra[plan.pair.lead_id] = [Headway(c_track, False, safety, label="changer_behind:")]
    if plan.pair.rear_id is not None:
        extra[plan.pair.rear_id] = [Headway(c_track, True, safety, label="changer_ahead:")]
    refs: dict[str, Trajectory] = {}
    prev = None
    for veh in scenario.fast_lane:
        hw = list(extra.get(veh.id, ()))
        if prev is not None:
            hw.insert(0, Headway(prev, True, safety, label="pred:"))
        st = states[veh.id]
        spec = OcpSpec(x0=st.x, v0=st.v, t_start=t_lat, t_end=t_end, n_grid=n,
                       bounds=veh.params, weights=cfg.weights, terminal_speed="soft",
                       headway=tuple(hw), step=dt)
        try:
            refs[veh.id] = solve_fixed_time_ocp(spec, tol=cfg.tol)
        except InfeasibleError as exc:
            raise InfeasibleError(str(exc), vehicle=veh.id) from exc
        prev = refs[veh.id]
    return refs, _fast_lane_behaviour(scenario, states, refs,
                                      {vid: a.P for vid, a in agents.items()}, cfg, extra)


def sweep_initial_compliance(scenario: Scenario, levels: Iterable[float],
                             cfg: SimConfig | None = None, target: str = "4",
                             ) -> list[dict]:
    """Table rows ``(q, mode, maneuver_time, energy)`` with and without control.

    Only vehicle ``target``'s proclivity varies.  Rows are ordered by level,
    control first.
    """
    cfg = cfg or SimConfig()
    rows = []
    base_mode = cfg.controller_mode if cfg.controller_mode is not ControllerMode.NONE \
        else ControllerMode.BOTH
    for q in sorted(levels):
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"compliance level {q} outside [0, 1]")
        sc = scenario.with_proclivity(target, q)
        for label, mode in (("control", base_mode), ("baseline", ControllerMode.NONE)):
            res = run_maneuver(sc, replace(cfg, controller_mode=mode))
            rows.append({"q": q, "mode": label, "feasible": res.feasible,
                         "maneuver_time": res.maneuver_time,
                         "energy": res.triplet_energy, "result": res})
    return rows


def ablation_run(scenario: Scenario, cfg: SimConfig | None = None,
                 modes: Sequence[ControllerMode] = (ControllerMode.BOTH,
                                                    ControllerMode.LOCAL_ONLY,
                                                    ControllerMode.GLOBAL_ONLY),
                 ) -> dict[ControllerMode, ManeuverResult]:
    """The same scenario under each controller configuration."""
    cfg = cfg or SimConfig()
    return {ControllerMode(m): run_maneuver(scenario, replace(cfg, controller_mode=m))
            for m in modes}
