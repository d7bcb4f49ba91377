"""Acceptance suite, one test per criterion.  Each test prints one PASS/FAIL line."""
import csv
import json
import math

import numpy as np
import pytest

from ccc_lanechange import cli
from ccc_lanechange.compliance import (AgentComplianceState, ComplianceConfig,
                                       GlobalControllerState, clamp_unit, compliance_probability,
                                       update_global, update_local, update_windowed_average)
from ccc_lanechange.engine import ControllerMode, metrics, run_maneuver
from ccc_lanechange.errors import InfeasibleError
from ccc_lanechange.model import safety_distance
from ccc_lanechange.ocp import (CostWeights, OcpSpec, analytic_min_energy_oracle,
                                solve_fixed_time_ocp)
from ccc_lanechange.qp import QpProblem, solve_qp
from ccc_lanechange.scenario_io import (POSITION_COLUMNS, load_scenario, save_scenario,
                                        scenario_to_dict, write_ablation, write_traces)

from qp_oracle import enumerate_active_sets
from test_ocp import FREE
from test_qp import random_qp

LEVELS = (0.0, 0.2, 0.5, 0.8)


def report(capsys, n, checks):
    """Print one verdict line for criterion ``n``, then assert every named check."""
    failed = [name for name, ok in checks.items() if not ok]
    with capsys.disabled():
        verdict = "PASS" if not failed else "FAIL (" + "; ".join(failed) + ")"
        print(f"\ncriterion {n}: {verdict}")
    assert not failed, failed


def test_criterion_1_unit_laws(capsys):
    cfg = ComplianceConfig(alpha=0.1, beta=0.1, gamma=0.7, Q_star=1.0, w_q=1.0, w_c=0.5, w_i=0.5)
    checks = {}
    table = [(1.5, 1.0), (1.0, 1.0), (0.3, 0.3), (0.0, 0.0), (-0.2, 0.0)]
    checks["clamp table"] = all(clamp_unit(x) == y for x, y in table)
    hand_global = [((0.0, 1.0), 0.0), ((0.1, 0.8), 0.12), ((0.05, 1.0), 0.05)]
    checks["global step"] = all(
        abs(update_global(GlobalControllerState(C), m, cfg).C - want) <= 1e-12
        for (C, m), want in hand_global)
    hand_local = [((0.0, 1.0), 0.0), ((0.0, 0.0), 0.1), ((0.1, 0.5), 0.15)]
    checks["local step"] = all(
        abs(update_local(AgentComplianceState(q=0.0, c=c, M_bar=mb), cfg).c - want) <= 1e-12
        for (c, mb), want in hand_local)
    P = compliance_probability(AgentComplianceState(q=0.3, c=0.12), GlobalControllerState(0.04),
                               cfg)
    checks["probability"] = abs(P - 0.38) <= 1e-12
    M_bar, errs = 0.0, []
    for k in range(1, 51):
        M_bar = update_windowed_average(M_bar, 1.0, cfg.gamma)
        errs.append(abs(M_bar - (1 - cfg.gamma ** k)))
    checks["windowed average 1-gamma^k"] = max(errs) <= 1e-12
    report(capsys, 1, checks)


def test_criterion_2_solver_vs_oracle(capsys):
    rng = np.random.default_rng(2024)
    cost_err, u_err = 0.0, 0.0
    for trial in range(120):
        v0, T = rng.uniform(15, 35), rng.uniform(0.5, 6)
        vf = v0 + rng.uniform(-5, 5)
        xf = v0 * T + rng.uniform(-10, 10) if trial % 2 else None
        spec = OcpSpec(0, v0, 0, T, 50, v_d=vf, terminal_speed="exact", terminal_position=xf,
                       scheme="foh", weights=CostWeights(alpha_u=0.4), **FREE)
        tr = solve_fixed_time_ocp(spec)
        o = analytic_min_energy_oracle(0, v0, T, vf, xf, 50, alpha_u=0.4)
        cost_err = max(cost_err, abs(tr.cost - o.cost) / max(o.cost, 1e-9))
        u_err = max(u_err, float(np.max(np.abs(tr.u - o.u))))
    qp_err, mismatched, checked = 0.0, 0, 0
    for trial in range(200):
        n, m = int(rng.integers(1, 7)), int(rng.integers(0, 9))
        H, c, G, h = random_qp(rng, n, m, feasible=trial % 5 != 0)
        ref = enumerate_active_sets(H, c, G, h)
        try:
            sol = solve_qp(QpProblem(H, c, G, h))
        except InfeasibleError:
            mismatched += ref is not None
            continue
        if ref is None:
            mismatched += 1
            continue
        checked += 1
        qp_err = max(qp_err, float(np.max(np.abs(sol.x - ref[0]))), abs(sol.objective - ref[1]))
    report(capsys, 2, {f"cost rel err {cost_err:.1e} <= 1e-4": cost_err <= 1e-4,
                       f"control err {u_err:.1e} <= 1e-3": u_err <= 1e-3,
                       f"qp err {qp_err:.1e} <= 1e-6": qp_err <= 1e-6,
                       "qp feasibility agrees": mismatched == 0 and checked > 100})


def test_criterion_3_pair_and_trigger(runs, capsys):
    res = runs.get()
    pairs = {(lead, rear) for _, lead, rear, _ in res.pair_history}
    report(capsys, 3, {"feasible": res.feasible,
                       f"pair {res.pair} == (3, 4)": res.pair == ("3", "4"),
                       f"t_l {res.t_lateral} in [2, 4.5]":
                           res.t_lateral is not None and 2.0 <= res.t_lateral <= 4.5,
                       "selected pair stable": pairs == {("3", "4")}})


def test_criterion_4_compliance_convergence(runs, capsys):
    res = runs.get()
    M_bar = {vid: res.compliance[vid][:, 1] for vid in res.fast_lane_ids}
    C, c4 = res.C_global, res.compliance["4"][:, 3]
    checks = {
        f"HDV 4 M_bar reaches 0.95 (final {M_bar['4'][-1]:.3f})": M_bar["4"][-1] >= 0.95,
        "HDV 4 M_bar dips first": M_bar["4"].min() < 0.95,
        "HDV 1 and CAVs M_bar >= 0.99": all(M_bar[v].min() >= 0.99 for v in ("1", "2", "3", "5")),
        "C non-decreasing": bool(np.all(np.diff(C) >= 0)),
        "c4 non-decreasing": bool(np.all(np.diff(c4) >= 0)),
        f"C converged ({abs(C[-1] - C[-2]):.1e})": abs(C[-1] - C[-2]) <= 1e-3,
        f"c4 converged ({abs(c4[-1] - c4[-2]):.1e})": abs(c4[-1] - c4[-2]) <= 1e-3,
    }
    report(capsys, 4, checks)


def test_criterion_5_sweep_trends(runs, capsys):
    ctrl = [runs.get(q, ControllerMode.BOTH) for q in LEVELS]
    base = [runs.get(q, ControllerMode.NONE) for q in LEVELS]
    times = [r.maneuver_time for r in ctrl]
    energy = [r.triplet_energy for r in ctrl]
    with capsys.disabled():
        for q, c, b in zip(LEVELS, ctrl, base):
            print(f"\n  q4={q}: control t={c.maneuver_time:.2f} E={c.triplet_energy:.3f} | "
                  f"baseline t={b.maneuver_time:.2f} E={b.triplet_energy:.3f}", end="")
    ratio = energy[-1] / energy[0]
    checks = {
        "control feasible at every level": all(r.feasible for r in ctrl),
        "time non-increasing": all(b <= a + 1e-9 for a, b in zip(times, times[1:])),
        "energy strictly decreasing": all(b < a for a, b in zip(energy, energy[1:])),
        f"energy ratio {ratio:.3f} <= 0.6": ratio <= 0.6,
        "baseline infeasible at 0 and 0.2": not base[0].feasible and not base[1].feasible,
        "baseline feasible at 0.5 and 0.8": base[2].feasible and base[3].feasible,
        "baseline energy >= control energy": all(
            b.triplet_energy >= c.triplet_energy for b, c in zip(base[2:], ctrl[2:])),
    }
    report(capsys, 5, checks)


def _read_ablation(path):
    traces = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            traces.setdefault((row["mode"], row["id"]), []).append(float(row["P"]))
    return {k: np.array(v) for k, v in traces.items()}


def test_criterion_6_ablation_shapes(runs, tmp_path, capsys):
    results = {m: runs.get(None, m) for m in (ControllerMode.BOTH, ControllerMode.LOCAL_ONLY,
                                              ControllerMode.GLOBAL_ONLY)}
    P = _read_ablation(write_ablation(results, tmp_path / "ablation.csv"))
    local1 = P[("local", "1")]
    g1, g4 = np.diff(P[("global", "1")]), np.diff(P[("global", "4")])
    unclamped = (P[("global", "1")][1:] < 1.0) & (P[("global", "4")][1:] < 1.0)
    both1, both4 = P[("both", "1")], P[("both", "4")]
    d1, d4 = both1[-1] - both1[0], both4[-1] - both4[0]
    checks = {
        "LOCAL_ONLY keeps P_1 constant": bool(np.all(local1 == local1[0])),
        "GLOBAL_ONLY equal increments until clamping":
            bool(np.allclose(g1[unclamped], g4[unclamped], atol=1e-12)) and g1[unclamped].max() > 0,
        f"BOTH dP_4 {d4:.3f} > dP_1 {d1:.3f}": d4 > d1,
    }
    report(capsys, 6, checks)


def _safety_violations(res, scenario):
    """Worst Eq-style headway slack over plant steps (fast lane, and C to U before the merge)."""
    safety = scenario.safety
    worst = math.inf
    ids = res.fast_lane_ids
    for lead, rear in zip(ids, ids[1:]):
        a, b = res.states[lead], res.states[rear]
        gap = a[:, 0] - b[:, 0] - (safety.tau_react * b[:, 3] + safety.delta_len)
        worst = min(worst, float(gap.min()))
    c, u = res.states[res.changer_id], res.states[res.obstacle_id]
    end = len(res.times) if res.t_lateral is None else \
        int(round((res.t_lateral - res.t0) / (res.times[1] - res.times[0]))) + 1
    gap = u[:end, 0] - c[:end, 0] - (safety.tau_react * c[:end, 3] + safety.delta_len)
    return worst, min(float(gap.min()), math.inf)


def test_criterion_7_safety_invariants(runs, default, capsys):
    # make sure every run of criteria 3-6 is in the cache
    for q in LEVELS:
        runs.get(q, ControllerMode.BOTH)
        runs.get(q, ControllerMode.NONE)
    for m in (ControllerMode.LOCAL_ONLY, ControllerMode.GLOBAL_ONLY):
        runs.get(None, m)
    lane_worst, obst_worst, trig_worst = math.inf, math.inf, math.inf
    for res in runs.all():
        a, b = _safety_violations(res, default.scenario)
        lane_worst, obst_worst = min(lane_worst, a), min(obst_worst, b)
        if res.feasible:
            trig_worst = min(trig_worst, min(res.trigger_gaps.values()))
    report(capsys, 7, {f"fast-lane headway slack {lane_worst:.2e} >= -1e-3": lane_worst >= -1e-3,
                       f"obstacle headway slack {obst_worst:.2e} >= -1e-3": obst_worst >= -1e-3,
                       f"trigger gaps slack {trig_worst:.2e} >= 0": trig_worst >= 0.0,
                       "runs checked": len(runs.all()) >= 10})


def test_criterion_8_determinism_and_io(runs, default, tmp_path, capsys):
    first = runs.get()
    again = run_maneuver(default.scenario, default.config)
    same_metrics = json.dumps(metrics(first), sort_keys=True) == \
        json.dumps(metrics(again), sort_keys=True)
    same_states = all(np.array_equal(first.states[k], again.states[k], equal_nan=True)
                      for k in first.states)
    loaded = load_scenario(save_scenario(default, tmp_path / "s.json"))
    round_trip = scenario_to_dict(loaded) == scenario_to_dict(default) and \
        loaded.scenario == default.scenario
    paths = write_traces(first, tmp_path / "out")
    with open(paths["positions.csv"], newline="") as fh:
        rows = list(csv.reader(fh))
    reparse = tuple(rows[0]) == POSITION_COLUMNS and \
        len(rows) - 1 == len(first.vehicle_ids) * len(first.times)
    doc = json.loads(paths["metrics.json"].read_text())
    reparse = reparse and doc["maneuver_time"] == first.maneuver_time
    broken = tmp_path / "broken.json"
    broken.write_text('{"schema_version": 1}')
    codes = (cli.main(["run", "--scenario", "paper_default", "--out", str(tmp_path / "a")]),
             cli.main(["run", "--scenario", "paper_default", "--mode", "none",
                       "--proclivity", "4=0", "--out", str(tmp_path / "b")]),
             cli.main(["run", "--scenario", str(broken), "--out", str(tmp_path / "c")]))
    report(capsys, 8, {"bitwise-identical metrics": same_metrics and same_states,
                       "scenario round trip": round_trip,
                       "csv re-parse": reparse,
                       f"exit codes {codes} == (0, 1, 2)": codes == (0, 1, 2)})
