"""Scenario files (JSON) and trace/metric output (CSV, JSON)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .compliance import ComplianceConfig, MeasurementMode
from .engine import ControllerMode, ManeuverResult, SimConfig, metrics
from .errors import ConfigError, DomainError, ScenarioError
from .model import (RoadGeometry, SafetyParams, Scenario, Vehicle, VehicleClass, VehicleParams,
                    VehicleState)
from .ocp import CostWeights

SCHEMA_VERSION = 1
BUNDLED = ("paper_default",)
POSITION_COLUMNS = ("t", "id", "x", "y", "theta", "v", "u")
COMPLIANCE_COLUMNS = ("t", "id", "M", "M_bar", "P", "c", "C_global")
REFERENCE_COLUMNS = ("t", "id", "x_ref", "v_ref", "u_ref")
SWEEP_COLUMNS = ("initial_compliance", "mode", "feasible", "maneuver_time", "energy")

_SIM_KEYS = ("dt_sample", "dt_plant", "T_max", "controller_mode", "scan_step", "lateral_T_max",
             "hdv_disruption")


@dataclass(eq=False)
class LoadedScenario:
    scenario: Scenario
    config: SimConfig
    sweep_target: str = "4"
    sweep_levels: tuple[float, ...] = (0.0, 0.2, 0.5, 0.8)
    defaults: dict[str, Any] = field(default_factory=dict)  # every value not given in the file


def _schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("data/scenario.schema.json")
                      .read_text())


def bundled_path(name: str) -> Path:
    return Path(str(resources.files(__package__).joinpath(f"data/{name}.json")))


def resolve_path(path_or_name: str | Path) -> Path:
    """A file path, or the name of a bundled scenario such as ``paper_default``."""
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUNDLED:
        return bundled_path(str(path_or_name))
    return p


def _json_path(parts) -> str:
    out = ""
    for part in parts:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _fill(cls, given: dict, prefix: str, defaults: dict, overrides: dict | None = None):
    kwargs = {}
    for f in fields(cls):
        if f.name in given:
            kwargs[f.name] = given[f.name]
        elif overrides and f.name in overrides:
            kwargs[f.name] = overrides[f.name]
            defaults[f"{prefix}.{f.name}"] = overrides[f.name]
        elif f.name in ("update_global", "update_local"):
            continue
        else:
            kwargs[f.name] = f.default
            defaults[f"{prefix}.{f.name}"] = _plain(f.default)
    return cls(**kwargs)


def _plain(value):
    if isinstance(value, (ControllerMode, MeasurementMode, VehicleClass)):
        return value.value
    return value


def parse_scenario(data: dict) -> LoadedScenario:
    """Validate a decoded scenario document and build the domain objects."""
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        raise ScenarioError(exc.message, _json_path(exc.absolute_path)) from None
    defaults: dict[str, Any] = {}
    try:
        road = _fill(RoadGeometry, data.get("road", {}), "road", defaults)
        safety = _fill(SafetyParams, data.get("safety", {}), "safety", defaults)
        comp = _fill(ComplianceConfig, data.get("compliance", {}), "compliance", defaults)
        weights = _fill(CostWeights, data.get("weights", {}), "weights", defaults)
        sim_in = data.get("sim", {})
        sim_kwargs = {}
        for f in fields(SimConfig):
            if f.name in ("compliance", "weights"):
                continue
            if f.name in sim_in:
                sim_kwargs[f.name] = sim_in[f.name]
            else:
                defaults[f"sim.{f.name}"] = _plain(f.default)
        config = SimConfig(compliance=comp, weights=weights, **sim_kwargs)
    except (ConfigError, DomainError, ValueError) as exc:
        raise ScenarioError(str(exc), "config") from None

    fast, changer, obstacle = [], [], []
    for k, item in enumerate(data["vehicles"]):
        path = f"vehicles[{k}]"
        st = item["state"]
        state = VehicleState(x=st["x"], y=st.get("y", 0.0), theta=st.get("theta", 0.0), v=st["v"])
        cls = VehicleClass(item["class"])
        # free-driving desired speed: the cruise speed for humans and the obstacle
        auto_vd = {} if cls is VehicleClass.CAV else {"v_d": float(st["v"])}
        try:
            params = _fill(VehicleParams, item.get("params", {}), f"{path}.params", defaults,
                           auto_vd)
        except DomainError as exc:
            raise ScenarioError(str(exc), f"{path}.params") from None
        if "q" not in item:
            defaults[f"{path}.q"] = 1.0
        veh = Vehicle(item["id"], cls, params, state, item.get("q", 1.0))
        {"fast_lane": fast, "changer": changer, "obstacle": obstacle}[item["role"]].append(
            (path, veh))
    if len(changer) != 1:
        raise ScenarioError(f"need exactly one changer, found {len(changer)}", "vehicles")
    if len(obstacle) != 1:
        raise ScenarioError(f"need exactly one obstacle, found {len(obstacle)}", "vehicles")
    for path, veh in fast:
        if veh.cls is VehicleClass.OBSTACLE:
            raise ScenarioError("obstacle class in the fast lane", f"{path}.class")
    for name in ("name", "t0"):
        if name not in data:
            defaults[name] = {"name": "scenario", "t0": 0.0}[name]
    try:
        scenario = Scenario(tuple(v for _, v in fast), changer[0][1], obstacle[0][1], road,
                            safety, t0=data.get("t0", 0.0), name=data.get("name", "scenario"))
    except ScenarioError as exc:
        index = {v.id: p for p, v in (*fast, *changer, *obstacle)}
        raise ScenarioError(str(exc).split(": ", 1)[-1], _readdress(exc.path, index)) from None

    target = sim_in.get("sweep_target")
    if target is None:
        target = "4"
        defaults["sim.sweep_target"] = target
    levels = sim_in.get("sweep_levels")
    if levels is None:
        levels = [0.0, 0.2, 0.5, 0.8]
        defaults["sim.sweep_levels"] = levels
    return LoadedScenario(scenario, config, target, tuple(float(q) for q in levels), defaults)


def _readdress(path: str, index: dict[str, str]) -> str:
    """Turn ``vehicles[<id>].v`` from the validator into the file position."""
    if path.startswith("vehicles[") and "]" in path:
        vid, rest = path[len("vehicles["):].split("]", 1)
        if vid in index:
            field_name = rest.lstrip(".")
            if field_name in ("x", "y", "theta", "v"):
                return f"{index[vid]}.state.{field_name}"
            return f"{index[vid]}{rest}"
    return path


def load_scenario(path: str | Path) -> LoadedScenario:
    """Read and fully validate a scenario file (or a bundled scenario by name)."""
    p = resolve_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(p)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from None
    return parse_scenario(data)


def scenario_to_dict(loaded: LoadedScenario) -> dict:
    """Explicit document for ``loaded``; parsing it gives back equal objects."""
    sc, cfg = loaded.scenario, loaded.config

    def vehicle(role, v: Vehicle):
        return {"id": v.id, "role": role, "class": v.cls.value, "q": v.q,
                "state": asdict(v.state), "params": asdict(v.params)}

    comp = {k: _plain(val) for k, val in asdict(cfg.compliance).items()
            if k not in ("update_global", "update_local")}
    sim = {k: _plain(getattr(cfg, k)) for k in _SIM_KEYS}
    sim["sweep_target"] = loaded.sweep_target
    sim["sweep_levels"] = list(loaded.sweep_levels)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "t0": sc.t0,
        "road": asdict(sc.road),
        "safety": asdict(sc.safety),
        "compliance": comp,
        "weights": asdict(cfg.weights),
        "sim": sim,
        "vehicles": [*(vehicle("fast_lane", v) for v in sc.fast_lane),
                     vehicle("changer", sc.changer), vehicle("obstacle", sc.obstacle)],
    }


def save_scenario(loaded: LoadedScenario, path: str | Path) -> Path:
    p = Path(path)
    p.write_text(json.dumps(scenario_to_dict(loaded), indent=2) + "\n")
    return p


def _num(x) -> str:
    """Full-precision cell; empty for missing or non-finite values."""
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _metric(x):
    if x is None:
        return None
    return "Inf" if isinstance(x, float) and math.isinf(x) else x


def metrics_document(result: ManeuverResult, extra: dict | None = None) -> dict:
    m = metrics(result)
    doc = {k: _metric(v) for k, v in m.items()}
    doc["t_final"] = result.t_final
    doc["gap_margins"] = result.gap_margins
    doc["trigger_gaps"] = result.trigger_gaps
    doc["pair_history"] = [{"t": t, "lead": a, "rear": b, "cost": _metric(c)}
                           for t, a, b, c in result.pair_history]
    if extra:
        doc.update(extra)
    return doc


def write_traces(result: ManeuverResult, out_dir: str | Path,
                 extra_metrics: dict | None = None) -> dict[str, Path]:
    """Write ``positions.csv``, ``compliance.csv``, ``references.csv`` and ``metrics.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("positions.csv", "compliance.csv", "references.csv", "metrics.json")}

    with paths["positions.csv"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSITION_COLUMNS)
        for i, t in enumerate(result.times):
            for vid in result.vehicle_ids:
                w.writerow([_num(t), vid, *(_num(val) for val in result.states[vid][i])])

    with paths["compliance.csv"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPLIANCE_COLUMNS)
        for i, t in enumerate(result.sample_times):
            for vid in result.fast_lane_ids:
                w.writerow([_num(t), vid, *(_num(val) for val in result.compliance[vid][i]),
                            _num(result.C_global[i])])

    with paths["references.csv"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REFERENCE_COLUMNS)
        for i, t in enumerate(result.times):
            for vid in result.vehicle_ids:
                row = result.references[vid][i]
                if all(math.isnan(val) for val in row):
                    continue
                w.writerow([_num(t), vid, *(_num(val) for val in row)])

    doc = metrics_document(result, extra_metrics)
    doc["files"] = {k: str(v) for k, v in paths.items() if k != "metrics.json"}
    paths["metrics.json"].write_text(json.dumps(doc, indent=2, default=_plain) + "\n")
    return paths


def write_sweep(rows: list[dict], path: str | Path) -> Path:
    """Table of ``(initial_compliance, mode, feasible, maneuver_time, energy)`` rows."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_num(r["q"]), r["mode"], str(bool(r["feasible"])).lower(),
                        _num(r["maneuver_time"]), _num(r["energy"])])
    return p


def write_ablation(results: dict, path: str | Path) -> Path:
    """Long-format compliance traces ``(mode, t, id, P, c, M_bar, C_global)``."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("mode", "t", "id", "P", "c", "M_bar", "C_global"))
        for mode, res in results.items():
            for i, t in enumerate(res.sample_times):
                for vid in res.fast_lane_ids:
                    M, M_bar, P, c = res.compliance[vid][i]
                    w.writerow([ControllerMode(mode).value, _num(t), vid, _num(P), _num(c),
                                _num(M_bar), _num(res.C_global[i])])
    return p
