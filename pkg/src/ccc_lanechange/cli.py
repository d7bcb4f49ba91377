"""Command-line front end: ``run``, ``sweep``, ``ablate`` and ``validate``.

Exit codes: 0 success, 1 infeasible manoeuvre, 2 invalid input, 3 solver or
internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .engine import ControllerMode, ablation_run, run_maneuver, sweep_initial_compliance
from .errors import CccError, ConfigError, NoConvergenceError, ScenarioError
from .scenario_io import LoadedScenario, load_scenario, write_ablation, write_sweep, write_traces

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3


def _levels(text: str) -> list[float]:
    try:
        levels = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not levels or any(not 0.0 <= q <= 1.0 for q in levels):
        raise argparse.ArgumentTypeError("levels must be numbers in [0, 1]")
    return levels


def _proclivity(text: str) -> tuple[str, float]:
    vid, sep, value = text.partition("=")
    try:
        q = float(value)
    except ValueError:
        q = -1.0
    if not sep or not vid or not 0.0 <= q <= 1.0:
        raise argparse.ArgumentTypeError(f"expected ID=Q with Q in [0, 1], got {text!r}")
    return vid, q


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccc-lanechange",
                                     description="Compliance-controlled cooperative lane changes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file, or the bundled name 'paper_default'")
        p.add_argument("--proclivity", type=_proclivity, action="append", default=[],
                       metavar="ID=Q", help="override one vehicle's initial compliance")

    p = sub.add_parser("run", help="simulate one manoeuvre and write traces")
    scenario_args(p)
    p.add_argument("--mode", choices=[m.value for m in ControllerMode], default=None,
                   help="controller configuration (default: from the scenario)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    p = sub.add_parser("sweep", help="manoeuvre time and energy over initial compliance levels")
    scenario_args(p)
    p.add_argument("--levels", type=_levels, default=None,
                   help="comma-separated levels, e.g. 0,0.2,0.5,0.8")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    p = sub.add_parser("ablate", help="compliance traces for each controller configuration")
    scenario_args(p)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    p = sub.add_parser("validate", help="check a scenario file and print applied defaults")
    scenario_args(p)
    return parser


def _load(args) -> LoadedScenario:
    loaded = load_scenario(args.scenario)
    sc = loaded.scenario
    for vid, q in args.proclivity:
        try:
            sc = sc.with_proclivity(vid, q)
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"cannot set proclivity: {exc}", f"--proclivity {vid}") from None
    return replace(loaded, scenario=sc)


def _cmd_run(args, loaded: LoadedScenario) -> int:
    cfg = loaded.config
    if args.mode is not None:
        cfg = replace(cfg, controller_mode=ControllerMode(args.mode))
    result = run_maneuver(loaded.scenario, cfg)
    paths = write_traces(result, args.out, {"controller_mode": cfg.controller_mode.value,
                                             "defaults": loaded.defaults})
    doc = json.loads(paths["metrics.json"].read_text())
    print(json.dumps({k: doc[k] for k in ("feasible", "maneuver_time", "triplet_energy",
                                          "t_lateral", "pair", "reason")}))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def _cmd_sweep(args, loaded: LoadedScenario) -> int:
    levels = args.levels if args.levels is not None else list(loaded.sweep_levels)
    rows = sweep_initial_compliance(loaded.scenario, levels, loaded.config, loaded.sweep_target)
    path = write_sweep(rows, Path(args.out) / "sweep.csv")
    for r in rows:
        print(f"q={r['q']:<4} {r['mode']:<8} time={r['maneuver_time']:.3f} "
              f"energy={r['energy']:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_ablate(args, loaded: LoadedScenario) -> int:
    results = ablation_run(loaded.scenario, loaded.config)
    path = write_ablation(results, Path(args.out) / "ablation.csv")
    for mode, res in results.items():
        print(f"{mode.value:<6} feasible={res.feasible} t_lateral={res.t_lateral}")
    print(f"wrote {path}")
    return EXIT_OK if all(r.feasible for r in results.values()) else EXIT_INFEASIBLE


def _cmd_validate(args, loaded: LoadedScenario) -> int:
    sc = loaded.scenario
    print(f"scenario {sc.name!r}: {len(sc.fast_lane)} fast-lane vehicles, "
          f"changer {sc.changer.id}, obstacle {sc.obstacle.id}")
    print("applied defaults:")
    for key, value in loaded.defaults.items():
        print(f"  {key} = {value}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "ablate": _cmd_ablate,
            "validate": _cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        loaded = _load(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args, loaded)
    except (ConfigError, KeyError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NoConvergenceError, CccError, ArithmeticError, ValueError) as exc:
        print(f"internal failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
