"""Manoeuvre time and triplet energy over HDV 4's initial compliance, with and without control."""

import argparse

from ccc_lanechange import load_scenario, sweep_initial_compliance


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", default="0,0.2,0.5,0.8")
    args = parser.parse_args()

    loaded = load_scenario("paper_default")
    levels = [float(x) for x in args.levels.split(",")]
    rows = sweep_initial_compliance(loaded.scenario, levels, loaded.config,
                                    target=loaded.sweep_target)
    print(" q4   mode      feasible  time    energy")
    for r in rows:
        print(f"{r['q']:4.1f}  {r['mode']:9s} {str(r['feasible']):8s}  "
              f"{r['maneuver_time']:5.2f}  {r['energy']:8.3f}")


if __name__ == "__main__":
    main()
