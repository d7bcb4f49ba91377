"""Default scenario: which gap C takes, when it steers, and how HDV 4 responds."""

import argparse
from pathlib import Path

import numpy as np

from ccc_lanechange import load_scenario, metrics, run_maneuver, write_traces


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=None, help="also write CSV traces here")
    args = parser.parse_args()

    loaded = load_scenario("paper_default")
    res = run_maneuver(loaded.scenario, loaded.config)
    m = metrics(res)
    print(f"feasible={res.feasible} pair={res.pair} t_lateral={res.t_lateral} "
          f"t_final={res.t_final}")
    print(f"manoeuvre time {m['maneuver_time']:.2f} s, triplet energy {m['triplet_energy']:.3f}")

    print("\n   t    v_4    M_bar_4  P_4    c_4    C")
    step = res.times[1] - res.times[0]
    for i, t in enumerate(res.sample_times):
        j = int(round((t - res.t0) / step))
        M, M_bar, P, c = res.compliance["4"][i]
        print(f"{t:5.2f}  {res.states['4'][j, 3]:5.2f}  {M_bar:7.3f}  {P:5.3f}  {c:5.3f}  "
              f"{res.C_global[i]:5.3f}")

    lat = res.states[res.changer_id]
    print(f"\nC lateral offset at end: {lat[-1, 1]:.3f} m, heading {np.degrees(lat[-1, 2]):.2f} deg")
    if args.out is not None:
        for name, path in write_traces(res, args.out).items():
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
