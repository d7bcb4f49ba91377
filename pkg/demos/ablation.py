"""Compliance probability of HDVs 1 and 4 under each controller configuration."""

from ccc_lanechange import ablation_run, load_scenario


def main():
    loaded = load_scenario("paper_default")
    results = ablation_run(loaded.scenario, loaded.config)
    for mode, res in results.items():
        P1, P4 = res.compliance["1"][:, 2], res.compliance["4"][:, 2]
        print(f"{mode.value:7s} P_1 {P1[0]:.3f} -> {P1[-1]:.3f}   "
              f"P_4 {P4[0]:.3f} -> {P4[-1]:.3f}   C {res.C_global[-1]:.3f}")


if __name__ == "__main__":
    main()
