"""Run one or more simulation scenarios and print median losses.

Example: python3 scripts/run_scenarios.py 1a 1b --replicates 5 --method fkl
"""

import argparse

from fusedridge.sim import SCENARIOS, results_to_csv, run_scenario, scenario_config, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("scenarios", nargs="+", choices=sorted(SCENARIOS))
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--method", default="loocv", choices=("kcv", "loocv", "sloocv", "fkl"))
    ap.add_argument("--budget", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--csv", default=None, help="write all replicate rows here")
    args = ap.parse_args()
    rows = []
    for sc in args.scenarios:
        cfg = scenario_config(sc, replicates=args.replicates, method=args.method,
                              budget=args.budget, seed=args.seed)
        out = run_scenario(cfg)
        rows += out
        for loss in ("frobenius_loss", "quadratic_loss"):
            for s in summarize(out, loss=loss):
                print(f"{sc:>3} {s['estimator']:<17} {s['target']:<8} {loss:<15} "
                      f"median {s['median']:10.3f}  IQR [{s['q1']:.3f}, {s['q3']:.3f}]")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(results_to_csv(rows))


if __name__ == "__main__":
    main()
