"""Relative gap between the FKL score and exact LOOCV.

Sweeps both bias signs on standard normal data and on banded-precision data.
The acceptance bar is a 5% relative gap; see the ledger for why it is missed.
"""

import argparse

import numpy as np

from fusedridge.estimator import ClassData
from fusedridge.penalty import uniform_penalty
from fusedridge.selection import fkl_score, loocv_score
from fusedridge.sim import banded_precision, sample_mvn
from fusedridge.targets import scalar_target


def gaps(kind, n, p, lam, lam_f, seeds):
    out = {+1: [], -1: []}
    Sigma = np.eye(p) if kind == "identity" else np.linalg.inv(banded_precision(p, p // 2))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        data = [ClassData.from_samples(sample_mvn(n, Sigma, rng)) for _ in range(2)]
        T = [scalar_target((data[0].S + data[1].S) / 2)] * 2
        L = uniform_penalty(2, lam, lam_f)
        lo = loocv_score(L, data, T).value
        for s in out:
            out[s].append(abs(fkl_score(L, data, T, bias_sign=s).value - lo) / abs(lo))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--p", type=int, default=8)
    ap.add_argument("--instances", type=int, default=10)
    args = ap.parse_args()
    for kind in ("identity", "banded"):
        for lam, lam_f in ((1.0, 1.0), (10.0, 1.0), (1.0, 100.0)):
            g = gaps(kind, args.n, args.p, lam, lam_f, range(args.instances))
            print(f"{kind:<8} lambda={lam:<5} lambda_f={lam_f:<6} "
                  + "  ".join(f"sign {s:+d}: max {max(v):.4f} median {np.median(v):.4f}" for s, v in g.items()))


if __name__ == "__main__":
    main()
