"""Write the small bundled dataset ``data/toy.csv`` (three classes, six variables)."""

import argparse
import os

import numpy as np

from fusedridge.datafiles import write_dataset
from fusedridge.sim import banded_precision, sample_mvn


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "toy.csv"))
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    p = 6
    names = [f"v{j + 1}" for j in range(p)]
    sizes = {"A": 15, "B": 12, "C": 18}
    bands = {"A": 1, "B": 1, "C": 2}
    X = {}
    for label, n in sizes.items():
        Sigma = np.linalg.inv(banded_precision(p, bands[label]))
        X[label] = np.round(sample_mvn(n, Sigma, rng), 6)
    write_dataset(args.out, names, list(sizes), X)


if __name__ == "__main__":
    main()
