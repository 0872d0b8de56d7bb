"""Regenerate the command-line golden files under ``tests/golden``."""

import os

from fusedridge.cli import main

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
DATA = os.path.join(ROOT, "data", "toy.csv")

# (argv, output paths relative to the golden directory)
RUNS = [
    ["fit", "--data", DATA, "--penalty", "lambda=1,lambda_f=0.5", "--out", "fit"],
    ["sparsify", "--fit", "fit", "--threshold", "0.8", "--out", "sparsify"],
    ["paths", "--fit", "fit", "--class", "A", "--a", "v1", "--b", "v4", "--max-length", "3",
     "--out", "paths.csv", "--report", "paths.json"],
    ["--seed", "3", "select", "--data", DATA, "--method", "kcv", "--K", "3", "--budget", "15",
     "--out", "select.json"],
]


def run_all(workdir):
    here = os.getcwd()
    os.makedirs(workdir, exist_ok=True)
    os.chdir(workdir)
    try:
        for argv in RUNS:
            code = main(argv)
            if code != 0:
                raise SystemExit(f"command failed with exit code {code}: {argv}")
    finally:
        os.chdir(here)


if __name__ == "__main__":
    run_all(os.path.join(ROOT, "tests", "golden"))
