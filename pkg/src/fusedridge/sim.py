"""Synthetic precision matrices, samplers and the simulation-scenario harness."""

import csv
import io
from dataclasses import dataclass, field, asdict, replace

import networkx as nx
import numpy as np
from scipy import stats

from .core import as_symmetric, frobenius_loss, quadratic_loss, ridge_update
from .errors import DomainError, InputError
from .estimator import ClassData, fit
from .penalty import complete_template, PenaltyTemplate
from .selection import optimize_penalties
from .targets import scalar_target


def banded_precision(p, k, strict=True):
    """``(k + 1) / (|j - k'| + 1)`` within ``k`` bands of the diagonal, zero outside.

    The matrix is positive definite for every ``k`` (Toeplitz with a positive
    symbol). ``strict`` rejects ``k >= p``; with ``strict=False`` such ``k``
    simply fills the whole matrix.
    """
    p, k = int(p), int(k)
    if p < 1 or k < 0:
        raise InputError("need p >= 1 and k >= 0")
    if strict and k >= p:
        raise InputError(f"number of bands k={k} must be below p={p}")
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return np.where(d <= k, (k + 1) / (d + 1.0), 0.0)


@dataclass(frozen=True)
class TopologyPrecision:
    precision: np.ndarray
    adjacency: np.ndarray
    inflation: float


def topology_precision(p, kind="small-world", edge_value=0.1, w=4, rewire=0.05, m=1, seed=0):
    """Unit-diagonal precision with ``edge_value`` on the edges of a random graph.

    ``small-world`` uses a Watts-Strogatz graph (ring lattice with ``w``
    neighbours, rewiring probability ``rewire``); ``scale-free`` uses
    Barabasi-Albert attachment with ``m`` edges per new node. If the matrix is
    not positive definite the diagonal is raised by ``|min eigenvalue| + 0.01``.
    """
    p = int(p)
    if p < 3:
        raise InputError("topology generators need p >= 3")
    if kind == "small-world":
        g = nx.watts_strogatz_graph(p, int(w), float(rewire), seed=int(seed))
    elif kind == "scale-free":
        g = nx.barabasi_albert_graph(p, int(m), seed=int(seed))
    else:
        raise InputError(f"unknown topology {kind!r}; choose 'small-world' or 'scale-free'")
    A = nx.to_numpy_array(g, nodelist=range(p), dtype=float)
    A = (A > 0).astype(int)
    Psi = np.eye(p) + edge_value * A
    lo = np.linalg.eigvalsh(Psi)[0]
    inflation = 0.0
    if lo <= 0:
        inflation = abs(lo) + 0.01
        Psi = Psi + inflation * np.eye(p)
    return TopologyPrecision(Psi, A, inflation)


def sample_inverse_wishart(Phi, nu, seed=0):
    """Covariance draw from ``W^{-1}((nu - p - 1) inv(Phi), nu)``; its mean is ``inv(Phi)``."""
    Phi = as_symmetric(Phi, "Phi")
    p = len(Phi)
    if not nu > p + 1:
        raise InputError(f"nu must exceed p + 1 = {p + 1}, got {nu}")
    try:
        np.linalg.cholesky(Phi)
    except np.linalg.LinAlgError as exc:
        raise DomainError("Phi is not positive definite") from exc
    scale = (nu - p - 1) * np.linalg.inv(Phi)
    draw = stats.invwishart(df=nu, scale=(scale + scale.T) / 2).rvs(random_state=np.random.default_rng(seed))
    draw = np.atleast_2d(draw)
    return (draw + draw.T) / 2


def sample_mvn(n, Sigma, seed=0):
    """``n`` rows drawn i.i.d. from ``N(0, Sigma)``."""
    Sigma = as_symmetric(Sigma, "Sigma")
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise DomainError("Sigma is not positive definite") from exc
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((int(n), len(Sigma))) @ L.T


# scenario harness

ESTIMATORS = ("fused", "fused-restricted", "separate", "pooled")
TARGET_KINDS = ("zero", "scalar", "spot-on")


@dataclass
class SimulationConfig:
    scenario: str
    p: int
    n: tuple
    bands: tuple = None
    topology: str = "banded"
    nu: float = None
    replicates: int = 20
    seed: int = 1
    targets: tuple = ("scalar",)
    estimators: tuple = ESTIMATORS
    method: str = "loocv"
    budget: int = 200
    K: int = 5
    w: int = 4
    rewire: float = 0.05
    m: int = 1
    edge_value: float = 0.1

    def __post_init__(self):
        self.n = tuple(int(x) for x in self.n)
        if not self.n:
            raise InputError("need at least one class")
        if any(x < 2 for x in self.n):
            raise InputError("every class needs at least two samples")
        self.targets = tuple(self.targets)
        self.estimators = tuple(self.estimators)
        for t in self.targets:
            if t not in TARGET_KINDS:
                raise InputError(f"unknown target kind {t!r}; choose from {TARGET_KINDS}")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise InputError(f"unknown estimator {e!r}; choose from {ESTIMATORS}")
        if self.topology == "banded":
            if self.bands is None:
                raise InputError("banded topology needs a band count per class")
            bands = self.bands if isinstance(self.bands, (list, tuple)) else [self.bands] * self.G
            if len(bands) != self.G:
                raise InputError("need one band count per class")
            self.bands = tuple(int(b) for b in bands)
        elif self.topology not in ("small-world", "scale-free"):
            raise InputError(f"unknown topology {self.topology!r}")
        if self.nu is not None and not self.nu > self.p + 1:
            raise InputError(f"nu must exceed p + 1 = {self.p + 1}")
        if self.replicates < 1:
            raise InputError("replicates must be positive")

    @property
    def G(self):
        return len(self.n)

    def to_dict(self):
        return asdict(self)


SCENARIOS = {
    "1a": dict(p=30, n=(25, 25), bands=(15, 15)),
    "1b": dict(p=30, n=(25, 25), bands=(15, 2)),
    "2": dict(p=50, n=(25, 25), bands=(25, 25), targets=("zero", "scalar", "spot-on"),
              estimators=("fused-restricted",)),
    "3a": dict(p=50, n=(25, 25, 25), topology="scale-free", nu=100, targets=("zero", "scalar"),
               estimators=("fused-restricted",)),
    "3b": dict(p=50, n=(25, 25, 25), topology="small-world", nu=100, targets=("zero", "scalar"),
               estimators=("fused-restricted",)),
    "4": dict(p=50, n=(5, 30), bands=(8, 8), estimators=("fused-restricted",)),
}


def scenario_config(scenario, **overrides):
    """Preset configuration for a named scenario, with field overrides."""
    if scenario not in SCENARIOS:
        raise InputError(f"unknown scenario {scenario!r}; valid ids: {', '.join(sorted(SCENARIOS))}")
    kw = dict(SCENARIOS[scenario])
    kw.update(overrides)
    return SimulationConfig(scenario=scenario, **kw)


def replicate_seed(seed, rep):
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def true_precisions(config, rep_seed):
    """Class precision matrices for one replicate."""
    G, p = config.G, config.p
    if config.topology == "banded":
        base = [banded_precision(p, k, strict=False) for k in config.bands]
    else:
        topo = topology_precision(p, config.topology, config.edge_value, config.w,
                                  config.rewire, config.m, seed=config.seed)
        base = [topo.precision] * G
    if config.nu is None:
        return base
    seeds = np.random.SeedSequence([rep_seed, 1]).spawn(G)
    return [np.linalg.inv(sample_inverse_wishart(Phi, config.nu, np.random.default_rng(s)))
            for Phi, s in zip(base, seeds)]


def _target_matrices(kind, data, truths):
    p = data[0].p
    if kind == "zero":
        return [np.zeros((p, p))] * len(data)
    if kind == "scalar":
        n = np.array([d.n for d in data], float)
        S_pool = sum(d.n * d.S for d in data) / n.sum()
        return [scalar_target(S_pool)] * len(data)
    return [np.asarray(T) for T in truths]


def _select_and_fit(estimator, data, targets, config):
    """Return (estimates, Lambda-entries dict) for one estimator."""
    G = len(data)
    opts = dict(method=config.method, budget=config.budget, K=config.K, seed=config.seed)
    if estimator in ("fused", "fused-restricted"):
        tmpl = complete_template(G, ridge="separate" if estimator == "fused" else "shared")
        res = optimize_penalties(tmpl, data, targets, **opts)
        est = fit(data, res.Lambda, targets)
        return est.omegas, res.Lambda
    if estimator == "separate":
        omegas, lam = [], []
        for d, T in zip(data, targets):
            res = optimize_penalties(PenaltyTemplate(("lambda",), [["lambda"]]), [d], [T], **opts)
            omegas.append(ridge_update(d.S, T, res.Lambda[0, 0] / d.n))
            lam.append(res.Lambda[0, 0])
        return omegas, np.diag(lam)
    if estimator == "pooled":
        Y = np.vstack([d.Y for d in data])
        pooled = ClassData(Y.T @ Y / len(Y), len(Y), Y)
        res = optimize_penalties(PenaltyTemplate(("lambda",), [["lambda"]]), [pooled],
                                 [targets[0]], **opts)
        Om = ridge_update(pooled.S, targets[0], res.Lambda[0, 0] / pooled.n)
        Lam = np.full((G, G), np.inf)
        np.fill_diagonal(Lam, res.Lambda[0, 0] / G)
        return [Om] * G, Lam
    raise InputError(f"unknown estimator {estimator!r}")


def run_replicate(config, rep):
    seed = replicate_seed(config.seed, rep)
    truths = true_precisions(config, seed)
    streams = np.random.SeedSequence([seed, 2]).spawn(config.G)
    data = [ClassData.from_samples(sample_mvn(n, np.linalg.inv(O), np.random.default_rng(s)))
            for n, O, s in zip(config.n, truths, streams)]
    rows = []
    for kind in config.targets:
        targets = _target_matrices(kind, data, truths)
        for estimator in config.estimators:
            omegas, Lam = _select_and_fit(estimator, data, targets, config)
            lam_cols = {f"lambda_{i + 1}{j + 1}": float(Lam[i, j])
                        for i in range(config.G) for j in range(i, config.G)}
            for g in range(config.G):
                rows.append(dict(scenario=config.scenario, replicate=rep, estimator=estimator,
                                 target=kind, **{"class": g + 1}, n=config.n[g],
                                 frobenius_loss=frobenius_loss(omegas[g], truths[g]),
                                 quadratic_loss=quadratic_loss(omegas[g], truths[g]),
                                 **lam_cols, seed=seed))
    return rows


def run_scenario(config, replicates=None):
    """Simulate, select penalties, estimate and score every estimator/target pair.

    Returns one row per (replicate, target, estimator, class). For the pooled
    estimator the single ridge penalty ``lam`` is reported as ``lam / G`` on
    each diagonal cell (so that ``tr(Lambda) = lam``) with infinite fusion.
    """
    reps = range(config.replicates) if replicates is None else replicates
    rows = []
    for rep in reps:
        rows.extend(run_replicate(config, rep))
    return rows


def results_to_csv(rows):
    if not rows:
        return ""
    header = list(rows[0].keys())
    for r in rows[1:]:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def summarize(rows, by_class=False, loss="frobenius_loss"):
    """Median and quartiles of a loss per (scenario, estimator, target), optionally per class."""
    groups = {}
    for r in rows:
        key = (r["scenario"], r["estimator"], r["target"]) + ((r["class"], r["n"]) if by_class else ())
        groups.setdefault(key, []).append(r[loss])
    out = []
    for key, vals in groups.items():
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        row = dict(scenario=key[0], estimator=key[1], target=key[2])
        if by_class:
            row.update({"class": key[3], "n": key[4]})
        row.update(loss=loss, q1=float(q1), median=float(med), q3=float(q3), count=len(vals))
        out.append(row)
    return out
