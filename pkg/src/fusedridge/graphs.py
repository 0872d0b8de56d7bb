"""Graphical-model post-processing of precision estimates.

Partial correlations, local-FDR edge selection, network comparison and
summaries, node centrality, and the decomposition of a covariance entry into
contributions of the simple paths joining two vertices.
"""

import csv
import io
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .core import as_symmetric, logdet_pd
from .errors import DomainError, EnumerationError, InputError

MAX_PATHS = 10**6


def partial_correlation(Omega):
    """``P_jk = -w_jk / sqrt(w_jj w_kk)`` with unit diagonal."""
    Omega = as_symmetric(Omega, "Omega")
    d = np.diag(Omega)
    if np.any(d <= 0):
        raise DomainError("precision matrix has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(d)
    P = -Omega * np.outer(s, s)
    np.fill_diagonal(P, 1.0)
    return np.clip(P, -1.0, 1.0)


def offdiag_values(P):
    """Upper-triangle entries in row-major ``(j, k), j < k`` order."""
    P = np.asarray(P)
    return P[np.triu_indices(len(P), 1)]


# local false discovery rates

@dataclass(frozen=True)
class LfdrFit:
    eta0: float
    kappa: float
    lfdr: np.ndarray
    values: np.ndarray
    bandwidth: float = float("nan")
    flat: bool = False


def null_density(r, kappa):
    """Null density of a partial correlation, ``(1 - r^2)^((kappa-3)/2) / B(1/2, (kappa-1)/2)``."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    a = (kappa - 3) / 2
    out[inside] = np.exp(a * np.log1p(-r[inside] ** 2) - special.betaln(0.5, (kappa - 1) / 2))
    return out


def _null_central_mass(c, kappa):
    # r^2 ~ Beta(1/2, (kappa-1)/2) under the null
    return special.betainc(0.5, (kappa - 1) / 2, c * c)


def _fit_kappa(a, c):
    """ML estimate of kappa from |r| values truncated to [0, c]."""
    s = np.sum(np.log1p(-a ** 2))
    m = len(a)

    def nll(t):
        kappa = 3.0 + np.exp(t)
        ll = (kappa - 3) / 2 * s - m * special.betaln(0.5, (kappa - 1) / 2) \
            - m * np.log(_null_central_mass(c, kappa))
        return -ll

    res = optimize.minimize_scalar(nll, bounds=(-12.0, 16.0), method="bounded",
                                   options={"xatol": 1e-8})
    return 3.0 + float(np.exp(res.x))


def _reflected_kde(values, points):
    kde = stats.gaussian_kde(values)
    dens = kde(points) + kde(2.0 - points) + kde(-2.0 - points)
    return dens, float(np.sqrt(kde.covariance[0, 0]))


def lfdr_fit(values, central_fraction=0.8):
    """Two-component mixture fit of partial correlations.

    The null is ``f0(r) ~ (1 - r^2)^((kappa-3)/2)``. ``kappa`` is the maximum
    likelihood estimate from the values whose magnitude is at most the
    ``central_fraction`` quantile of ``|r|``; ``eta0`` is the observed central
    fraction divided by the null mass of that region (capped at 1); the mixture
    density is a kernel estimate reflected at +-1. The local FDR is
    ``min(1, eta0 f0 / f)``.
    """
    r = np.asarray(values, dtype=float).ravel()
    if r.size < 10:
        raise InputError("need at least 10 values to fit the local FDR mixture")
    if not np.all(np.isfinite(r)) or np.any(np.abs(r) > 1):
        raise InputError("partial correlations must be finite and within [-1, 1]")
    if np.all(r == 0):
        return LfdrFit(1.0, np.inf, np.ones_like(r), r, 0.0, True)
    if np.all(r == r[0]):
        raise DomainError("all values are identical; the mixture cannot be fitted")
    r_fit = np.clip(r, -1 + 1e-12, 1 - 1e-12)
    a = np.abs(r_fit)
    c = float(np.quantile(a, central_fraction))
    central = a[a <= c]
    if c <= 0 or np.all(central == 0):
        raise DomainError("central region holds no spread; the mixture cannot be fitted")
    kappa = _fit_kappa(central, c)
    eta0 = min(1.0, (central.size / a.size) / _null_central_mass(c, kappa))
    f, bw = _reflected_kde(r_fit, r_fit)
    lfdr = np.minimum(1.0, eta0 * null_density(r_fit, kappa) / np.maximum(f, 1e-300))
    return LfdrFit(float(eta0), float(kappa), lfdr, r, bw, bool(kappa < 5))


# graphs

@dataclass(frozen=True)
class SparseGraph:
    """Undirected signed graph; edges are ``(j, k, sign, weight)`` with ``j < k``."""

    p: int
    edges: tuple = ()

    def __post_init__(self):
        seen = set()
        clean = []
        for j, k, sign, weight in self.edges:
            j, k = int(j), int(k)
            if j == k or not (0 <= j < self.p and 0 <= k < self.p):
                raise InputError(f"invalid edge ({j}, {k}) for p={self.p}")
            if j > k:
                j, k = k, j
            if (j, k) in seen:
                raise InputError(f"duplicate edge ({j}, {k})")
            seen.add((j, k))
            clean.append((j, k, int(np.sign(sign)) or 1, float(weight)))
        object.__setattr__(self, "edges", tuple(sorted(clean)))

    @property
    def pairs(self):
        return {(j, k) for j, k, _, _ in self.edges}

    def adjacency(self, signed=False):
        A = np.zeros((self.p, self.p), dtype=int)
        for j, k, s, _ in self.edges:
            A[j, k] = A[k, j] = s if signed else 1
        return A

    def neighbors(self):
        nb = [[] for _ in range(self.p)]
        for j, k, _, _ in self.edges:
            nb[j].append(k)
            nb[k].append(j)
        return [sorted(x) for x in nb]


def sparsify(P, fit, threshold=0.99):
    """Keep edge ``(j, k)`` iff ``1 - lfdr_jk >= threshold``."""
    if not 0 < threshold < 1:
        raise InputError("threshold must lie strictly between 0 and 1")
    P = as_symmetric(P, "partial correlation matrix")
    p = len(P)
    iu = np.triu_indices(p, 1)
    if len(fit.lfdr) != len(iu[0]):
        raise InputError("local FDR fit does not match the number of node pairs")
    keep = (1.0 - np.asarray(fit.lfdr)) >= threshold
    edges = [(j, k, np.sign(P[j, k]) or 1, P[j, k])
             for j, k, sel in zip(iu[0], iu[1], keep) if sel]
    return SparseGraph(p, tuple(edges))


def graph_from_matrix(P, tol=0.0):
    """Graph with an edge wherever ``|P_jk| > tol`` off the diagonal."""
    P = np.asarray(P, dtype=float)
    p = len(P)
    iu = np.triu_indices(p, 1)
    return SparseGraph(p, tuple((j, k, np.sign(P[j, k]) or 1, P[j, k])
                                for j, k in zip(*iu) if abs(P[j, k]) > tol))


def compare(g1, g2, mode="difference"):
    """Edges of ``g1`` not in ``g2`` (difference) or in both (intersection); weights from ``g1``."""
    if g1.p != g2.p:
        raise InputError("graphs differ in vertex count")
    other = g2.pairs
    if mode == "difference":
        edges = [e for e in g1.edges if (e[0], e[1]) not in other]
    elif mode == "intersection":
        edges = [e for e in g1.edges if (e[0], e[1]) in other]
    else:
        raise InputError("mode must be 'difference' or 'intersection'")
    return SparseGraph(g1.p, tuple(edges))


@dataclass(frozen=True)
class WeightedMetaGraph:
    """Integer edge weights summed over ``m`` graphs."""

    p: int
    weights: dict
    m: int
    signed: bool

    def filter(self, min_abs_weight):
        """Edges with ``|w| > min_abs_weight``."""
        return WeightedMetaGraph(self.p, {k: w for k, w in self.weights.items()
                                          if abs(w) > min_abs_weight}, self.m, self.signed)

    def matrix(self):
        W = np.zeros((self.p, self.p), dtype=int)
        for (j, k), w in self.weights.items():
            W[j, k] = W[k, j] = w
        return W


def total_network(graphs, signed=False):
    """Sum of (signed) adjacency indicators over the given graphs."""
    graphs = list(graphs)
    if not graphs:
        raise InputError("need at least one graph")
    p = graphs[0].p
    if any(g.p != p for g in graphs):
        raise InputError("graphs differ in vertex count")
    weights = {}
    for g in graphs:
        for j, k, s, _ in g.edges:
            weights[(j, k)] = weights.get((j, k), 0) + (s if signed else 1)
    weights = {k: w for k, w in weights.items() if w != 0 or not signed}
    return WeightedMetaGraph(p, dict(sorted(weights.items())), len(graphs), signed)


def meta_difference(a, b):
    """Edge-wise weight difference ``a - b`` of two total networks."""
    if a.p != b.p:
        raise InputError("networks differ in vertex count")
    keys = set(a.weights) | set(b.weights)
    w = {k: a.weights.get(k, 0) - b.weights.get(k, 0) for k in keys}
    return WeightedMetaGraph(a.p, dict(sorted((k, v) for k, v in w.items() if v != 0)),
                             max(a.m, b.m), True)


@dataclass(frozen=True)
class Centrality:
    degree: np.ndarray
    positive_degree: np.ndarray
    negative_degree: np.ndarray
    betweenness: np.ndarray


def centrality(g):
    """Degrees (total, positive, negative) and unweighted betweenness.

    Betweenness counts, for every unordered pair of other vertices, the
    fraction of shortest paths passing through the vertex (Brandes' algorithm).
    """
    p = g.p
    deg = np.zeros(p, dtype=int)
    pos = np.zeros(p, dtype=int)
    neg = np.zeros(p, dtype=int)
    for j, k, s, _ in g.edges:
        deg[[j, k]] += 1
        if s > 0:
            pos[[j, k]] += 1
        else:
            neg[[j, k]] += 1
    nb = g.neighbors()
    bc = np.zeros(p)
    for s in range(p):
        stack = []
        preds = [[] for _ in range(p)]
        sigma = np.zeros(p)
        sigma[s] = 1
        dist = np.full(p, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in nb[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(p)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return Centrality(deg, pos, neg, bc / 2.0)


def sparsified_precision(Omega, graph):
    """Zero the off-diagonal entries outside the graph's support.

    If the result is not positive definite the diagonal is shifted by
    ``|min eigenvalue| + 1e-8`` (with a warning). Returns ``(Omega0, shift)``.
    """
    Omega = as_symmetric(Omega, "Omega")
    if len(Omega) != graph.p:
        raise InputError("graph and precision differ in dimension")
    mask = graph.adjacency().astype(bool) | np.eye(graph.p, dtype=bool)
    O0 = np.where(mask, Omega, 0.0)
    w = np.linalg.eigvalsh(O0)[0]
    shift = 0.0
    if w <= 0:
        shift = abs(w) + 1e-8
        warnings.warn(f"sparsified precision is not positive definite; diagonal shifted by {shift:.3e}",
                      RuntimeWarning, stacklevel=2)
        O0 = O0 + shift * np.eye(len(O0))
    return O0, shift


@dataclass(frozen=True)
class PathContribution:
    path: tuple
    length: int
    contribution: float
    label: str = None


@dataclass
class PathDecomposition:
    A: int
    B: int
    paths: list
    total: float
    covariance: float
    complete: bool
    residual: float = field(init=False)

    def __post_init__(self):
        self.residual = self.covariance - self.total


def simple_paths(neighbors, A, B, max_length, max_paths=MAX_PATHS):
    """All simple paths from A to B with at most ``max_length`` edges (DFS order)."""
    out = []
    path = [A]
    on_path = {A}

    def dfs(v):
        if len(path) - 1 >= max_length:
            return
        for w in neighbors[v]:
            if w in on_path:
                continue
            path.append(w)
            if w == B:
                out.append(tuple(path))
                if len(out) > max_paths:
                    raise EnumerationError(
                        f"more than {max_paths} paths; lower max_path_length")
            else:
                on_path.add(w)
                dfs(w)
                on_path.discard(w)
            path.pop()

    dfs(A)
    return out


def _label(path, common, differential):
    if common is None and differential is None:
        return None
    pairs = [tuple(sorted(e)) for e in zip(path[:-1], path[1:])]
    if common is not None and all(e in common.pairs for e in pairs):
        return "common"
    if differential is not None and any(e in differential.pairs for e in pairs):
        return "differential"
    if common is not None and not any(e in common.pairs for e in pairs):
        return "differential"
    return "mixed"


def covariance_path_decomposition(Omega0, A, B, max_path_length=None, common=None,
                                  differential=None, max_paths=MAX_PATHS):
    """Split ``inv(Omega0)[A, B]`` into contributions of simple A-B paths.

    A path ``A = v0, ..., vt = B`` through the support of ``Omega0`` contributes

        (-1)^t * w_{v0 v1} ... w_{v(t-1) vt} * det(Omega0 without path vertices) / det(Omega0)

    (determinant of an empty matrix is 1). With ``max_path_length >= p - 1``
    every path is enumerated and the contributions sum to the covariance.
    Paths are labeled ``common`` when all edges lie in ``common``,
    ``differential`` when one uses ``differential`` (or none is common) and
    ``mixed`` otherwise.
    """
    O = as_symmetric(Omega0, "Omega0")
    p = len(O)
    A, B = int(A), int(B)
    if not (0 <= A < p and 0 <= B < p):
        raise InputError("vertex index out of range")
    if A == B:
        raise InputError("A and B must differ")
    if max_path_length is None:
        max_path_length = p - 1
    if max_path_length < 1:
        raise InputError("max_path_length must be at least 1")
    ld = logdet_pd(O)
    support = graph_from_matrix(O)
    found = simple_paths(support.neighbors(), A, B, max_path_length, max_paths)
    contributions = []
    for path in found:
        t = len(path) - 1
        prod = np.prod([O[u, v] for u, v in zip(path[:-1], path[1:])])
        rest = np.setdiff1d(np.arange(p), path)
        ratio = np.exp(logdet_pd(O[np.ix_(rest, rest)]) - ld) if rest.size else np.exp(-ld)
        value = (-1) ** t * prod * ratio
        contributions.append(PathContribution(path, t, float(value), _label(path, common, differential)))
    cov = float(np.linalg.solve(O, np.eye(p)[:, B])[A])
    total = float(sum(c.contribution for c in contributions))
    return PathDecomposition(A, B, contributions, total, cov, max_path_length >= p - 1)


# export

def _names(p, names):
    names = list(names) if names is not None else [str(i) for i in range(p)]
    if len(names) != p:
        raise InputError("names length does not match vertex count")
    return names


def edges_to_csv(graph, names=None):
    """CSV text with columns ``j,k,sign,weight``."""
    names = _names(graph.p, names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(graph, WeightedMetaGraph):
        w.writerow(["j", "k", "sign", "weight"])
        for (j, k), wt in graph.weights.items():
            w.writerow([names[j], names[k], "+" if wt >= 0 else "-", wt])
    else:
        w.writerow(["j", "k", "sign", "weight"])
        for j, k, s, wt in graph.edges:
            w.writerow([names[j], names[k], "+" if s > 0 else "-", repr(float(wt))])
    return buf.getvalue()


def to_dot(graph, names=None, title="G"):
    """Graphviz DOT text; negative edges are dashed."""
    names = _names(graph.p, names)
    lines = [f"graph {title} {{"]
    for nm in names:
        lines.append(f'  "{nm}";')
    if isinstance(graph, WeightedMetaGraph):
        items = [(j, k, wt, wt) for (j, k), wt in graph.weights.items()]
    else:
        items = [(j, k, s, wt) for j, k, s, wt in graph.edges]
    for j, k, s, wt in items:
        style = "dashed" if s < 0 else "solid"
        lines.append(f'  "{names[j]}" -- "{names[k]}" [weight={abs(wt):.6g}, style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
