"""Target matrices: scalar multiples of the identity and DAG-regression targets."""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import as_symmetric
from .errors import DomainError, InputError, RegressionError

SCALAR_MODES = ("inverse-mean-eigenvalue", "zero")


def scalar_target(S, mode="inverse-mean-eigenvalue"):
    """``alpha * I`` with ``alpha = p / tr(S)``, or the zero matrix.

    Pass the pooled covariance to obtain the common target ``alpha_. I``.
    """
    S = as_symmetric(S, "S")
    p = S.shape[0]
    if mode == "zero":
        return np.zeros((p, p))
    if mode != "inverse-mean-eigenvalue":
        raise InputError(f"unknown scalar target mode {mode!r}; choose from {SCALAR_MODES}")
    tr = np.trace(S)
    if not tr > 0:
        raise DomainError("trace of S must be positive for the inverse-mean-eigenvalue target")
    return (p / tr) * np.eye(p)


@dataclass(frozen=True)
class DirectedGraphSpec:
    """Directed graph on ``p`` nodes given by parent lists."""

    p: int
    parents: tuple
    names: tuple = None

    def __post_init__(self):
        parents = tuple(tuple(int(a) for a in pa) for pa in self.parents)
        if len(parents) != self.p:
            raise InputError(f"need one parent list per node ({self.p}), got {len(parents)}")
        for child, pa in enumerate(parents):
            for a in pa:
                if not 0 <= a < self.p:
                    raise InputError(f"parent index {a} of node {child} out of range")
                if a == child:
                    raise InputError(f"node {child} lists itself as parent")
            if len(set(pa)) != len(pa):
                raise InputError(f"node {child} has duplicate parents")
        object.__setattr__(self, "parents", parents)
        if self.names is not None:
            if len(self.names) != self.p:
                raise InputError("names length does not match node count")
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def acyclic(self):
        indeg = [len(pa) for pa in self.parents]
        children = [[] for _ in range(self.p)]
        for c, pa in enumerate(self.parents):
            for a in pa:
                children[a].append(c)
        queue = [v for v in range(self.p) if indeg[v] == 0]
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        return seen == self.p

    @classmethod
    def from_edges(cls, edges, names):
        """Build from ``(parent, child)`` name pairs resolved against ``names``."""
        names = list(names)
        index = {nm: i for i, nm in enumerate(names)}
        if len(index) != len(names):
            raise InputError("node names must be unique")
        parents = [[] for _ in names]
        for a, b in edges:
            for nm in (a, b):
                if nm not in index:
                    raise InputError(f"edge endpoint {nm!r} is not a data column")
            if index[a] not in parents[index[b]]:
                parents[index[b]].append(index[a])
        return cls(len(names), parents, names)


def read_edge_list(path, names):
    """Read a ``parent child`` per line edge list; ``#`` starts a comment."""
    edges = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.replace(",", " ").split()
                if len(parts) != 2:
                    raise InputError(f"{path}:{lineno}: expected 'parent child', got {line!r}")
                edges.append((parts[0], parts[1]))
    except OSError as exc:
        raise InputError(f"cannot read edge list {path}: {exc}") from exc
    return DirectedGraphSpec.from_edges(edges, names)


def dag_target(pilot, graph, printed_sign=False):
    """Target from node-wise regressions of pilot data on graph parents.

    For every node ``a`` with parents ``pa`` the pilot column is regressed on
    the parent columns (with intercept), giving coefficients ``beta`` and
    residual variance ``s2 = RSS / (n - |pa| - 1)``. Starting from zero, the
    target accumulates ``1/s2`` at ``(a, a)``, ``-beta/s2`` at ``(pa, a)`` and
    ``(a, pa)``, and ``beta beta^T / s2`` on ``(pa, pa)``. This is the precision
    matrix of the fitted linear structural equation model, positive definite
    when the graph is acyclic.

    ``printed_sign=True`` adds ``+beta/s2`` to the off-diagonal cells instead,
    which gives the precision of the model with all coefficients negated.
    """
    X = np.asarray(pilot, dtype=float)
    if X.ndim != 2 or X.shape[1] != graph.p:
        raise InputError(f"pilot data must have {graph.p} columns")
    if not np.all(np.isfinite(X)):
        raise InputError("pilot data contain non-finite values")
    n, p = X.shape
    acyclic = graph.acyclic
    if not acyclic:
        warnings.warn("graph has a cycle; the target is clamped to be positive semi-definite",
                      RuntimeWarning, stacklevel=2)
    label = graph.names or tuple(str(i) for i in range(p))
    T = np.zeros((p, p))
    sign = 1.0 if printed_sign else -1.0
    for a in range(p):
        pa = list(graph.parents[a])
        k = len(pa)
        if n < k + 2:
            raise RegressionError(f"node {label[a]}: need at least {k + 2} pilot rows, got {n}")
        D = np.column_stack([np.ones(n), X[:, pa]])
        if np.linalg.matrix_rank(D) < k + 1:
            raise RegressionError(f"node {label[a]}: parent design is rank deficient")
        coef, *_ = np.linalg.lstsq(D, X[:, a], rcond=None)
        resid = X[:, a] - D @ coef
        s2 = resid @ resid / (n - k - 1)
        if not s2 > 1e-14 * max(X[:, a] @ X[:, a] / n, 1e-300):
            raise RegressionError(f"node {label[a]}: zero residual variance (degenerate fit)")
        beta = coef[1:]
        T[a, a] += 1.0 / s2
        T[pa, a] += sign * beta / s2
        T[a, pa] += sign * beta / s2
        T[np.ix_(pa, pa)] += np.outer(beta, beta) / s2
    T = (T + T.T) / 2
    if not acyclic:
        w, V = np.linalg.eigh(T)
        T = (V * np.clip(w, 0.0, None)) @ V.T
        T = (T + T.T) / 2
    return T
