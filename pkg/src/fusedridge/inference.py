"""Permutation score test of equal class precision matrices."""

from dataclasses import dataclass

import numpy as np

from .core import as_symmetric, ridge_update
from .errors import DomainError, InputError
from .estimator import ClassData, _stack, check_targets
from .penalty import check_penalty


@dataclass(frozen=True)
class ScoreTestResult:
    observed_U: float
    null_draws: np.ndarray
    p_value: float
    B: int
    seed: int


def score_statistic(data, Omega_H0):
    """``sum_g tr(X_g Omega X_g Omega)`` with ``X_g = n_g {2 R_g - R_g o I}``, ``R_g = inv(Omega) - S_g``.

    The Kronecker-structured quadratic form is evaluated as a trace, so no
    ``p^2 x p^2`` matrix is built.
    """
    data, S, n = _stack(data)
    Om = as_symmetric(Omega_H0, "Omega_H0")
    if Om.shape != S.shape[1:]:
        raise InputError("null estimate and data differ in dimension")
    try:
        C = np.linalg.cholesky(Om)
    except np.linalg.LinAlgError as exc:
        raise DomainError("null estimate is not positive definite") from exc
    Ci = np.linalg.solve(C, np.eye(len(Om)))
    Sigma = Ci.T @ Ci
    U = 0.0
    for Sg, ng in zip(S, n):
        R = Sigma - Sg
        X = ng * (2 * R - np.diag(np.diag(R)))
        W = Om @ X @ Om
        U += float(np.sum(X * W))
    return U


def _pooled(Y_classes, lam_star, T):
    n = np.array([len(Y) for Y in Y_classes], dtype=float)
    S = [Y.T @ Y / len(Y) for Y in Y_classes]
    S_pool = sum(ni * Si for ni, Si in zip(n, S)) / n.sum()
    return S, n, ridge_update(S_pool, T, lam_star)


def permutation_test(data, Lambda, target, B=1000, seed=0):
    """Score test of ``Omega_1 = ... = Omega_G`` with a label-permutation null.

    The null estimate is the pooled closed form with penalty ``tr(Lambda)/n_.``
    (so only the ridge penalties matter). Each permutation reassigns samples to
    classes keeping class sizes, re-centers every class, re-estimates under the
    null and recomputes the statistic. ``p = (1 + #{null >= observed}) / (B + 1)``.
    """
    data, S, n = _stack(data)
    if any(d.Y is None for d in data):
        raise InputError("the permutation test needs raw samples for every class")
    B = int(B)
    if B < 1:
        raise InputError("B must be at least 1")
    G, p = len(data), S.shape[1]
    Lambda = check_penalty(Lambda, G)
    T = check_targets([target], 1, p)[0]
    lam_star = np.trace(Lambda) / n.sum()

    def statistic(Ys):
        Sg, ng, Om = _pooled(Ys, lam_star, T)
        return score_statistic([ClassData(s, int(k)) for s, k in zip(Sg, ng)], Om)

    observed = statistic([d.Y for d in data])
    pooled_rows = np.vstack([d.Y for d in data])
    bounds = np.cumsum([0] + [d.n for d in data])
    rng = np.random.default_rng(seed)
    null = np.empty(B)
    for b in range(B):
        perm = pooled_rows[rng.permutation(len(pooled_rows))]
        Ys = [perm[bounds[g]:bounds[g + 1]] for g in range(G)]
        null[b] = statistic([Y - Y.mean(axis=0) for Y in Ys])
    p_value = (1 + np.count_nonzero(null >= observed)) / (B + 1)
    return ScoreTestResult(float(observed), null, float(p_value), B, seed)
