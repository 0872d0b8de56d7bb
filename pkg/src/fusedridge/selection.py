"""Penalty selection by cross-validation and a Nelder-Mead search over templates.

All scores are average held-out negative Gaussian log-likelihoods on the
``-log det Omega + y^T Omega y`` scale (no factor one half); smaller is better.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import logdet_pd, ridge_update
from .errors import ConvergenceError, FoldError, InputError, DomainError
from .estimator import ClassData, _stack, check_targets, fit
from .penalty import check_penalty, instantiate

METHODS = ("kcv", "loocv", "sloocv", "fkl")


@dataclass(frozen=True)
class CvScore:
    value: float
    method: str
    folds_evaluated: int
    per_fold_terms: tuple = None


@dataclass(frozen=True)
class FoldPlan:
    """Per-class partition of sample indices: ``folds[g][k]`` is an index array."""

    folds: tuple
    seed: int = None

    @property
    def K(self):
        return len(self.folds[0])

    def __post_init__(self):
        folds = tuple(tuple(np.asarray(f, dtype=int) for f in cls) for cls in self.folds)
        if not folds or len({len(c) for c in folds}) != 1:
            raise InputError("every class needs the same number of folds")
        object.__setattr__(self, "folds", folds)


def make_fold_plan(sizes, K, seed=0):
    """Stratified random folds: each class is shuffled and cut into K near-equal parts."""
    sizes = [int(s) for s in sizes]
    K = int(K)
    if K < 2:
        raise FoldError("need at least two folds")
    if K > max(sizes):
        raise FoldError(f"K={K} exceeds the largest class size {max(sizes)}")
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    folds = []
    for n, ss in zip(sizes, children):
        perm = np.random.default_rng(ss).permutation(n)
        folds.append(tuple(np.sort(part) for part in np.array_split(perm, K)))
    return FoldPlan(tuple(folds), seed)


def loocv_plan(sizes):
    """Singleton folds: fold k holds sample k of every class that has one."""
    K = max(int(s) for s in sizes)
    return FoldPlan(tuple(tuple(np.array([k] if k < n else [], dtype=int) for k in range(K))
                          for n in sizes))


def _require_raw(data):
    if any(d.Y is None for d in data):
        raise InputError("raw samples are required for cross-validation")


def _heldout_terms(Omega, Y):
    """``sum_i (-log det Omega + y_i^T Omega y_i)`` over the rows of Y."""
    if len(Y) == 0:
        return 0.0
    return len(Y) * -logdet_pd(Omega) + float(np.sum((Y @ Omega) * Y))


def kcv_score(Lambda, data, targets, K=None, plan=None, seed=0, full_fit=None, **fit_options):
    """K-fold cross-validated fused negative log-likelihood.

    For every fold all classes are refitted without the held-out samples
    (warm-started at the full-data fit); the held-out terms
    ``n_g^k [-log det Omega_g + tr(Omega_g S_g^k)]`` are summed and divided by
    ``K * G``.
    """
    data, S, n = _stack(data)
    _require_raw(data)
    G = len(data)
    Lambda = check_penalty(Lambda, G)
    if plan is None:
        if K is None:
            raise InputError("give either K or a fold plan")
        plan = make_fold_plan([d.n for d in data], K, seed)
    if len(plan.folds) != G:
        raise InputError("fold plan does not match the number of classes")
    for g, d in enumerate(data):
        idx = np.sort(np.concatenate(plan.folds[g])) if plan.K else np.array([], int)
        if not np.array_equal(idx, np.arange(d.n)):
            raise InputError(f"fold plan for class {g} is not a partition of its samples")
    if full_fit is None:
        full_fit = fit(data, Lambda, targets, **fit_options)
    terms = []
    for k in range(plan.K):
        train, held = [], []
        for g, d in enumerate(data):
            keep = np.ones(d.n, dtype=bool)
            keep[plan.folds[g][k]] = False
            nk = int(keep.sum())
            if nk == 0:
                raise FoldError(f"fold {k} leaves class {g} without training samples")
            # center at the training mean; the full-data centering would leak
            # the held-out samples into the training span
            mu = d.Y[keep].mean(axis=0)
            Yt = d.Y[keep] - mu
            train.append(ClassData(Yt.T @ Yt / nk, nk))
            held.append(d.Y[plan.folds[g][k]] - mu)
        est = fit(train, Lambda, targets, init=full_fit.omegas, **fit_options)
        terms.append(sum(_heldout_terms(est.omegas[g], held[g]) for g in range(G)))
    return CvScore(float(sum(terms) / (plan.K * G)), "kcv", plan.K, tuple(terms))


def loocv_score(Lambda, data, targets, **fit_options):
    """Fused leave-one-out CV: K-fold CV with singleton folds (``K = max n_g``)."""
    data, _, _ = _stack(data)
    _require_raw(data)
    if any(d.n < 2 for d in data):
        raise FoldError("every class needs at least two samples for leave-one-out")
    score = kcv_score(Lambda, data, targets, plan=loocv_plan([d.n for d in data]), **fit_options)
    return CvScore(score.value, "loocv", score.folds_evaluated, score.per_fold_terms)


def sloocv_score(Lambda, data, targets, full_fit=None, **fit_options):
    """Special leave-one-out CV.

    Each left-out sample triggers one block update of its own class (with the
    reduced covariance and sample count) while the other classes stay at the
    full-data fit. Terms are averaged with weight ``1 / n_.``.
    """
    data, S, n = _stack(data)
    _require_raw(data)
    G, p = len(data), S.shape[1]
    Lambda = check_penalty(Lambda, G)
    T = check_targets(targets, G, p)
    if any(d.n < 2 for d in data):
        raise FoldError("every class needs at least two samples for leave-one-out")
    if full_fit is None:
        full_fit = fit(data, Lambda, targets, **fit_options)
    omegas = np.stack(full_fit.omegas)
    terms = []
    for g, d in enumerate(data):
        col = Lambda[:, g].copy()
        lam_tot = col.sum()
        col[g] = 0.0
        D = np.tensordot(col, omegas - T, axes=(0, 0))
        T_bar = T[g] + D / lam_tot
        class_terms = 0.0
        for i in range(d.n):
            # leave-one-out covariance recentred at the mean of the other samples
            y = d.Y[i]
            m = d.n - 1
            S_i = (d.n * d.S - np.outer(y, y)) / m - np.outer(y, y) / m ** 2
            Om = ridge_update(S_i, T_bar, lam_tot / m)
            class_terms += _heldout_terms(Om, (y * d.n / m)[None, :])
        terms.append(class_terms)
    return CvScore(float(sum(terms) / n.sum()), "sloocv", int(n.sum()), tuple(terms))


def fkl_bias_terms(Omega, Y, lam_bar, bias_sign=1.0):
    """Per-sample ``y^T(O^2 - O)y + s * lam_bar * y^T(O^4 - O^3)y``.

    Uses ``u = O y`` and ``v = O u`` so no matrix power is formed:
    ``y^T O^2 y = |u|^2``, ``y^T O^3 y = u^T v`` and ``y^T O^4 y = |v|^2``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    U = Y @ Omega
    V = U @ Omega
    yOy = np.sum(Y * U, axis=1)
    yO2y = np.sum(U * U, axis=1)
    yO3y = np.sum(U * V, axis=1)
    yO4y = np.sum(V * V, axis=1)
    return (yO2y - yOy) + bias_sign * lam_bar * (yO4y - yO3y)


def fkl_score(Lambda, data, targets, bias_sign=1.0, full_fit=None, **fit_options):
    """Fused Kullback-Leibler approximation to leave-one-out CV.

    ``(1/n_.) sum_g n_g [-log det O_g + tr(S_g O_g)] + (1/n_.) sum_g sum_i zeta_ig``
    at the full-data fit, with ``zeta`` from :func:`fkl_bias_terms` and
    ``lam_bar_g = lam_g. / n_g``. ``bias_sign`` is the sign in front of the
    quartic term.
    """
    data, S, n = _stack(data)
    _require_raw(data)
    G = len(data)
    Lambda = check_penalty(Lambda, G)
    if full_fit is None:
        full_fit = fit(data, Lambda, targets, **fit_options)
    fit_terms, bias_terms = [], []
    for g, d in enumerate(data):
        Om = full_fit.omegas[g]
        fit_terms.append(d.n * (-logdet_pd(Om) + np.sum(d.S * Om)))
        bias_terms.append(float(fkl_bias_terms(Om, d.Y, Lambda[:, g].sum() / d.n, bias_sign).sum()))
    value = (sum(fit_terms) + sum(bias_terms)) / n.sum()
    return CvScore(float(value), "fkl", 1, tuple(f + b for f, b in zip(fit_terms, bias_terms)))


def cv_score(method, Lambda, data, targets, K=5, seed=0, bias_sign=1.0, **fit_options):
    method = method.lower()
    if method == "kcv":
        return kcv_score(Lambda, data, targets, K=K, seed=seed, **fit_options)
    if method == "loocv":
        return loocv_score(Lambda, data, targets, **fit_options)
    if method == "sloocv":
        return sloocv_score(Lambda, data, targets, **fit_options)
    if method == "fkl":
        return fkl_score(Lambda, data, targets, bias_sign=bias_sign, **fit_options)
    raise InputError(f"unknown selection method {method!r}; choose from {METHODS}")


@dataclass
class SelectionResult:
    Lambda: np.ndarray
    values: dict
    score: CvScore
    trace: list = field(default_factory=list)
    converged: bool = False
    evaluations: int = 0


class _BudgetExhausted(Exception):
    pass


def _to_theta(template, values):
    theta = []
    for name in template.params:
        v = float(values[name])
        if template.log_scale[name]:
            if v <= 0:
                raise InputError(f"start value of log-scale parameter {name} must be positive")
            theta.append(math.log(v))
        else:
            theta.append(v)
    return np.array(theta)


def _from_theta(template, theta):
    values = {}
    ridge = set(template.ridge_params)
    for name, t in zip(template.params, theta):
        if template.log_scale[name]:
            values[name] = math.exp(min(t, 700.0))
        elif name in ridge:
            values[name] = max(abs(t), 1e-12)
        else:
            values[name] = max(t, 0.0)
    return values


def optimize_penalties(template, data, targets, method="loocv", start=None, budget=200,
                       K=5, seed=0, fatol=1e-6, step=1.0, bias_sign=1.0, **fit_options):
    """Nelder-Mead search for the penalty parameters minimizing a CV score.

    Parameters flagged log-scale are searched as ``log(value)`` (fusion values
    then approach but never reach zero); structural zeros of the template are
    never searched. The initial simplex steps ``step`` units along each axis.
    At most ``budget`` scores are evaluated; the best point seen is returned.
    """
    data, _, _ = _stack(data)
    if budget < 1:
        raise InputError("budget must be at least 1")
    if template.G != len(data):
        raise InputError("template size does not match the number of classes")
    start = dict(start or {})
    for name in template.params:
        start.setdefault(name, 1.0)
    theta0 = _to_theta(template, start)
    # a fixed fold plan keeps the score a deterministic function of the penalties
    plan = make_fold_plan([d.n for d in data], K, seed) if method.lower() == "kcv" else None
    trace = []
    best = {"score": None, "values": None}

    def evaluate(theta):
        if len(trace) >= budget:
            raise _BudgetExhausted
        values = _from_theta(template, theta)
        try:
            Lam = instantiate(template, values)
            # extreme candidates may overflow; they score inf and are rejected
            with np.errstate(over="ignore", invalid="ignore"):
                if plan is not None:
                    sc = kcv_score(Lam, data, targets, plan=plan, **fit_options)
                else:
                    sc = cv_score(method, Lam, data, targets, bias_sign=bias_sign, **fit_options)
            val = sc.value if np.isfinite(sc.value) else np.inf
        except (ConvergenceError, DomainError):
            sc, val = None, np.inf
        trace.append((values, val))
        if sc is not None and (best["score"] is None or val < best["score"].value):
            best["score"], best["values"] = sc, values
        return val

    d = len(theta0)
    simplex = np.vstack([theta0] + [theta0 + step * np.eye(d)[i] for i in range(d)])
    converged = False
    try:
        res = minimize(evaluate, theta0, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "fatol": fatol, "xatol": np.inf,
                                "maxfev": 10**9, "maxiter": 10**9, "adaptive": False})
        converged = bool(res.success)
    except _BudgetExhausted:
        pass
    if best["score"] is None:
        raise ConvergenceError("no penalty candidate could be evaluated")
    values = best["values"]
    return SelectionResult(instantiate(template, values), values, best["score"], trace,
                           converged, len(trace))
