"""Fused ridge estimation of several precision matrices.

The penalized log-likelihood

    sum_g n_g (log det Omega_g - tr(S_g Omega_g))
        - sum_g lam_gg/2 ||D_g||^2 - sum_{g1 != g2} lam_{g1g2}/4 ||D_g1 - D_g2||^2,

with ``D_g = Omega_g - T_g``, is strictly concave. :func:`fit` maximizes it by
block coordinate ascent: each block update is a single-class targeted ridge
problem with a fusion-corrected covariance (or target). When coordinate ascent
stops short of the stationarity tolerance (it crawls when fusion penalties are
huge), a damped Newton iteration with a preconditioned conjugate-gradient
inner solve finishes the job.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .core import as_symmetric, gaussian_loglik, fused_penalty_value, ridge_update, PSD_TOL
from .errors import ConvergenceError, DomainError, InputError
from .penalty import check_penalty, is_diagonal

SCHEMES = ("auto", "covariance-shift", "target-shift")


@dataclass(frozen=True, eq=False)
class ClassData:
    """Sufficient statistics of one class.

    ``S`` uses the 1/n scaling. ``Y`` (optional) holds the column-centered raw
    samples, needed for cross-validation and permutation tests.
    """

    S: np.ndarray
    n: int
    Y: np.ndarray = None
    name: str = None

    def __post_init__(self):
        S = as_symmetric(self.S, "sample covariance")
        n = int(self.n)
        if n != self.n or n < 1:
            raise InputError(f"sample count must be a positive integer, got {self.n}")
        w_min = np.linalg.eigvalsh(S)[0]
        if w_min < -max(PSD_TOL * np.linalg.norm(S), 1e-12):
            raise DomainError("sample covariance is not positive semi-definite")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "n", n)
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=float)
            if Y.ndim != 2 or Y.shape != (n, S.shape[0]):
                raise InputError(f"raw data must be {n}x{S.shape[0]}, got {Y.shape}")
            scale = max(np.abs(Y).max(initial=0.0), 1.0)
            if np.abs(Y.mean(axis=0)).max() > 1e-10 * scale:
                raise InputError("raw data columns must be centered")
            if np.abs(Y.T @ Y / n - S).max() > 1e-10 * max(np.abs(S).max(), 1.0):
                raise InputError("sample covariance does not match raw data")
            object.__setattr__(self, "Y", Y)

    @property
    def p(self):
        return self.S.shape[0]

    @classmethod
    def from_samples(cls, Y, name=None):
        """Center the columns of ``Y`` and form the 1/n covariance."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] < 1:
            raise InputError("samples must be a non-empty 2-d array")
        if not np.all(np.isfinite(Y)):
            raise InputError("samples contain non-finite values")
        Yc = Y - Y.mean(axis=0)
        return cls(Yc.T @ Yc / len(Yc), len(Yc), Yc, name)


@dataclass
class PrecisionEstimates:
    omegas: list
    iterations: int
    final_relative_change: float
    kkt_residuals: np.ndarray
    wall_time: float
    converged: bool = True
    method: str = "coordinate-ascent"
    newton_steps: int = 0
    objective: float = float("nan")
    objective_trace: list = field(default_factory=list)


def _stack(data):
    if not data:
        raise InputError("at least one class is required")
    data = [d if isinstance(d, ClassData) else ClassData(*d) for d in data]
    p = {d.p for d in data}
    if len(p) != 1:
        raise InputError("classes differ in dimension")
    S = np.stack([d.S for d in data])
    n = np.array([d.n for d in data], dtype=float)
    return data, S, n


def check_targets(targets, G, p):
    """Validate targets; clamp eigenvalues within roundoff of zero."""
    if len(targets) != G:
        raise InputError(f"expected {G} targets, got {len(targets)}")
    out = []
    for g, T in enumerate(targets):
        T = as_symmetric(T, f"target {g}")
        if T.shape != (p, p):
            raise InputError(f"target {g} has shape {T.shape}, expected {(p, p)}")
        w, V = np.linalg.eigh(T)
        tol = max(PSD_TOL * np.linalg.norm(T), 1e-12)
        if w[0] < -tol:
            raise DomainError(f"target {g} is indefinite (min eigenvalue {w[0]:.3e})")
        if w[0] < 0:
            T = (V * np.clip(w, 0, None)) @ V.T
            T = (T + T.T) / 2
        out.append(T)
    return np.stack(out)


def _fusion_matrix(Lambda):
    """``L`` with ``L_gg = lam_g.`` and ``L_gg' = -lam_gg'``; the penalty gradient is ``L @ D``."""
    L = -np.array(Lambda, dtype=float)
    np.fill_diagonal(L, Lambda.sum(axis=0))
    return L


def _class_update(g0, Lambda, omegas, T, S, n, scheme):
    lam_bar = Lambda[:, g0].sum() / n[g0]
    w = Lambda[:, g0].copy()
    w[g0] = 0.0
    shift = np.tensordot(w, omegas - T, axes=(0, 0))
    if scheme == "auto":
        big = np.abs(shift).max(initial=0.0) / n[g0] > 1e6 * max(np.linalg.norm(S[g0]), 1e-12)
        scheme = "target-shift" if lam_bar > 1 or big else "covariance-shift"
    if scheme == "covariance-shift":
        return ridge_update(S[g0] - shift / n[g0], T[g0], lam_bar)
    if scheme == "target-shift":
        return ridge_update(S[g0], T[g0] + shift / Lambda[:, g0].sum(), lam_bar)
    raise InputError(f"unknown update scheme {scheme!r}; choose from {SCHEMES}")


def class_update(g0, Lambda, omegas, targets, data, scheme="auto"):
    """Maximize the fused objective over class ``g0`` with all other classes fixed.

    ``covariance-shift`` solves a ridge problem with
    ``S_bar = S_g0 - sum_{g != g0} (lam_{g g0} / n_g0) (Omega_g - T_g)``;
    ``target-shift`` instead moves the target to
    ``T_g0 + sum_{g != g0} (lam_{g g0} / lam_g0.) (Omega_g - T_g)``. Both use
    ``lam_bar = lam_g0. / n_g0`` and give the same maximizer.
    """
    data, S, n = _stack(data)
    G, p = len(data), S.shape[1]
    Lambda = check_penalty(Lambda, G)
    T = check_targets(targets, G, p)
    omegas = np.stack([as_symmetric(O, "Omega") for O in omegas])
    if not 0 <= g0 < G:
        raise InputError(f"class index {g0} out of range")
    return _class_update(g0, Lambda, omegas, T, S, n, scheme)


def _gradients(omegas, S, n, T, L):
    """Per-class scaled gradients ``inv(Omega_g) - S_g - (L @ D)_g / n_g`` and the inverses."""
    Sig = np.empty_like(omegas)
    for g, O in enumerate(omegas):
        try:
            C = np.linalg.cholesky(O)
        except np.linalg.LinAlgError as exc:
            raise DomainError(f"estimate of class {g} is not positive definite") from exc
        Ci = np.linalg.solve(C, np.eye(len(O)))
        Sig[g] = Ci.T @ Ci
    R = Sig - S - np.tensordot(L, omegas - T, axes=(1, 0)) / n[:, None, None]
    return R, Sig


def kkt_residual(omegas, data, Lambda, targets):
    """Frobenius norm of the scaled gradient of the fused objective, per class."""
    data, S, n = _stack(data)
    G, p = len(data), S.shape[1]
    Lambda = check_penalty(Lambda, G)
    T = check_targets(targets, G, p)
    omegas = np.stack([as_symmetric(O, "Omega") for O in omegas])
    R, _ = _gradients(omegas, S, n, T, _fusion_matrix(Lambda))
    return np.linalg.norm(R, axis=(1, 2))


def _objective(omegas, S, n, T, Lambda):
    total = 0.0
    for g in range(len(n)):
        try:
            C = np.linalg.cholesky(omegas[g])
        except np.linalg.LinAlgError:
            return -np.inf
        total += n[g] * (2 * np.log(np.diag(C)).sum() - np.sum(S[g] * omegas[g]))
    return total - fused_penalty_value(list(omegas), Lambda, list(T))


def objective(omegas, data, Lambda, targets):
    """Penalized log-likelihood being maximized."""
    data, S, n = _stack(data)
    Lambda = check_penalty(Lambda, len(data))
    ll = sum(gaussian_loglik(O, d.S, d.n) for O, d in zip(omegas, data))
    return ll - fused_penalty_value(omegas, Lambda, targets)


def _kkt_tolerance(omegas, Sig, S, n, T, Lambda, rel):
    """Stationarity tolerance: relative part plus a floor for roundoff in the residual."""
    eps = np.finfo(float).eps
    base = rel * max(1.0, np.linalg.norm(S, axis=(1, 2)).max())
    nO = np.linalg.norm(omegas, axis=(1, 2))
    nT = np.linalg.norm(T, axis=(1, 2))
    nSig = np.linalg.norm(Sig, axis=(1, 2))
    cond = np.array([np.linalg.cond(O) for O in omegas])
    floor = np.empty(len(n))
    for g in range(len(n)):
        pen = np.abs(Lambda[:, g]) @ (nO + nT) / n[g]
        floor[g] = 1e3 * eps * (cond[g] * nSig[g] + np.linalg.norm(S[g]) + pen)
    return base + floor


class _Newton:
    """Damped Newton iteration on the joint problem, PCG inner solves."""

    def __init__(self, S, n, T, Lambda):
        self.S, self.n, self.T, self.Lambda = S, n, T, Lambda
        self.L = _fusion_matrix(Lambda)
        self.G, self.p = S.shape[0], S.shape[1]

    def hess(self, V, Sig):
        # negative Hessian action: n_g Sig_g V_g Sig_g + (L V)_g
        return self.n[:, None, None] * (Sig @ V @ Sig) + np.tensordot(self.L, V, axes=(1, 0))

    def preconditioner(self, Sig):
        n = self.n
        s, U = np.linalg.eigh(np.tensordot(n, Sig, axes=(0, 0)) / n.sum())
        s = np.clip(s, 1e-300, None)
        c = np.outer(s, s)
        nh = 1.0 / np.sqrt(n)
        mu, Q = np.linalg.eigh(nh[:, None] * self.L * nh[None, :])
        denom = c[None] + mu[:, None, None]

        def apply(R):
            Z = U.T @ R @ U
            Z = nh[:, None, None] * Z
            Z = np.tensordot(Q.T, Z, axes=(1, 0)) / denom
            Z = nh[:, None, None] * np.tensordot(Q, Z, axes=(1, 0))
            Z = U @ Z @ U.T
            return (Z + Z.transpose(0, 2, 1)) / 2

        return apply

    def pcg(self, b, Sig, rtol=1e-12, maxiter=500):
        M = self.preconditioner(Sig)
        x = np.zeros_like(b)
        r = b.copy()
        z = M(r)
        d = z.copy()
        rz = np.sum(r * z)
        bnorm = np.linalg.norm(b)
        for _ in range(maxiter):
            Hd = self.hess(d, Sig)
            dHd = np.sum(d * Hd)
            if dHd <= 0:
                break
            a = rz / dHd
            x += a * d
            r -= a * Hd
            if np.linalg.norm(r) <= rtol * bnorm:
                break
            z = M(r)
            rz_new = np.sum(r * z)
            d = z + (rz_new / rz) * d
            rz = rz_new
        return (x + x.transpose(0, 2, 1)) / 2

    def run(self, omegas, rel_tol, max_steps=100):
        steps = 0
        R, Sig = _gradients(omegas, self.S, self.n, self.T, self.L)
        f = _objective(omegas, self.S, self.n, self.T, self.Lambda)
        while True:
            res = np.linalg.norm(R, axis=(1, 2))
            tol = _kkt_tolerance(omegas, Sig, self.S, self.n, self.T, self.Lambda, rel_tol)
            if np.all(res <= tol) or steps >= max_steps:
                return omegas, res, tol, steps
            grad = self.n[:, None, None] * R
            # inexact Newton: solve only as accurately as the next step needs
            rtol = float(np.clip(0.1 * np.min(tol / np.maximum(res, 1e-300)), 1e-12, 0.1))
            V = self.pcg(grad, Sig, rtol=rtol)
            slope = np.sum(grad * V)
            t = 1.0
            accepted = False
            while t > 1e-12:
                cand = omegas + t * V
                f_new = _objective(cand, self.S, self.n, self.T, self.Lambda)
                if np.isfinite(f_new):
                    if f_new >= f + 1e-4 * t * slope:
                        accepted = True
                    elif t == 1.0:
                        # objective differences can drown in roundoff near the
                        # optimum; a smaller gradient is then good enough
                        R_new, _ = _gradients(cand, self.S, self.n, self.T, self.L)
                        accepted = np.linalg.norm(R_new) < np.linalg.norm(R)
                if accepted:
                    break
                t /= 2
            steps += 1
            if not accepted:
                return omegas, res, tol, steps
            omegas, f = cand, f_new
            R, Sig = _gradients(omegas, self.S, self.n, self.T, self.L)


def initial_estimate(data):
    """``p / tr(S_pooled) * I`` for every class."""
    data, S, n = _stack(data)
    p = S.shape[1]
    tr = np.tensordot(n, S, axes=(0, 0)).trace() / n.sum()
    alpha = p / tr if tr > 0 else 1.0
    return [alpha * np.eye(p) for _ in data]


def pooled_estimate(data, Lambda, target):
    """Closed-form limit for infinite fusion with a common target.

    Ridge estimate from the pooled covariance ``sum_g n_g S_g / n_.`` with
    penalty ``tr(Lambda) / n_.``.
    """
    data, S, n = _stack(data)
    Lambda = check_penalty(Lambda, len(data))
    S_pool = np.tensordot(n, S, axes=(0, 0)) / n.sum()
    T = check_targets([target], 1, S.shape[1])[0]
    return ridge_update(S_pool, T, np.trace(Lambda) / n.sum())


def fit(data, Lambda, targets, eps=1e-8, max_iter=1000, scheme="auto", init=None,
        dispatch=True, polish=True, kkt_rel=1e-7, order=None, track_objective=False):
    """Fused ridge precision estimates for all classes.

    Parameters
    ----------
    data : list of ClassData
    Lambda : (G, G) penalty matrix
    targets : list of G p.s.d. target matrices
    eps : stop coordinate ascent when ``max_g ||dOmega_g||^2 / ||Omega_g||^2 < eps``
    max_iter : maximum number of coordinate-ascent sweeps
    scheme : block update scheme, see :func:`class_update`
    init : optional starting estimates; default ``p / tr(S_pooled) * I``
    dispatch : use the closed form for diagonal ``Lambda`` and the pooled
        estimate as warm start when every fusion penalty is at least 1e8 and
        targets coincide
    polish : finish with Newton steps when the stationarity residual exceeds
        ``kkt_rel * max(1, max_g ||S_g||)`` (plus a roundoff floor)
    order : class sweep order, default ``0..G-1``
    """
    start = time.perf_counter()
    data, S, n = _stack(data)
    G, p = S.shape[0], S.shape[1]
    Lambda = check_penalty(Lambda, G)
    T = check_targets(targets, G, p)
    if not eps > 0:
        raise InputError("eps must be positive")
    if scheme not in SCHEMES:
        raise InputError(f"unknown update scheme {scheme!r}; choose from {SCHEMES}")
    order = list(range(G)) if order is None else [int(g) for g in order]
    if sorted(order) != list(range(G)):
        raise InputError("order must be a permutation of the class indices")

    method = "coordinate-ascent"
    if dispatch and is_diagonal(Lambda):
        omegas = np.stack([ridge_update(S[g], T[g], Lambda[g, g] / n[g]) for g in range(G)])
        R, _ = _gradients(omegas, S, n, T, _fusion_matrix(Lambda))
        return PrecisionEstimates(list(omegas), 0, 0.0, np.linalg.norm(R, axis=(1, 2)),
                                  time.perf_counter() - start, True, "closed-form",
                                  0, _objective(omegas, S, n, T, Lambda))
    off = Lambda[~np.eye(G, dtype=bool)]
    if init is not None:
        omegas = np.stack([as_symmetric(O, "initial estimate") for O in init])
        if omegas.shape != (G, p, p):
            raise InputError("initial estimates have the wrong shape")
    elif dispatch and G > 1 and off.min() >= 1e8 and np.all(T == T[0]):
        method = "pooled-warm-start"
        S_pool = np.tensordot(n, S, axes=(0, 0)) / n.sum()
        pooled = ridge_update(S_pool, T[0], np.trace(Lambda) / n.sum())
        omegas = np.stack([pooled] * G)
    else:
        tr = np.tensordot(n, S, axes=(0, 0)).trace() / n.sum()
        omegas = np.stack([(p / tr if tr > 0 else 1.0) * np.eye(p)] * G)

    trace = []
    if track_objective:
        trace.append(_objective(omegas, S, n, T, Lambda))
    change, history = np.inf, []
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        prev = omegas.copy()
        for g in order:
            omegas[g] = _class_update(g, Lambda, omegas, T, S, n, scheme)
        num = np.sum((omegas - prev) ** 2, axis=(1, 2))
        den = np.maximum(np.sum(omegas ** 2, axis=(1, 2)), 1e-12)
        change = float(np.max(num / den))
        history.append(change)
        if track_objective:
            trace.append(_objective(omegas, S, n, T, Lambda))
        if change < eps:
            converged = True
            break
        # slow linear convergence (strong fusion): hand over to Newton
        if polish and it >= 10 and history[-2] > 0 and change / history[-2] > 0.95:
            break

    L = _fusion_matrix(Lambda)
    R, Sig = _gradients(omegas, S, n, T, L)
    res = np.linalg.norm(R, axis=(1, 2))
    tol = _kkt_tolerance(omegas, Sig, S, n, T, Lambda, kkt_rel)
    steps = 0
    if polish and not np.all(res <= tol):
        omegas, res, tol, steps = _Newton(S, n, T, Lambda).run(omegas, kkt_rel)
        converged = bool(np.all(res <= tol))
        if steps:
            method += "+newton"
    elif not converged:
        converged = bool(np.all(res <= tol)) and polish
    if not converged:
        raise ConvergenceError(
            f"no convergence after {it} sweeps and {steps} Newton steps "
            f"(max KKT residual {res.max():.3e}, relative change {change:.3e})",
            last_iterate=list(omegas), residuals=res)
    return PrecisionEstimates(list(omegas), it, change, res, time.perf_counter() - start,
                              True, method, steps, _objective(omegas, S, n, T, Lambda), trace)

