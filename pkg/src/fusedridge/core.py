"""Dense symmetric linear algebra and the single-class targeted ridge update.

Matrices are plain ``numpy`` arrays. Functions that accept a symmetric matrix
validate it once through :func:`as_symmetric` and return symmetric arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, PenaltyError

# relative tolerances carry this absolute floor
ABS_FLOOR = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SpdCheckReport:
    is_pd: bool
    min_eigenvalue: float
    condition_number: float


def _tol(A, rel):
    return max(rel * np.linalg.norm(A), ABS_FLOOR)


def as_symmetric(A, name="matrix", sym_tol=1e-8):
    """Validate a square finite matrix and return its exactly symmetric copy.

    Asymmetry larger than ``sym_tol`` relative to the Frobenius norm is an
    input error; smaller asymmetry (roundoff) is averaged away.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InputError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")
    if np.max(np.abs(A - A.T), initial=0.0) > _tol(A, sym_tol):
        raise InputError(f"{name} is not symmetric")
    return (A + A.T) / 2.0


def sym_eigen(A):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    A = as_symmetric(A)
    w, V = np.linalg.eigh(A)
    return w[::-1], V[:, ::-1]


def check_spd(A):
    w = np.linalg.eigvalsh(as_symmetric(A))
    lo, hi = w[0], w[-1]
    cond = hi / lo if lo > 0 else np.inf
    return SpdCheckReport(is_pd=bool(lo > 0), min_eigenvalue=float(lo), condition_number=float(cond))


def sym_sqrt(A, require_psd=True):
    """Principal square root of a symmetric p.s.d. matrix.

    Eigenvalues in ``[-1e-10 * ||A||_F, 0)`` are clamped to zero. With
    ``require_psd`` more negative eigenvalues raise; without it they are
    clamped as well.
    """
    A = as_symmetric(A)
    w, V = np.linalg.eigh(A)
    if require_psd and w[0] < -_tol(A, PSD_TOL):
        raise DomainError(f"matrix has negative eigenvalue {w[0]:.3e}")
    w = np.clip(w, 0.0, None)
    R = (V * np.sqrt(w)) @ V.T
    return (R + R.T) / 2.0


def _check_lambda(lam):
    lam = float(lam)
    if not np.isfinite(lam):
        raise InputError("penalty must be finite")
    if lam <= 0:
        raise PenaltyError(f"ridge penalty must be positive, got {lam}")
    return lam


def ridge_eigenvalues(d, lam):
    """Map eigenvalues d of ``S - lam*T`` to eigenvalues of the ridge estimate.

    Evaluates ``1 / (sqrt(lam + d^2/4) + d/2)``; for negative d the algebraically
    equal ``(sqrt(lam + d^2/4) - d/2) / lam`` avoids cancellation.
    """
    d = np.asarray(d, dtype=float)
    r = np.hypot(np.sqrt(lam), d / 2.0)
    return np.where(d >= 0, 1.0 / (r + np.abs(d) / 2.0), (r + np.abs(d) / 2.0) / lam)


def ridge_update(S_bar, T_bar, lam):
    """Targeted ridge precision estimate.

    Solves ``inv(Omega) - S_bar - lam * (Omega - T_bar) = 0`` for p.d. Omega::

        Omega = { [lam I + (S_bar - lam T_bar)^2 / 4]^{1/2} + (S_bar - lam T_bar) / 2 }^{-1}

    Both bracketed terms share the eigenbasis of ``S_bar - lam * T_bar``, so a
    single symmetric eigendecomposition gives the result without inversion.
    ``S_bar`` may be indefinite.
    """
    lam = _check_lambda(lam)
    S_bar = as_symmetric(S_bar, "S_bar")
    T_bar = as_symmetric(T_bar, "T_bar")
    if S_bar.shape != T_bar.shape:
        raise InputError("S_bar and T_bar differ in shape")
    d, V = np.linalg.eigh(S_bar - lam * T_bar)
    Omega = (V * ridge_eigenvalues(d, lam)) @ V.T
    return (Omega + Omega.T) / 2.0


def ridge_update_inverse_free(S_bar, T_bar, lam):
    """Ridge estimate and its inverse via an explicit matrix square root.

    Returns ``(Omega, Sigma)`` with ``Sigma = [lam I + M^2/4]^{1/2} + M/2`` and
    ``Omega = (Sigma - M) / lam`` where ``M = S_bar - lam T_bar``.
    """
    lam = _check_lambda(lam)
    S_bar = as_symmetric(S_bar, "S_bar")
    T_bar = as_symmetric(T_bar, "T_bar")
    if S_bar.shape != T_bar.shape:
        raise InputError("S_bar and T_bar differ in shape")
    M = S_bar - lam * T_bar
    root = sym_sqrt(lam * np.eye(M.shape[0]) + M @ M / 4.0)
    Sigma = root + M / 2.0
    Omega = (root - M / 2.0) / lam
    return (Omega + Omega.T) / 2.0, (Sigma + Sigma.T) / 2.0


def logdet_pd(Omega):
    try:
        L = np.linalg.cholesky(Omega)
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not positive definite") from exc
    return 2.0 * np.sum(np.log(np.diag(L)))


def gaussian_loglik(Omega, S, n):
    """Class log-likelihood term ``n * (log det Omega - tr(S Omega))``."""
    Omega = as_symmetric(Omega, "Omega")
    S = as_symmetric(S, "S")
    if Omega.shape != S.shape:
        raise InputError("Omega and S differ in shape")
    return float(n) * (logdet_pd(Omega) - np.sum(S * Omega))


def fused_penalty_value(Omegas, Lambda, Targets):
    """Fused ridge penalty.

    ``sum_g lam_gg/2 ||D_g||^2 + sum_{g1,g2} lam_{g1g2}/4 ||D_g1 - D_g2||^2`` with
    ``D_g = Omega_g - T_g`` and the second sum over ordered pairs.
    """
    Lambda = np.asarray(Lambda, dtype=float)
    G = len(Omegas)
    if Lambda.shape != (G, G) or len(Targets) != G:
        raise InputError("penalty matrix, estimates and targets disagree on class count")
    D = [np.asarray(O, float) - np.asarray(T, float) for O, T in zip(Omegas, Targets)]
    if len({d.shape for d in D}) != 1:
        raise InputError("class matrices differ in shape")
    value = sum(Lambda[g, g] / 2.0 * np.sum(D[g] ** 2) for g in range(G))
    for g1 in range(G):
        for g2 in range(G):
            if g1 != g2 and Lambda[g1, g2] != 0:
                value += Lambda[g1, g2] / 4.0 * np.sum((D[g1] - D[g2]) ** 2)
    return float(value)


def frobenius_loss(Omega_hat, Omega):
    Omega_hat, Omega = np.asarray(Omega_hat, float), np.asarray(Omega, float)
    if Omega_hat.shape != Omega.shape:
        raise InputError("dimension mismatch")
    return float(np.sum((Omega_hat - Omega) ** 2))


def quadratic_loss(Omega_hat, Omega):
    Omega_hat, Omega = np.asarray(Omega_hat, float), np.asarray(Omega, float)
    if Omega_hat.shape != Omega.shape:
        raise InputError("dimension mismatch")
    try:
        L = np.linalg.cholesky(Omega)
    except np.linalg.LinAlgError as exc:
        raise DomainError("true precision is not positive definite") from exc
    # Omega_hat @ inv(Omega) via two triangular solves
    X = np.linalg.solve(L.T, np.linalg.solve(L, Omega_hat.T)).T
    return float(np.sum((X - np.eye(len(Omega))) ** 2))
