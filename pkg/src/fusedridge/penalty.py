"""Penalty matrices and parameter-sharing templates.

A penalty matrix is a symmetric ``G x G`` array holding class ridge penalties
on the diagonal and pairwise fusion penalties off the diagonal. A
:class:`PenaltyTemplate` maps each cell to a named free parameter (or a
structural zero) so that factorial designs share parameters.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, PenaltyError


@dataclass(frozen=True)
class PenaltyValidation:
    valid: bool
    violations: tuple = ()


def validate(Lambda):
    """Check the preconditions of the fused estimator on a penalty matrix."""
    Lambda = np.asarray(Lambda, dtype=float)
    if Lambda.ndim != 2 or Lambda.shape[0] != Lambda.shape[1] or Lambda.size == 0:
        return PenaltyValidation(False, ("not a non-empty square matrix",))
    violations = []
    if not np.all(np.isfinite(Lambda)):
        violations.append("non-finite entry")
    else:
        if not np.array_equal(Lambda, Lambda.T):
            violations.append("asymmetric")
        off = Lambda[~np.eye(len(Lambda), dtype=bool)]
        if np.any(off < 0):
            violations.append("negative fusion penalty")
        if np.any(np.diag(Lambda) <= 0):
            violations.append("zero or negative ridge penalty on diagonal")
    return PenaltyValidation(not violations, tuple(violations))


def check_penalty(Lambda, G=None):
    """Return ``Lambda`` as a float array or raise :class:`PenaltyError`."""
    report = validate(Lambda)
    if not report.valid:
        raise PenaltyError("invalid penalty matrix: " + "; ".join(report.violations), report.violations)
    Lambda = np.asarray(Lambda, dtype=float)
    if G is not None and Lambda.shape != (G, G):
        raise PenaltyError(f"penalty matrix must be {G}x{G}, got {Lambda.shape}")
    return Lambda


def row_sums(Lambda):
    """Column (equivalently row) sums of a symmetric penalty matrix."""
    return np.asarray(Lambda, dtype=float).sum(axis=0)


def uniform_penalty(G, lam, lam_f=0.0):
    """``lam * I + lam_f * (J - I)``: one ridge and one fusion penalty."""
    return lam * np.eye(G) + lam_f * (np.ones((G, G)) - np.eye(G))


def is_diagonal(Lambda):
    Lambda = np.asarray(Lambda)
    return not np.any(Lambda[~np.eye(len(Lambda), dtype=bool)])


@dataclass(frozen=True)
class PenaltyTemplate:
    """Penalty-graph template.

    ``assignment[i][j]`` is either a parameter name or the literal ``0``.
    ``log_scale`` marks which parameters the optimizer searches in log space.
    """

    params: tuple
    assignment: tuple
    log_scale: dict = field(default_factory=dict)
    class_names: tuple = None

    def __post_init__(self):
        assignment = tuple(tuple(row) for row in self.assignment)
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "params", tuple(self.params))
        G = len(assignment)
        if G == 0 or any(len(row) != G for row in assignment):
            raise PenaltyError("template assignment must be a non-empty square grid")
        for i, j in itertools.product(range(G), repeat=2):
            cell = assignment[i][j]
            if cell != assignment[j][i]:
                raise PenaltyError(f"template assignment asymmetric at ({i}, {j})")
            if cell == 0 or cell == "0":
                if i == j:
                    raise PenaltyError(f"diagonal cell {i} is a structural zero")
            elif cell not in self.params:
                raise PenaltyError(f"cell ({i}, {j}) names unknown parameter {cell!r}")
        if self.class_names is not None and len(self.class_names) != G:
            raise PenaltyError("class_names length does not match template size")
        log_scale = {name: bool(self.log_scale.get(name, True)) for name in self.params}
        object.__setattr__(self, "log_scale", log_scale)

    @property
    def G(self):
        return len(self.assignment)

    @property
    def ridge_params(self):
        return tuple(dict.fromkeys(self.assignment[g][g] for g in range(self.G)))

    @property
    def fusion_params(self):
        ridge = set(self.ridge_params)
        return tuple(p for p in self.params if p not in ridge)

    def instantiate(self, values):
        return instantiate(self, values)

    def to_dict(self):
        return {
            "params": list(self.params),
            "assignment": [[0 if c in (0, "0") else c for c in row] for row in self.assignment],
            "log_scale": dict(self.log_scale),
            "class_names": list(self.class_names) if self.class_names else None,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            assignment = [[0 if c in (0, "0", None) else str(c) for c in row] for row in doc["assignment"]]
            params = doc.get("params")
            if params is None:
                params = list(dict.fromkeys(c for row in assignment for c in row if c != 0))
            names = doc.get("class_names")
            return cls(tuple(params), assignment, dict(doc.get("log_scale", {})),
                       tuple(names) if names else None)
        except (KeyError, TypeError) as exc:
            raise PenaltyError(f"malformed penalty template: {exc}") from exc


def instantiate(template, values):
    """Fill a template with named parameter values to get a penalty matrix."""
    missing = [p for p in template.params if p not in values]
    if missing:
        raise PenaltyError(f"missing penalty parameter(s): {', '.join(missing)}")
    for name in template.params:
        v = float(values[name])
        if not np.isfinite(v):
            raise PenaltyError(f"parameter {name} is not finite")
        if name in template.ridge_params and v <= 0:
            raise PenaltyError(f"ridge parameter {name} must be positive, got {v}")
        if v < 0:
            raise PenaltyError(f"fusion parameter {name} must be non-negative, got {v}")
    G = template.G
    Lambda = np.zeros((G, G))
    for i, j in itertools.product(range(G), repeat=2):
        cell = template.assignment[i][j]
        if cell not in (0, "0"):
            Lambda[i, j] = float(values[cell])
    return check_penalty(Lambda)


def complete_template(G, ridge="shared", fusion="lambda_f", ridge_name="lambda"):
    """Complete penalty graph: every class pair fused with one parameter.

    ``ridge="separate"`` gives each class its own ridge parameter
    ``lambda_11, lambda_22, ...``.
    """
    if ridge == "shared":
        diag = [ridge_name] * G
    elif ridge == "separate":
        diag = [f"{ridge_name}_{g + 1}{g + 1}" for g in range(G)]
    else:
        raise InputError(f"ridge must be 'shared' or 'separate', got {ridge!r}")
    assignment = [[diag[i] if i == j else fusion for j in range(G)] for i in range(G)]
    params = list(dict.fromkeys(diag)) + ([fusion] if G > 1 else [])
    return PenaltyTemplate(tuple(params), assignment)


def factorial_template(factor_sizes, fuse_within_factor_names=None, ridge_name="lambda"):
    """Cartesian product of complete graphs, one per factor.

    Classes enumerate the factor levels in row-major order (first factor
    slowest). Two classes are fused with factor f's parameter iff they differ
    in factor f only; all other off-diagonal cells are structural zeros.
    """
    factor_sizes = [int(s) for s in factor_sizes]
    if not factor_sizes:
        raise InputError("at least one factor is required")
    if any(s < 1 for s in factor_sizes):
        raise InputError("factor sizes must be positive")
    names = list(fuse_within_factor_names or [])
    if not names:
        names = ["lambda_f"] if len(factor_sizes) == 1 else [f"lambda_f{k + 1}" for k in range(len(factor_sizes))]
    if len(names) != len(factor_sizes):
        raise InputError("need one fusion parameter name per factor")
    levels = list(itertools.product(*[range(s) for s in factor_sizes]))
    G = len(levels)
    assignment = [[0] * G for _ in range(G)]
    used = []
    for i in range(G):
        assignment[i][i] = ridge_name
        for j in range(G):
            if i == j:
                continue
            differs = [f for f in range(len(factor_sizes)) if levels[i][f] != levels[j][f]]
            if len(differs) == 1:
                name = names[differs[0]]
                assignment[i][j] = name
                if name not in used:
                    used.append(name)
    params = [ridge_name] + [n for n in names if n in used]
    return PenaltyTemplate(tuple(params), assignment)
