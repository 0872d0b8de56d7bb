import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusedridge.core import frobenius_loss, gaussian_loglik, ridge_update
from fusedridge.errors import FoldError, InputError
from fusedridge.estimator import ClassData, fit
from fusedridge.penalty import PenaltyTemplate, complete_template, uniform_penalty
from fusedridge.selection import (
    cv_score, fkl_bias_terms, fkl_score, kcv_score, loocv_plan, loocv_score, make_fold_plan,
    optimize_penalties, sloocv_score,
)
from fusedridge.sim import banded_precision, sample_mvn


def make_data(rng, sizes, p, Sigma=None):
    Sigma = np.eye(p) if Sigma is None else Sigma
    return [ClassData.from_samples(sample_mvn(n, Sigma, rng)) for n in sizes]


def direct_loo_single(Y, lam, T):
    """Leave-one-out score of the single-class ridge estimator, computed naively."""
    total = 0.0
    for i in range(len(Y)):
        Yt = np.delete(Y, i, axis=0)
        mu = Yt.mean(axis=0)
        Yt = Yt - mu
        Om = ridge_update(Yt.T @ Yt / len(Yt), T, lam / len(Yt))
        y = Y[i] - mu
        total += -np.linalg.slogdet(Om)[1] + y @ Om @ y
    return total / len(Y)


# fold plans

@settings(max_examples=40, deadline=None)
@given(sizes=st.lists(st.integers(2, 30), min_size=1, max_size=4), K=st.integers(2, 10),
       seed=st.integers(0, 1000))
def test_fold_plan_partitions(sizes, K, seed):
    K = min(K, max(sizes))
    plan = make_fold_plan(sizes, K, seed)
    assert plan.K == K
    for n, folds in zip(sizes, plan.folds):
        idx = np.concatenate(folds)
        assert np.array_equal(np.sort(idx), np.arange(n))
        lens = [len(f) for f in folds]
        assert max(lens) - min(lens) <= 1
    again = make_fold_plan(sizes, K, seed)
    assert all(np.array_equal(a, b) for fa, fb in zip(plan.folds, again.folds) for a, b in zip(fa, fb))


def test_fold_plan_errors():
    with pytest.raises(FoldError):
        make_fold_plan([3, 4], 1)
    with pytest.raises(FoldError):
        make_fold_plan([3, 4], 5)


# K-fold and leave-one-out

def test_kcv_with_loo_plan_equals_loocv_exactly():
    rng = np.random.default_rng(0)
    data = make_data(rng, [6, 6], 3)
    L = uniform_penalty(2, 1.2, 0.8)
    T = [np.eye(3)] * 2
    a = kcv_score(L, data, T, plan=loocv_plan([6, 6]))
    b = loocv_score(L, data, T)
    assert a.value == b.value


def test_loocv_single_class_matches_direct():
    rng = np.random.default_rng(2)
    data = make_data(rng, [9], 4)
    T = [0.7 * np.eye(4)]
    for lam in (0.1, 2.0, 30.0):
        sc = loocv_score(np.array([[lam]]), data, T)
        assert sc.value == pytest.approx(direct_loo_single(data[0].Y, lam, T[0]), rel=1e-10)


def test_kcv_duplication_oracle():
    rng = np.random.default_rng(3)
    base = make_data(rng, [8, 10], 3)
    L = uniform_penalty(2, 1.5, 0.5)
    T = [np.eye(3)] * 2
    dup = [ClassData.from_samples(np.vstack([d.Y, d.Y])) for d in base]
    plan = make_fold_plan([16, 20], 2)
    plan = type(plan)(tuple((np.arange(d.n), np.arange(d.n, 2 * d.n)) for d in base))
    sc = kcv_score(L, dup, T, plan=plan)
    est = fit(base, L, T)
    insample = np.mean([d.n * (-np.linalg.slogdet(O)[1] + np.sum(d.S * O))
                        for d, O in zip(base, est.omegas)])
    # equality up to the fitting tolerance
    assert sc.value == pytest.approx(insample, rel=1e-6)
    assert sc.per_fold_terms[0] == pytest.approx(sc.per_fold_terms[1], rel=1e-6)


def test_kcv_requires_raw_data_and_training_samples():
    with pytest.raises(InputError):
        kcv_score(np.eye(1), [ClassData(np.eye(2), 4)], [np.eye(2)], K=2)
    rng = np.random.default_rng(4)
    data = make_data(rng, [1, 4], 2)
    with pytest.raises(FoldError):
        loocv_score(uniform_penalty(2, 1, 1), data, [np.eye(2)] * 2)


def test_scores_are_reproducible():
    rng = np.random.default_rng(5)
    data = make_data(rng, [10, 12], 3)
    L, T = uniform_penalty(2, 1.0, 1.0), [np.eye(3)] * 2
    assert kcv_score(L, data, T, K=3, seed=9).value == kcv_score(L, data, T, K=3, seed=9).value


# special leave-one-out

def test_sloocv_equals_loocv_for_one_class():
    rng = np.random.default_rng(6)
    data = make_data(rng, [11], 4)
    for lam in (0.05, 1.0, 20.0):
        L = np.array([[lam]])
        a = sloocv_score(L, data, [np.eye(4)]).value
        b = loocv_score(L, data, [np.eye(4)]).value
        assert a == pytest.approx(b, rel=1e-10)


def test_sloocv_close_to_loocv_for_large_classes():
    rng = np.random.default_rng(7)
    data = make_data(rng, [200, 200], 5, banded_precision(5, 2))
    L = uniform_penalty(2, 2.0, 5.0)
    T = [np.eye(5)] * 2
    a = sloocv_score(L, data, T).value
    b = loocv_score(L, data, T).value
    assert abs(a - b) / abs(b) < 0.02


def test_sloocv_without_fusion_is_decoupled():
    rng = np.random.default_rng(8)
    data = make_data(rng, [7, 9], 3)
    L = np.diag([0.6, 2.5])
    T = [np.eye(3), 0.3 * np.eye(3)]
    ref = sum(direct_loo_single(d.Y, L[g, g], T[g]) * d.n for g, d in enumerate(data)) / 16
    assert sloocv_score(L, data, T).value == pytest.approx(ref, rel=1e-10)


# fused Kullback-Leibler score

def test_fkl_bias_matches_explicit_powers():
    rng = np.random.default_rng(9)
    for p in (1, 5, 20):
        X = rng.standard_normal((p, p))
        O = X @ X.T / p + 0.5 * np.eye(p)
        Y = rng.standard_normal((15, p))
        O2 = O @ O
        O3, O4 = O2 @ O, O2 @ O2
        for s in (1.0, -1.0):
            ref = [y @ (O2 - O) @ y + s * 0.37 * y @ (O4 - O3) @ y for y in Y]
            np.testing.assert_allclose(fkl_bias_terms(O, Y, 0.37, s), ref, rtol=1e-9, atol=1e-9)


def test_fkl_bias_vanishes_trivially():
    assert np.all(fkl_bias_terms(np.eye(3) * 2, np.zeros((4, 3)), 1.0) == 0)
    assert np.all(fkl_bias_terms(np.eye(3), np.ones((4, 3)), 5.0) == 0)


def test_fkl_zero_rows_give_insample_score():
    p = 3
    Y = np.zeros((4, p))
    data = [ClassData(np.zeros((p, p)), 4, Y), ClassData(np.zeros((p, p)), 4, Y)]
    L, T = uniform_penalty(2, 1.0, 1.0), [np.eye(p)] * 2
    est = fit(data, L, T)
    loglik = sum(gaussian_loglik(O, d.S, d.n) for O, d in zip(est.omegas, data))
    assert fkl_score(L, data, T).value == pytest.approx(-loglik / 8, rel=1e-12)


def test_cv_score_dispatch():
    rng = np.random.default_rng(10)
    data = make_data(rng, [6, 6], 2)
    L, T = uniform_penalty(2, 1.0, 1.0), [np.eye(2)] * 2
    assert cv_score("LOOCV", L, data, T).method == "loocv"
    assert cv_score("fkl", L, data, T).method == "fkl"
    with pytest.raises(InputError):
        cv_score("gcv", L, data, T)


# penalty search

def test_budget_one_returns_start():
    rng = np.random.default_rng(11)
    data = make_data(rng, [6, 6], 3)
    res = optimize_penalties(complete_template(2), data, [np.eye(3)] * 2, method="sloocv",
                             start={"lambda": 0.3, "lambda_f": 7.0}, budget=1)
    assert res.values == pytest.approx({"lambda": 0.3, "lambda_f": 7.0}, rel=1e-12)
    assert res.evaluations == 1 and not res.converged


def test_structural_zero_never_searched():
    rng = np.random.default_rng(12)
    data = make_data(rng, [6, 6, 6], 2)
    tmpl = PenaltyTemplate.from_dict({"assignment": [["lambda", "lambda_f", 0],
                                                     ["lambda_f", "lambda", "lambda_f"],
                                                     [0, "lambda_f", "lambda"]]})
    res = optimize_penalties(tmpl, data, [np.eye(2)] * 3, method="sloocv", budget=30)
    assert res.Lambda[0, 2] == 0 and res.Lambda[2, 0] == 0
    assert all(set(v) == {"lambda", "lambda_f"} for v, _ in res.trace)


def test_optimizer_is_deterministic():
    rng = np.random.default_rng(13)
    data = make_data(rng, [8, 8], 3)
    args = (complete_template(2), data, [np.eye(3)] * 2)
    a = optimize_penalties(*args, method="kcv", K=4, seed=2, budget=25)
    b = optimize_penalties(*args, method="kcv", K=4, seed=2, budget=25)
    assert a.trace == b.trace


def test_single_class_selection_is_local_optimum():
    rng = np.random.default_rng(14)
    data = make_data(rng, [20], 10, np.linalg.inv(banded_precision(10, 2)))
    T = [np.eye(10)]
    res = optimize_penalties(PenaltyTemplate(("lambda",), [["lambda"]]), data, T, method="loocv")
    lam = res.values["lambda"]
    assert np.isfinite(lam) and lam > 0
    best = res.score.value
    for factor in (0.1, 10.0):
        assert best <= loocv_score(np.array([[lam * factor]]), data, T).value


def test_pooled_selection_near_grid_oracle():
    # identical classes, common target: the pooled special case
    rng = np.random.default_rng(15)
    p, n = 10, 25
    Omega = banded_precision(p, 2)
    Sigma = np.linalg.inv(Omega)
    grid = np.logspace(-2, 2.5, 20)
    sel_losses, grid_losses = [], []
    tmpl = PenaltyTemplate(("lambda",), [["lambda"]])
    for _ in range(20):
        d = ClassData.from_samples(np.vstack([sample_mvn(n, Sigma, rng), sample_mvn(n, Sigma, rng)]))
        T = [np.eye(p) * p / np.trace(d.S)]
        res = optimize_penalties(tmpl, [d], T, method="loocv")
        sel_losses.append(frobenius_loss(ridge_update(d.S, T[0], res.values["lambda"] / d.n), Omega))
        grid_losses.append([frobenius_loss(ridge_update(d.S, T[0], g / d.n), Omega) for g in grid])
    oracle = np.median(np.array(grid_losses), axis=0).min()
    assert np.median(sel_losses) <= 1.1 * oracle


def test_fusion_larger_for_identical_classes():
    p, n = 30, 10
    near = np.linalg.inv(banded_precision(p, 15))
    far = np.linalg.inv(banded_precision(p, 2))
    wins = 0
    for r in range(20):
        rng = np.random.default_rng(100 + r)
        chosen = []
        for sigmas in ((near, near), (near, far)):
            data = [ClassData.from_samples(sample_mvn(n, S, rng)) for S in sigmas]
            S_pool = (data[0].S + data[1].S) / 2
            T = [np.eye(p) * p / np.trace(S_pool)] * 2
            res = optimize_penalties(complete_template(2), data, T, method="loocv", budget=100)
            chosen.append(res.values["lambda_f"])
        wins += chosen[0] > chosen[1]
    assert wins >= 16
