import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusedridge.errors import PenaltyError
from fusedridge.penalty import (
    PenaltyTemplate, complete_template, factorial_template, instantiate, row_sums, validate,
)


def test_validate_examples():
    assert validate([[1, 0], [0, 1]]).valid
    r = validate([[1, -0.1], [-0.1, 1]])
    assert not r.valid and "negative fusion penalty" in r.violations
    r = validate([[0, 1], [1, 1]])
    assert not r.valid and any("ridge" in v for v in r.violations)


def test_validate_reports_every_clause():
    r = validate([[-1, 2], [-3, 1]])
    assert {"asymmetric", "negative fusion penalty"} <= set(r.violations)
    assert any("ridge" in v for v in r.violations)
    assert validate([[np.inf]]).violations == ("non-finite entry",)


def test_example1_separate_ridge():
    t = complete_template(2, ridge="separate")
    L = instantiate(t, {"lambda_11": 2, "lambda_22": 3, "lambda_f": 0.5})
    np.testing.assert_array_equal(L, [[2, 0.5], [0.5, 3]])


def test_factorial_two_by_three_pattern():
    t = factorial_template((2, 3), ("lambda_ST", "lambda_DS"))
    L = instantiate(t, {"lambda": 1.0, "lambda_DS": 0.1, "lambda_ST": 0.01})
    a, d, s = 1.0, 0.1, 0.01
    expected = np.array([
        [a, d, d, s, 0, 0],
        [d, a, d, 0, s, 0],
        [d, d, a, 0, 0, s],
        [s, 0, 0, a, d, d],
        [0, s, 0, d, a, d],
        [0, 0, s, d, d, a],
    ])
    np.testing.assert_array_equal(L, expected)
    np.testing.assert_allclose(row_sums(L), 1.21)


def test_factorial_single_factor_is_complete():
    t = factorial_template((2,))
    assert t.params == ("lambda", "lambda_f")
    np.testing.assert_array_equal(instantiate(t, {"lambda": 1, "lambda_f": 2}), [[1, 2], [2, 1]])


def test_single_class():
    t = factorial_template((1,))
    assert t.params == ("lambda",)
    np.testing.assert_array_equal(instantiate(t, {"lambda": 1}), [[1]])


def test_instantiate_errors():
    t = complete_template(2)
    with pytest.raises(PenaltyError):
        instantiate(t, {"lambda": 1.0})
    with pytest.raises(PenaltyError):
        instantiate(t, {"lambda": 0.0, "lambda_f": 1.0})
    with pytest.raises(PenaltyError):
        instantiate(t, {"lambda": 1.0, "lambda_f": -1.0})


def test_template_structural_zero_and_roundtrip():
    # chain A - B - C with A and C never fused directly
    t = PenaltyTemplate.from_dict({"assignment": [["lambda", "lambda_f", 0],
                                                  ["lambda_f", "lambda", "lambda_f"],
                                                  [0, "lambda_f", "lambda"]]})
    assert t.params == ("lambda", "lambda_f")
    assert t.fusion_params == ("lambda_f",)
    L = instantiate(t, {"lambda": 1, "lambda_f": 2})
    assert L[0, 2] == 0
    assert PenaltyTemplate.from_dict(t.to_dict()) == t


def test_template_rejects_zero_diagonal_and_asymmetry():
    with pytest.raises(PenaltyError):
        PenaltyTemplate(("a",), [[0, "a"], ["a", "a"]])
    with pytest.raises(PenaltyError):
        PenaltyTemplate(("a", "b"), [["a", "a"], ["b", "a"]])


def test_row_sums_examples():
    np.testing.assert_array_equal(row_sums([[2, 0.5], [0.5, 3]]), [2.5, 3.5])
    np.testing.assert_array_equal(row_sums(np.diag([1.0, 4.0])), [1, 4])


@settings(max_examples=50, deadline=None)
@given(sizes=st.lists(st.integers(1, 3), min_size=1, max_size=3),
       vals=st.lists(st.floats(1e-6, 1e6), min_size=4, max_size=4))
def test_factorial_instantiation_is_valid(sizes, vals):
    t = factorial_template(sizes)
    values = dict(zip(t.params, vals))
    L = instantiate(t, values)
    assert validate(L).valid
    rs = row_sums(L)
    assert np.all(rs >= np.diag(L))
    lonely = np.all(L - np.diag(np.diag(L)) == 0, axis=0)
    np.testing.assert_array_equal(rs[lonely], np.diag(L)[lonely])
    assert np.all(rs[~lonely] > np.diag(L)[~lonely])


def test_factorial_empty():
    with pytest.raises(Exception):
        factorial_template(())
