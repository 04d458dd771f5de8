import numpy as np
import pytest

from dflab.core import DataSet, InvalidInputError, SingularDesignError
from dflab.smoothers import (
    ConstantProcedure,
    KnnProcedure,
    OlsProcedure,
    RidgeProcedure,
    analytic_ridge_df,
    fit_knn,
    fit_ols,
    fit_ridge,
)


def _gaussian_data(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    return DataSet(X, y)


def test_ols_identity_design():
    data = DataSet(np.eye(4), np.array([1.0, -2.0, 0.5, 3.0]))
    out = fit_ols(data)
    assert np.allclose(out.smoother.matrix, np.eye(4), atol=1e-12)
    assert out.smoother.trace == pytest.approx(4.0)
    assert np.allclose(out.fitted, data.y)


def test_ols_constant_column_is_mean():
    data = DataSet(np.ones((6, 1)), np.arange(6.0))
    out = fit_ols(data)
    assert np.allclose(out.fitted, 2.5)
    assert out.smoother.trace == pytest.approx(1.0, abs=1e-10)


def test_ols_trace_equals_rank():
    data = _gaussian_data(100, 5)
    out = fit_ols(data)
    assert out.smoother.trace == pytest.approx(5.0, abs=1e-8)
    # cross-check against the SVD projector built directly
    U = np.linalg.svd(data.X, full_matrices=False)[0]
    assert np.allclose(out.smoother.matrix, U @ U.T, atol=1e-9)


def test_ols_rejects_rank_deficiency():
    X = np.ones((10, 2))
    with pytest.raises(SingularDesignError):
        fit_ols(DataSet(X, np.zeros(10)))


def test_ols_projection_symmetric_idempotent():
    S = fit_ols(_gaussian_data(40, 3)).smoother.matrix
    assert np.abs(S - S.T).max() < 1e-10
    assert np.abs(S @ S - S).max() < 1e-7


def test_ridge_matches_analytic_df():
    data = _gaussian_data(50, 8, seed=3)
    lam = 2.5
    out = fit_ridge(data, lam)
    d = np.linalg.svd(data.X, compute_uv=False)
    assert out.smoother.trace == pytest.approx(analytic_ridge_df(d, lam), abs=1e-8)


def test_ridge_zero_is_ols():
    data = _gaussian_data(30, 4, seed=1)
    assert np.allclose(fit_ridge(data, 0.0).fitted, fit_ols(data).fitted, atol=1e-8)
    with pytest.raises(SingularDesignError):
        fit_ridge(DataSet(np.ones((5, 2)), np.zeros(5)), 0.0)


def test_ridge_huge_penalty_kills_df():
    data = _gaussian_data(30, 4, seed=2)
    assert fit_ridge(data, 1e12).smoother.trace < 1e-6


def test_analytic_ridge_df_hand_values():
    assert analytic_ridge_df([2.0, 1.0], 1.0) == pytest.approx(1.3)
    assert analytic_ridge_df([1.0, 1.0, 1.0, 1.0], 1.0) == pytest.approx(2.0)
    assert analytic_ridge_df([3.0, 1.0, 0.0], 0.0) == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        analytic_ridge_df([1.0], -0.5)


def test_knn_extremes():
    data = _gaussian_data(20, 2, seed=4)
    out1 = fit_knn(data, 1)
    assert np.allclose(out1.fitted, data.y)
    assert out1.smoother.trace == pytest.approx(20.0)
    outn = fit_knn(data, 20)
    assert np.allclose(outn.fitted, data.y.mean())
    assert outn.smoother.trace == pytest.approx(1.0)


def test_knn_trace_is_n_over_k():
    data = _gaussian_data(100, 3, seed=5)
    assert fit_knn(data, 4).smoother.trace == pytest.approx(25.0)


def test_knn_rows_are_k_entries_of_one_over_k():
    data = _gaussian_data(15, 2, seed=6)
    k = 4
    S = fit_knn(data, k).smoother.matrix
    assert np.allclose(S.sum(axis=1), 1.0)
    for row in S:
        nz = row[row != 0]
        assert nz.size == k
        assert np.allclose(nz, 1.0 / k)


def test_knn_k_out_of_range():
    data = _gaussian_data(10, 1)
    with pytest.raises(InvalidInputError):
        fit_knn(data, 0)
    with pytest.raises(InvalidInputError):
        fit_knn(data, 11)


def test_constant_procedure_is_rank_one_average():
    data = _gaussian_data(12, 1, seed=7)
    out = ConstantProcedure().fit(data)
    assert np.allclose(out.fitted, data.y.mean())
    assert out.smoother.trace == pytest.approx(1.0)


def test_procedures_declare_linear_smoother():
    for proc in (OlsProcedure(), RidgeProcedure(lam=0.5), KnnProcedure(k=3),
                 ConstantProcedure()):
        assert proc.linear_smoother
        out = proc.fit(_gaussian_data(25, 2, seed=8))
        # S must reproduce the fit on the data it was built from
        assert np.allclose(out.smoother.apply(_gaussian_data(25, 2, seed=8).y),
                           out.fitted, atol=1e-8)
