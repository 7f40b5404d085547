"""Two-level GP: closed-form fits against dense formulas, search, recovery."""

import numpy as np
import pytest

from vibefuse.errors import FitError
from vibefuse.multilevel_gp import (
    GPFitConfig,
    KernelParams,
    PSOConfig,
    fit_level,
    fit_level_fixed,
    fit_two_level,
    kernel_matrix,
    load_two_level,
    predict_level,
    predict_low_level,
    predict_two_level,
    pso_minimize,
    save_two_level,
)


def toy_fit(n=9, d=2, m=2, seed=0, jitter=1e-8):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n, m))
    y = np.hstack(
        [np.sin(3.0 * x[:, :1]) + x[:, 1:2], np.cos(2.0 * x[:, :1] * x[:, 1:2])]
    )[:, :d]
    kernel = KernelParams(np.array([4.0, 7.0][:m]), jitter)
    return x, y, kernel


def test_kernel_matrix_by_hand():
    xa = np.array([[0.0, 0.0], [1.0, 2.0]])
    xb = np.array([[1.0, 0.0]])
    b = np.array([0.5, 2.0])
    k = kernel_matrix(xa, xb, b)
    expect = np.exp(-np.array([[0.5 * 1.0], [0.5 * 0.0 + 2.0 * 4.0]]))
    np.testing.assert_allclose(k, expect, rtol=1e-14)
    kd = kernel_matrix(xa, xa, b)
    np.testing.assert_allclose(np.diag(kd), 1.0)
    np.testing.assert_allclose(kd, kd.T)


def test_fit_level_fixed_matches_dense_formulas():
    x, y, kernel = toy_fit()
    fit = fit_level_fixed(x, y, kernel)

    n, d = y.shape
    sigma = kernel_matrix(x, x, kernel.roughness) + kernel.jitter * np.eye(n)
    h = np.hstack([np.ones((n, 1)), x])
    si = np.linalg.inv(sigma)
    beta = np.linalg.solve(h.T @ si @ h, h.T @ si @ y)
    resid = y - h @ beta
    q = resid.T @ si @ resid / n
    loglik = -0.5 * (
        d * np.linalg.slogdet(sigma)[1] + n * np.linalg.slogdet(q)[1]
    )
    np.testing.assert_allclose(fit.beta, beta, atol=1e-10)
    np.testing.assert_allclose(fit.q_mat, q, atol=1e-12)
    assert fit.loglik == pytest.approx(loglik, abs=1e-8)


def test_predict_level_matches_dense_formulas():
    x, y, kernel = toy_fit()
    fit = fit_level_fixed(x, y, kernel)
    x_star = np.array([[0.3, 0.6], [0.9, 0.1]])
    mean, svar = predict_level(fit, x_star)

    n = x.shape[0]
    sigma = kernel_matrix(x, x, kernel.roughness) + kernel.jitter * np.eye(n)
    si = np.linalg.inv(sigma)
    h = np.hstack([np.ones((n, 1)), x])
    hs = np.hstack([np.ones((2, 1)), x_star])
    k = kernel_matrix(x_star, x, kernel.roughness)
    mean_ref = hs @ fit.beta + k @ si @ (y - h @ fit.beta)
    u = hs - k @ si @ h
    svar_ref = (
        1.0
        + kernel.jitter
        - np.sum(k @ si * k, axis=1)
        + np.sum(u @ np.linalg.inv(h.T @ si @ h) * u, axis=1)
    )
    np.testing.assert_allclose(mean, mean_ref, atol=1e-10)
    np.testing.assert_allclose(svar, svar_ref, atol=1e-10)


def test_predict_interpolates_training_rows():
    x, y, kernel = toy_fit(jitter=0.0)
    fit = fit_level_fixed(x, y, KernelParams(kernel.roughness, 1e-10))
    mean, svar = predict_level(fit, x)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    assert np.all(svar < 1e-6)


def test_gls_recovers_linear_mean():
    rng = np.random.default_rng(4)
    x = rng.uniform(0.0, 1.0, size=(20, 2))
    coeffs = np.array([[1.5, 2.5], [-3.0, 0.5], [0.25, 1.0]])
    y = np.hstack([np.ones((20, 1)), x]) @ coeffs
    y += 1e-6 * rng.standard_normal(y.shape)
    # a short length scale keeps the kernel from soaking up the trend
    fit = fit_level_fixed(x, y, KernelParams([100.0, 100.0], 1e-6))
    np.testing.assert_allclose(fit.beta, coeffs, atol=1e-4)


def test_fit_rejects_too_few_rows_for_responses():
    rng = np.random.default_rng(2)
    x = rng.uniform(0.0, 1.0, size=(3, 1))
    y = rng.standard_normal((3, 5))
    with pytest.raises(FitError, match="positive definite"):
        fit_level_fixed(x, y, KernelParams([1.0], 1e-8))


def test_kernel_params_validation():
    with pytest.raises(ValueError, match="roughness"):
        KernelParams(np.array([1.0, 0.0]))
    with pytest.raises(ValueError, match="jitter"):
        KernelParams(np.array([1.0]), jitter=-1e-3)


def test_pso_finds_quadratic_minimum():
    fn = lambda z: (z[0] - 0.3) ** 2 + (z[1] + 0.2) ** 2
    cfg = PSOConfig(particles=15, iterations=60, seed=1)
    best, val = pso_minimize(fn, [-1.0, -1.0], [1.0, 1.0], cfg)
    np.testing.assert_allclose(best, [0.3, -0.2], atol=1e-2)
    assert val < 1e-3


def test_pso_clamps_to_box_and_handles_nan():
    # unconstrained minimum sits outside the box; nan regions are skipped
    def fn(z):
        if z[0] < 0.0:
            return np.nan
        return (z[0] - 5.0) ** 2

    best, val = pso_minimize(fn, [-1.0], [1.0], PSOConfig(particles=8, iterations=40, seed=0))
    np.testing.assert_allclose(best, [1.0], atol=1e-9)


def test_pso_deterministic_and_validated():
    fn = lambda z: float(np.sum(z * z))
    cfg = PSOConfig(particles=6, iterations=15, seed=9)
    a = pso_minimize(fn, [-2.0, -2.0], [2.0, 2.0], cfg)
    b = pso_minimize(fn, [-2.0, -2.0], [2.0, 2.0], cfg)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]
    with pytest.raises(ValueError, match="lo < hi"):
        pso_minimize(fn, [0.0], [0.0], cfg)
    with pytest.raises(ValueError, match="particles"):
        PSOConfig(particles=0).validate()
    with pytest.raises(ValueError, match="inertia"):
        PSOConfig(inertia=1.0).validate()


def test_fit_level_segment_pair_grouping_ties_roughness():
    rng = np.random.default_rng(6)
    x = rng.uniform(0.0, 1.0, size=(14, 4))
    y = np.sin(x @ np.array([[2.0], [1.0], [3.0], [0.5]]))
    cfg = GPFitConfig(
        grouping="segment_pairs",
        pso=PSOConfig(particles=6, iterations=10, seed=0),
        polish=False,
    )
    fit = fit_level(x, y, cfg)
    b = fit.kernel.roughness
    assert b[0] == b[1] and b[2] == b[3]

    cfg_odd = GPFitConfig(grouping="segment_pairs")
    with pytest.raises(ValueError, match="even"):
        fit_level(x[:, :3], y, cfg_odd)


def test_config_validation():
    with pytest.raises(ValueError, match="roughness"):
        GPFitConfig(roughness_lo=0.0).validate()
    with pytest.raises(ValueError, match="grouping"):
        GPFitConfig(grouping="shared").validate()
    with pytest.raises(ValueError, match="rho_bound"):
        GPFitConfig(rho_bound=0.0).validate()


def test_two_level_recovers_scale_and_shift():
    """y_hf = 2 y_lf + 3 makes the ideal level-2 scale factor exactly 2."""
    rng = np.random.default_rng(0)
    x_lf = np.sort(rng.uniform(0.0, 1.0, 25))[:, None]
    lf = lambda x: np.hstack([np.sin(2.0 * x), np.cos(3.0 * x)])
    hf = lambda x: 2.0 * lf(x) + 3.0
    y_lf = lf(x_lf)
    hf_ids = np.arange(0, 24, 2)
    y_hf = hf(x_lf[hf_ids]) + 1e-6 * rng.standard_normal((len(hf_ids), 2))

    cfg = GPFitConfig(pso=PSOConfig(particles=10, iterations=40, seed=3))
    model = fit_two_level(x_lf, y_lf, x_lf[hf_ids], y_hf, y_lf[hf_ids], cfg)
    assert model.rho == pytest.approx(2.0, abs=1e-3)

    xt = rng.uniform(0.05, 0.95, 15)[:, None]
    mean, var = predict_two_level(model, xt)
    np.testing.assert_allclose(mean, hf(xt), atol=1e-3)
    assert np.all(var >= 0.0)
    np.testing.assert_allclose(predict_low_level(model, xt), lf(xt), atol=1e-3)


def test_two_level_validates_alignment():
    cfg = GPFitConfig()
    x = np.zeros((4, 1))
    y = np.ones((4, 2))
    with pytest.raises(ValueError, match="align"):
        fit_two_level(x, y, x[:2], y[:2], y[:3], cfg)


def test_save_load_roundtrip_identical_predictions(tmp_path):
    rng = np.random.default_rng(5)
    x_lf = rng.uniform(0.0, 1.0, size=(16, 2))
    y_lf = np.hstack([np.sin(3.0 * x_lf[:, :1]), x_lf[:, 1:] ** 2])
    hf_ids = np.arange(8)
    y_hf = 1.3 * y_lf[hf_ids] + 0.2 + 1e-6 * rng.standard_normal((8, 2))
    cfg = GPFitConfig(pso=PSOConfig(particles=8, iterations=15, seed=2), polish=False)
    model = fit_two_level(x_lf, y_lf, x_lf[hf_ids], y_hf, y_lf[hf_ids], cfg)

    path = tmp_path / "gp.json"
    save_two_level(model, path)
    back = load_two_level(path)
    assert back.rho == model.rho
    assert back.grouping == model.grouping
    xt = rng.uniform(0.0, 1.0, size=(7, 2))
    m0, v0 = predict_two_level(model, xt)
    m1, v1 = predict_two_level(back, xt)
    np.testing.assert_array_equal(m0, m1)
    np.testing.assert_array_equal(v0, v1)
