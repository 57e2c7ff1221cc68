import numpy as np
import pytest

from causalpairs import engine as E
from causalpairs.datagen import FunctionClass, GenConfig, GraphKind, generate_sample, substream
from causalpairs.engine import Tensor, grad_check
from causalpairs.regressors import (
    poly_features,
    KernelConfig,
    RidgeConfig,
    batched_ridge_mse,
    fusion_features,
    kernel_ridge_predict,
    median_bandwidth,
    ridge_fit_predict,
    ridge_mse,
)

RNG = np.random.default_rng(31415)


def test_config_validation():
    with pytest.raises(ValueError):
        RidgeConfig(lam=0.0)
    with pytest.raises(ValueError):
        KernelConfig(beta=-1.0)
    with pytest.raises(ValueError):
        KernelConfig(bandwidth=0.0)


def test_ridge_exact_linear_recovery():
    z = RNG.normal(size=(6, 6)) + np.eye(6)
    w0 = RNG.normal(size=(6, 2))
    pred, _ = ridge_fit_predict(z, z @ w0, 1e-12)
    rel = np.linalg.norm(pred.values - z @ w0) / np.linalg.norm(z @ w0)
    assert rel <= 1e-6


def test_ridge_null_target():
    z = RNG.normal(size=(5, 3))
    pred, weights = ridge_fit_predict(z, np.zeros((5, 2)), 0.1)
    np.testing.assert_allclose(weights.values, 0.0, atol=1e-12)
    np.testing.assert_allclose(pred.values, 0.0, atol=1e-12)


def test_ridge_hand_scalar_case():
    z = np.array([[1.0], [2.0], [3.0]])
    t = np.array([[2.0], [4.0], [6.0]])
    _, weights = ridge_fit_predict(z, t, 0.1)
    assert weights.values[0, 0] == pytest.approx(28.0 / 14.1, abs=1e-12)


def test_ridge_mse_perfect_fit_near_zero():
    z = RNG.normal(size=(8, 8)) + 2 * np.eye(8)
    t = z @ RNG.normal(size=(8, 3))
    assert float(ridge_mse(z, t, 1e-12).values) <= 1e-10


def test_ridge_mse_shrink_to_zero_limit():
    # with a huge ridge the prediction collapses and the MSE approaches the
    # mean squared row norm of the standardized target
    z = RNG.normal(size=(200, 4))
    t = RNG.normal(size=(200, 5))
    t = (t - t.mean(0)) / t.std(0)
    got = float(ridge_mse(z, t, 1e9).values)
    assert got == pytest.approx(5.0, rel=0.01)


def test_ridge_mse_row_permutation_invariant():
    z = RNG.normal(size=(12, 3))
    t = RNG.normal(size=(12, 2))
    perm = RNG.permutation(12)
    a = float(ridge_mse(z, t, 0.01).values)
    b = float(ridge_mse(z[perm], t[perm], 0.01).values)
    assert a == pytest.approx(b, rel=1e-12)


def test_ridge_mse_gradient():
    def f(ts):
        return ridge_mse(ts[0], ts[1], 0.05)

    err = grad_check(f, [Tensor(RNG.normal(size=(7, 3))), Tensor(RNG.normal(size=(7, 2)))])
    assert err <= 1e-4


def test_batched_ridge_matches_per_sample():
    z = RNG.normal(size=(4, 9, 3))
    t = RNG.normal(size=(4, 9, 2))
    batched = batched_ridge_mse(z, t, 0.01).values
    for i in range(4):
        assert batched[i] == pytest.approx(float(ridge_mse(z[i], t[i], 0.01).values), rel=1e-10)


def test_kernel_ridge_large_beta_goes_to_zero():
    zb = RNG.normal(size=(6, 3))
    t = RNG.normal(size=(6, 2))
    out = kernel_ridge_predict(zb, t, KernelConfig(beta=1e9))
    np.testing.assert_allclose(out.values, 0.0, atol=1e-6)


def test_kernel_ridge_small_beta_interpolates():
    zb = RNG.normal(size=(7, 3))
    t = RNG.normal(size=(7, 2))
    out = kernel_ridge_predict(zb, t, KernelConfig(beta=1e-10))
    assert np.max(np.abs(out.values - t)) <= 1e-6


def test_kernel_ridge_identical_rows_shrunk_mean():
    zb = np.tile(RNG.normal(size=(1, 3)), (5, 1))
    t = RNG.normal(size=(5, 2))
    out = kernel_ridge_predict(zb, t, KernelConfig(beta=0.5, bandwidth=1.0))
    # rank-one gram: every output row equals the shrunk mean response
    expected = 5.0 / (5.0 + 0.5) * t.mean(axis=0)
    for row in out.values:
        np.testing.assert_allclose(row, expected, atol=1e-9)


def test_kernel_ridge_matches_dense_inverse_oracle():
    zb = RNG.normal(size=(6, 3))
    t = RNG.normal(size=(6, 3))
    beta = 0.02
    bw = median_bandwidth(zb)
    out = kernel_ridge_predict(zb, t, KernelConfig(beta=beta))
    sq = np.sum(zb * zb, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2 * zb @ zb.T
    k = np.exp(-np.maximum(d2, 0) / (2 * bw * bw))
    oracle = k @ np.linalg.inv(k + beta * np.eye(6)) @ t
    assert np.max(np.abs(out.values - oracle)) <= 1e-10


def test_kernel_ridge_adversary_gradient():
    yf = RNG.normal(size=(5, 3))

    def f(ts):
        pred = kernel_ridge_predict(ts[0], Tensor(yf), KernelConfig(beta=0.1, bandwidth=1.2))
        return E.frobenius_sq(E.sub(Tensor(yf), pred))

    assert grad_check(f, [Tensor(RNG.normal(size=(5, 4)))]) <= 1e-4


def test_fusion_arithmetic():
    out = fusion_features(Tensor(np.asarray(0.2)), Tensor(np.asarray(0.8)))
    np.testing.assert_allclose(out.values, [0.2, 0.8, 0.25])


def test_fusion_symmetry_and_degenerate():
    out = fusion_features(Tensor(np.asarray(0.7)), Tensor(np.asarray(0.7)))
    assert out.values[2] == pytest.approx(1.0)
    out = fusion_features(Tensor(np.asarray(0.0)), Tensor(np.asarray(0.0)))
    np.testing.assert_allclose(out.values, [0.0, 0.0, 1.0])


def test_poly_features_shape_and_content():
    m = RNG.normal(size=(4, 2))
    out = poly_features(m, degree=3)
    assert out.shape == (4, 6)
    np.testing.assert_allclose(out[:, 2:4], m**2)


def test_causal_direction_mse_asymmetry():
    """Low-noise forward models have smaller regression error in the causal
    direction for most samples (identity encoder, monomial basis)."""
    cfg = GenConfig(seed=6, noise_var_high=0.01)
    wins = {FunctionClass.HADAMARD: 0, FunctionClass.BILINEAR: 0}
    trials = 500
    for func in wins:
        for i in range(trials):
            s = generate_sample(GraphKind.G1, func, cfg, np.random.default_rng(substream(777, i)))
            fwd = float(ridge_mse(poly_features(s.x), s.y, 1e-3).values)
            rev = float(ridge_mse(poly_features(s.y), s.x, 1e-3).values)
            wins[func] += fwd <= rev
    for func, w in wins.items():
        assert w / trials >= 0.70, (func, w / trials)
