import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import cholesky

from gcgp.bench import kernel_oracle
from gcgp.errors import NumericalError, ValidationError
from gcgp.kernels import (GraphView, KernelConfig, KernelDiagnostics, arcsine_entry, arcsine_from_gram,
                          arcsine_kernel, cross_covariance, dot_product_kernel, self_covariance)

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)
vec3 = st.lists(finite, min_size=3, max_size=3).map(np.array)


def scalar_arcsine(a, b, beta, sw2=1.0, scale=1.0):
    s = lambda u, v: sw2 * scale * sum(x * y for x, y in zip(u, v)) + beta
    return 2 / math.pi * math.asin(2 * s(a, b) / math.sqrt((1 + 2 * s(a, a)) * (1 + 2 * s(b, b))))


def dense_propagate(A, X, k):
    n = len(A)
    At = A + np.eye(n)
    dinv = 1 / np.sqrt(At.sum(axis=1))
    A_hat = At * dinv[:, None] * dinv[None, :]
    for _ in range(k):
        X = A_hat @ X
    return X


def test_zero_inputs_give_one_third():
    assert arcsine_entry(np.zeros(4), np.zeros(4), KernelConfig(beta=0.5)) == pytest.approx(1 / 3, abs=1e-15)


def test_vanishing_bias_gives_zero():
    assert abs(arcsine_entry(np.zeros(3), np.zeros(3), KernelConfig(beta=1e-14))) < 1e-13


def test_feature_scale_defaults_to_inverse_dimension():
    x, y = np.array([1.0, 2.0, -1.0, 0.5]), np.array([0.3, -1.0, 2.0, 1.0])
    assert arcsine_entry(x, y, KernelConfig(beta=0.2)) == pytest.approx(scalar_arcsine(x, y, 0.2, scale=0.25))
    assert arcsine_entry(x, y, KernelConfig(beta=0.2, feature_scale=1.0, sigma_w2=2.0)) == pytest.approx(
        scalar_arcsine(x, y, 0.2, sw2=2.0))


@settings(max_examples=60, deadline=None)
@given(x=vec3, y=vec3, beta=st.floats(1e-3, 10))
def test_bounded_and_symmetric(x, y, beta):
    cfg = KernelConfig(beta=beta, feature_scale=1.0)
    v = arcsine_entry(x, y, cfg)
    assert abs(v) < 1
    assert v == arcsine_entry(y, x, cfg)


@settings(max_examples=30, deadline=None)
@given(x=vec3, y=vec3)
def test_common_scaling_is_continuous(x, y):
    cfg = KernelConfig(beta=0.5, feature_scale=1.0)
    cs = np.linspace(0.1, 3, 400)
    vals = np.array([arcsine_entry(c * x, c * y, cfg) for c in cs])
    assert np.abs(np.diff(vals)).max() < 0.05


@settings(max_examples=30, deadline=None)
@given(x=vec3)
def test_common_scaling_is_monotone_for_equal_inputs(x):
    cfg = KernelConfig(beta=0.5, feature_scale=1.0)
    vals = np.array([arcsine_entry(c * x, c * x, cfg) for c in np.linspace(0.1, 3, 15)])
    assert np.all(np.diff(vals) >= -1e-12)


def test_common_scaling_need_not_be_monotone():
    # the closed form itself dips and recovers along this ray
    x, y = np.array([2.0, 0.0, 0.0]), np.array([0.5, 0.0, 1.0])
    cfg = KernelConfig(beta=0.5, feature_scale=1.0)
    vals = [arcsine_entry(c * x, c * y, cfg) for c in (0.01, 1.68, 10.0)]
    oracle = [scalar_arcsine(c * x, c * y, 0.5) for c in (0.01, 1.68, 10.0)]
    np.testing.assert_allclose(vals, oracle, atol=1e-14)
    assert vals[1] < vals[2] < vals[0]


def test_clamp_counter_records_rounding_overflow():
    diag = KernelDiagnostics()
    s = np.array([[1.0 + 1e-9]])
    out = arcsine_from_gram(s, np.array([0.5 - 1e-12]), np.array([0.5 - 1e-12]), diag)
    assert diag.clamped == 1 and np.isfinite(out).all() and out[0, 0] < 1


def test_nan_input_rejected():
    with pytest.raises(NumericalError):
        arcsine_entry(np.array([np.nan, 0.0]), np.zeros(2), KernelConfig())


def test_blocked_kernel_matches_scalar_loop():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(7, 4)), rng.normal(size=(5, 4))
    K = arcsine_kernel(A, B, KernelConfig(beta=0.3))
    oracle = [[scalar_arcsine(a, b, 0.3, scale=0.25) for b in B] for a in A]
    np.testing.assert_allclose(K, oracle, atol=1e-14)


def test_cross_covariance_against_double_loop():
    rng = np.random.default_rng(1)
    A = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]:
        A[i, j] = A[j, i] = 1
    X = rng.normal(size=(6, 3))
    Xs = rng.normal(size=(2, 3))
    As = np.array([[0.0, 1.0], [1.0, 0.0]])
    cfg = KernelConfig(k=2, beta=0.7)
    P, Ps = dense_propagate(A, X, 2), dense_propagate(As, Xs, 2)
    oracle = np.array([[scalar_arcsine(P[i], Ps[j], 0.7, scale=1 / 3) for j in range(2)] for i in range(6)])
    K = cross_covariance(GraphView(X, A), GraphView(Xs, As), cfg)
    np.testing.assert_allclose(K, oracle, atol=1e-14)


def test_cross_equals_self_for_identical_graphs():
    rng = np.random.default_rng(2)
    A = np.triu((rng.random((5, 5)) < 0.5).astype(float), 1)
    A = A + A.T
    v = GraphView(rng.normal(size=(5, 3)), A)
    cfg = KernelConfig(k=3, beta=0.4)
    np.testing.assert_allclose(cross_covariance(v, v, cfg), self_covariance(v, cfg), atol=1e-15)


def test_single_zero_condensed_node(toy):
    X = np.zeros((4, 2))
    X[3] = 1.0
    g = GraphView(X, None)
    gs = GraphView(np.zeros((1, 2)), None)
    K = cross_covariance(g, gs, KernelConfig(k=0, beta=0.5))
    np.testing.assert_allclose(K[:3, 0], 1 / 3)
    np.testing.assert_allclose(self_covariance(gs, KernelConfig(beta=0.5)), [[1 / 3]])


def test_feature_dimension_mismatch():
    with pytest.raises(ValidationError):
        cross_covariance(GraphView(np.ones((3, 2))), GraphView(np.ones((2, 3))), KernelConfig())


@pytest.mark.parametrize("seed", range(10))
def test_self_covariance_symmetric_and_factorizable(seed):
    rng = np.random.default_rng(seed)
    m = 8
    A = np.triu((rng.random((m, m)) < 0.3).astype(float), 1)
    v = GraphView(rng.normal(size=(m, 5)), A + A.T)
    cfg = KernelConfig(k=2, beta=0.5)
    K = self_covariance(v, cfg)
    assert np.abs(K - K.T).max() <= 1e-12
    cholesky(K + cfg.beta * np.eye(m), lower=True)


def test_dot_product_kernel():
    cfg = KernelConfig(k=0, feature_scale=1.0)
    g = GraphView(np.array([[1.0, 0.0], [0.6, 0.8]]))
    gs = GraphView(np.array([[0.0, 1.0], [0.6, 0.8]]))
    K = dot_product_kernel(g, gs, cfg)
    assert K[0, 0] == 0.0
    assert K[1, 1] == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    Xa, Xb = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
    K = dot_product_kernel(GraphView(Xa), GraphView(Xb), KernelConfig(k=0))
    oracle = [[sum(x * y for x, y in zip(a, b)) / 3 for b in Xb] for a in Xa]
    np.testing.assert_allclose(K, oracle, atol=1e-14)


def test_kernel_config_validation():
    for kw in ({"beta": 0.0}, {"sigma_w2": -1.0}, {"feature_scale": 0.0}, {"k": -1}):
        with pytest.raises(ValidationError):
            KernelConfig(**kw)


def test_monte_carlo_oracle_small():
    # a quick version of the acceptance run: fewer samples, looser tolerance
    rep = kernel_oracle(dims=5, pairs=6, samples=100_000, seed=1, tol=1e-2)
    assert rep.passed, rep.max_abs_dev
