import math

import numpy as np
import pytest
import scipy.sparse as sp

from adabfgs.objective import (CountingObjective, LogisticObjective, QuadraticObjective,
                               SmoothnessConstants, gram_lambda_max, logistic_constants,
                               weighted_norm)
from adabfgs.testkit import fd_gradient, fd_hvp


def single_sample():
    return LogisticObjective(np.array([[1.0, 0.0]]), np.array([1.0]))


def random_logistic(m=40, n=6, seed=0):
    rng = np.random.default_rng(seed)
    X = sp.random(m, n, density=0.4, random_state=seed, format="csr")
    labels = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    return LogisticObjective(X, labels)


class TestSmoothnessConstants:
    def test_kappa(self):
        c = SmoothnessConstants(0.5, 2.0, 1.0)
        assert c.kappa == 4.0

    def test_hessian_lipschitz_default(self):
        c = SmoothnessConstants(1.0, 4.0, 0.5)
        assert c.hessian_lipschitz == pytest.approx(2 * 0.5 * 8.0)

    def test_explicit_l2_is_kept(self):
        assert SmoothnessConstants(1.0, 4.0, 0.5, L2=0.1).hessian_lipschitz == 0.1

    @pytest.mark.parametrize("mu,L,M", [(0.0, 1.0, 0.0), (2.0, 1.0, 0.0), (1.0, 1.0, -1.0),
                                        (1.0, math.inf, 0.0)])
    def test_invalid(self, mu, L, M):
        with pytest.raises(ValueError):
            SmoothnessConstants(mu, L, M)

    def test_l2_must_be_positive(self):
        with pytest.raises(ValueError):
            SmoothnessConstants(1.0, 2.0, 1.0, L2=0.0)


def test_logistic_value_at_zero_is_ln2():
    obj = random_logistic()
    assert obj.value(np.zeros(obj.n)) == pytest.approx(math.log(2), abs=1e-15)


def test_quadratic_examples():
    assert QuadraticObjective(np.eye(2)).value(np.ones(2)) == 1.0
    A = np.diag([4.0, 1.0])
    q = QuadraticObjective(A)
    np.testing.assert_array_equal(q.gradient(np.ones(2)), [4.0, 1.0])
    for x in (np.zeros(2), np.array([3.0, -7.0])):
        np.testing.assert_array_equal(q.hvp(x, np.ones(2)), [4.0, 1.0])
    assert weighted_norm(q, np.zeros(2), np.ones(2)) == pytest.approx(math.sqrt(5.0))


def test_quadratic_rejects_bad_matrices():
    with pytest.raises(ValueError):
        QuadraticObjective(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        QuadraticObjective(np.diag([1.0, -1.0]))


def test_single_sample_closed_forms():
    obj = single_sample()
    assert obj.value(np.array([2.0, 0.0])) == pytest.approx(math.log1p(math.exp(-2)) + 2)
    assert obj.value(np.array([2.0, 0.0])) == pytest.approx(2.1269, abs=1e-4)
    np.testing.assert_allclose(obj.gradient(np.zeros(2)), [-0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(obj.hvp(np.zeros(2), np.array([1.0, 0.0])), [1.25, 0.0])


def test_logistic_constants_examples():
    c = logistic_constants(np.array([[1.0, 0.0]]))
    assert (c.mu, c.L, c.M) == pytest.approx((1.0, 1.25, 0.5))
    c = logistic_constants(np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert (c.mu, c.L, c.M) == pytest.approx((0.5, 0.75, math.sqrt(2) / 2))
    assert c.M == pytest.approx(0.7071, abs=1e-4)


def test_logistic_is_overflow_safe():
    obj = single_sample()
    with np.errstate(over="raise"):
        assert obj.value(np.array([-800.0, 0.0])) == pytest.approx(800 + 800**2 / 2)
        assert np.all(np.isfinite(obj.gradient(np.array([800.0, 0.0]))))
        assert np.all(np.isfinite(obj.hvp(np.array([800.0, 0.0]), np.ones(2))))


def test_gradient_matches_finite_differences():
    obj = random_logistic()
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.normal(size=obj.n)
        g = obj.gradient(x)
        np.testing.assert_allclose(fd_gradient(obj, x), g, rtol=1e-5, atol=1e-5 * np.linalg.norm(g))


def test_hvp_matches_finite_differences():
    obj = random_logistic(seed=3)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, v = rng.normal(size=(2, obj.n))
        hv = obj.hvp(x, v)
        np.testing.assert_allclose(fd_hvp(obj, x, v), hv, rtol=1e-4, atol=1e-4 * np.linalg.norm(hv))


def test_full_hessian_agrees_with_hvp():
    obj = random_logistic(seed=4)
    x = np.linspace(-1, 1, obj.n)
    H = obj.full_hessian(x)
    for v in np.eye(obj.n):
        np.testing.assert_allclose(H @ v, obj.hvp(x, v), rtol=1e-12, atol=1e-15)


def test_hessian_sandwich():
    obj = random_logistic(seed=5)
    c = obj.constants
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = 3 * rng.normal(size=obj.n)
        d = rng.normal(size=obj.n)
        q = d @ obj.hvp(x, d)
        assert c.mu * (d @ d) * (1 - 1e-10) <= q <= c.L * (d @ d) * (1 + 1e-10)


def test_strict_convexity_midpoint():
    obj = random_logistic(seed=6)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.normal(size=(2, obj.n))
        assert obj.value(0.5 * (a + b)) < 0.5 * (obj.value(a) + obj.value(b))


def test_power_iteration():
    X = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 2.0]]))
    res = gram_lambda_max(X)
    assert res.converged
    assert res.value == pytest.approx(4.0, rel=1e-8)
    X = sp.random(200, 30, density=0.2, random_state=0, format="csr")
    exact = np.linalg.eigvalsh((X.T @ X).toarray())[-1]
    assert gram_lambda_max(X).value == pytest.approx(exact, rel=1e-7)
    assert gram_lambda_max(X).value == gram_lambda_max(X).value


def test_counting_objective():
    obj = CountingObjective(QuadraticObjective(np.eye(3)))
    x = np.ones(3)
    obj.value(x)
    obj.gradient(x)
    obj.gradient(x)
    obj.hvp(x, x)
    obj.trace_value(x)
    assert obj.counts == {"value": 1, "gradient": 2, "hvp": 1, "trace_value": 1}
    assert obj.evaluations == 4


def test_dimension_check():
    with pytest.raises(ValueError):
        single_sample().value(np.zeros(3))
