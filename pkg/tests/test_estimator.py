import math

import numpy as np
import pytest

from adabfgs.errors import CurvatureBreakdown
from adabfgs.estimator import HessianEstimate, potential, potential_star
from adabfgs.testkit import dense_inverse, eigen_potential, random_spd


def test_scaled_identity():
    est = HessianEstimate.scaled_identity(2, 1.0)
    np.testing.assert_array_equal(est.B, np.eye(2))
    np.testing.assert_array_equal(est.H, np.eye(2))
    est = HessianEstimate.scaled_identity(3, 4.0)
    np.testing.assert_array_equal(est.B, 4 * np.eye(3))
    np.testing.assert_array_equal(est.H, 0.25 * np.eye(3))
    with pytest.raises(ValueError):
        HessianEstimate.scaled_identity(2, 0.0)


@pytest.mark.parametrize("y,expected", [
    ((1.0, 0.0), [[1.0, 0.0], [0.0, 1.0]]),
    ((2.0, 0.0), [[2.0, 0.0], [0.0, 1.0]]),
    ((1.0, 1.0), [[1.0, 1.0], [1.0, 2.0]]),
])
def test_update_examples(y, expected):
    est = HessianEstimate.scaled_identity(2, 1.0)
    est.update(np.array([1.0, 0.0]), np.array(y))
    np.testing.assert_allclose(est.B, expected, atol=1e-15)
    np.testing.assert_allclose(est.H, np.linalg.inv(expected), atol=1e-15)


def test_direction():
    est = HessianEstimate.scaled_identity(2, 1.0)
    np.testing.assert_array_equal(est.direction(np.array([1.0, 2.0])), [-1.0, -2.0])
    est = HessianEstimate(np.diag([2.0, 1.0]))
    np.testing.assert_allclose(est.direction(np.array([2.0, 0.0])), [-1.0, 0.0])


def test_curvature_floor():
    est = HessianEstimate.scaled_identity(2, 1.0)
    with pytest.raises(CurvatureBreakdown):
        est.update(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    with pytest.raises(CurvatureBreakdown):
        est.update(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_descent_after_updates():
    rng = np.random.default_rng(0)
    n = 8
    A = random_spd(n, 100.0, rng)
    est = HessianEstimate.scaled_identity(n, 1.0)
    for _ in range(30):
        s = rng.normal(size=n)
        est.update(s, A @ s)
    for _ in range(100):
        g = rng.normal(size=n)
        assert g @ est.direction(g) < 0


def test_potential_examples():
    assert potential(np.eye(2)) == 0.0
    assert potential(np.diag([2.0, 1.0])) == pytest.approx(1 - math.log(2), abs=1e-15)
    assert potential(np.diag([2.0, 1.0])) == pytest.approx(0.306853, abs=1e-6)
    for n in (1, 5, 17):
        assert potential(2 * np.eye(n)) == pytest.approx(n * (1 - math.log(2)))


def test_potential_scale():
    B = np.diag([3.0, 5.0])
    assert potential(B, 2.0) == pytest.approx(potential(B / 2.0))


def test_potential_star_examples():
    H = np.diag([4.0, 1.0])
    assert potential_star(H, H) == pytest.approx(0.0, abs=1e-14)
    assert potential_star(2 * H, H) == pytest.approx(2 * (1 - math.log(2)))
    assert potential_star(np.eye(2), H) == pytest.approx(math.log(4) - 0.75)
    assert potential_star(np.eye(2), H) == pytest.approx(0.6363, abs=1e-4)


def test_potential_matches_eigen_oracle():
    rng = np.random.default_rng(3)
    B = random_spd(20, 1e3, rng)
    assert potential(B, 7.0) == pytest.approx(eigen_potential(B, 7.0), rel=1e-9)


def test_potential_orthogonal_invariance():
    rng = np.random.default_rng(4)
    B = random_spd(10, 50.0, rng)
    Q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
    assert potential(Q.T @ B @ Q, 3.0) == pytest.approx(potential(B, 3.0), abs=1e-10)


@pytest.mark.parametrize("n", [2, 5, 20])
def test_inverse_tracks_direct_inverse(n):
    rng = np.random.default_rng(n)
    A = random_spd(n, 1e3, rng)
    est = HessianEstimate.scaled_identity(n, 1.0)
    for _ in range(50):
        s = rng.normal(size=n)
        y = A @ s
        est.update(s, y)
        np.testing.assert_array_equal(est.B, est.B.T)
        np.testing.assert_allclose(est.B @ s, y, rtol=1e-10, atol=1e-10 * np.linalg.norm(y))
        assert np.linalg.norm(est.H - dense_inverse(est.B)) <= 1e-8
        np.linalg.cholesky(est.B)
