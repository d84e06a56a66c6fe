import math

import numpy as np
import pytest

from adabfgs.errors import InconsistentConstants, LineSearchFailure
from adabfgs.stepsize import (SELF_CONCORDANT, SMOOTHNESS_AIDED, StepContext, adaptive_step,
                              armijo_wolfe_search, model_upper, model_upper_sa2, omega,
                              omega_inv_upper, omega_star, sa2_step, scaled_omega,
                              scaled_omega_star, step_alpha)
from adabfgs.testkit import SA2_MODEL, grid_argmin_step, model_slope_fd, random_context


def test_omega_values():
    assert omega(0.0) == 0.0
    assert omega(1.0) == pytest.approx(0.306853, abs=1e-6)
    assert omega_star(0.5) == pytest.approx(0.193147, abs=1e-6)
    assert omega_star(0.0) == 0.0
    with pytest.raises(ValueError):
        omega(-1.0)
    with pytest.raises(ValueError):
        omega_star(1.0)


def test_omega_inv_upper_values():
    assert omega_inv_upper(0.0) == 0.0
    assert omega_inv_upper(2.0) == 4.0


def test_scaled_omega_small_m_limit():
    for eta in (0.01, 1.0, 5.0):
        assert scaled_omega(0.0, eta) == 0.5 * eta * eta
        assert scaled_omega(1e-12, eta) == pytest.approx(0.5 * eta * eta, rel=1e-9)
        assert scaled_omega_star(0.0, eta) == 0.5 * eta * eta
    # series and closed form meet at the cutoff
    assert scaled_omega(1.0, 1e-3 * (1 - 1e-12)) == pytest.approx(omega(1e-3), rel=1e-12)
    assert scaled_omega_star(1.0, 1e-3 * (1 + 1e-12)) == pytest.approx(omega_star(1e-3), rel=1e-9)


@pytest.mark.parametrize("gd,w,M,eta,t", [(-1, 1, 0, 1, 1.0), (-1, 1, 1, 1, 0.5), (-4, 2, 0.5, 2, 0.5)])
def test_adaptive_step_examples(gd, w, M, eta, t):
    dec = adaptive_step(StepContext(gd, 1.0, w, M))
    assert dec.eta == eta
    assert dec.t == pytest.approx(t, rel=1e-15)
    assert dec.branch == SELF_CONCORDANT


def test_sa2_step_first_branch():
    dec = sa2_step(StepContext(-1.0, 1.0, 1.0, 1.0, 4.0))
    assert dec.alpha == 0.5
    assert dec.branch == SELF_CONCORDANT
    assert dec.t == 0.5


def test_sa2_step_second_branch():
    dec = sa2_step(StepContext(-1.0, 1.0, 1.0, 1.0, 1.5625))
    assert dec.alpha == pytest.approx(0.8)
    assert dec.branch == SMOOTHNESS_AIDED
    assert dec.t == pytest.approx(0.68, rel=1e-14)


def test_sa2_step_alpha_one_is_newton_model_step():
    for eta in (0.3, 1.0, 4.0):
        dec = sa2_step(StepContext(-eta * 2.0, 1.0, 2.0, 1.0, 4.0))
        assert dec.alpha == 1.0
        assert dec.t == pytest.approx(eta / 2.0, rel=1e-14)


def test_alpha_clamp_and_error():
    ctx = StepContext(-1.0, 1.0, 1.0 + 1e-12, 1.0, 1.0)
    assert step_alpha(ctx) == 1.0
    with pytest.raises(InconsistentConstants):
        step_alpha(StepContext(-1.0, 1.0, 1.0 + 1e-8, 1.0, 1.0))


def test_m_zero_uses_first_branch():
    dec = sa2_step(StepContext(-2.0, 1.0, 1.0, 0.0, 9.0))
    assert dec.branch == SELF_CONCORDANT
    assert dec.t == 2.0


def test_invalid_context():
    with pytest.raises(ValueError):
        StepContext(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        StepContext(-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        adaptive_step(StepContext(-1.0, 1.0, 1.0, -1.0))


def test_model_upper_examples():
    ctx = StepContext(-1.0, 1.0, 1.0, 1.0, 2.0)
    assert model_upper(ctx, 0.0) == 0.0
    assert model_upper_sa2(ctx, 0.0) == 0.0
    assert model_upper(ctx, 0.5) == pytest.approx(-0.306853, abs=1e-6)
    with pytest.raises(ValueError):
        model_upper(ctx, 1.0)


def test_sa2_model_is_continuous_at_switch():
    ctx = StepContext(-1.0, 1.0, 1.0, 1.0, 1.5625)
    t_u = (1 - 0.8) / 1.0
    below = model_upper_sa2(ctx, t_u * (1 - 1e-12))
    above = model_upper_sa2(ctx, t_u * (1 + 1e-12))
    assert above == pytest.approx(below, abs=1e-11)


def test_closed_forms_match_grid_minimizer():
    rng = np.random.default_rng(11)
    for _ in range(25):
        r = random_context(rng)
        ctx = StepContext(r.g_dot_d, r.d_norm, r.d_weighted_norm, r.M, r.L)
        assert adaptive_step(ctx).t == pytest.approx(grid_argmin_step(r), rel=1e-4)
        t = sa2_step(ctx).t
        assert t == pytest.approx(grid_argmin_step(r, SA2_MODEL), rel=1e-4)
        assert abs(model_slope_fd(r, t, SA2_MODEL)) <= 1e-8


class TestLineSearch:
    @staticmethod
    def line(x, d):
        calls = {"phi": 0, "dphi": 0}

        def phi(t):
            calls["phi"] += 1
            return 0.5 * (x + t * d) ** 2

        def dphi(t):
            calls["dphi"] += 1
            return (x + t * d) * d

        return phi, dphi, calls

    def test_unit_step_accepted(self):
        phi, dphi, calls = self.line(1.0, -1.0)
        dec = armijo_wolfe_search(phi, dphi, 0.5, -1.0)
        assert dec.t == 1.0
        assert calls == {"phi": 1, "dphi": 1}

    def test_wolfe_tie_at_unit_step_is_accepted(self):
        # with d = -0.1 the curvature condition holds with equality at t = 1
        phi, dphi, _ = self.line(1.0, -0.1)
        assert armijo_wolfe_search(phi, dphi, 0.5, -0.1).t == 1.0

    def test_short_direction_expands(self):
        phi, dphi, _ = self.line(1.0, -0.01)
        dec = armijo_wolfe_search(phi, dphi, 0.5, -0.01)
        assert dec.t > 1.0
        assert dec.probes >= 2
        assert phi(dec.t) <= 0.5 + 0.1 * dec.t * -0.01
        assert dphi(dec.t) >= 0.9 * -0.01

    def test_long_direction_bisects(self):
        phi, dphi, _ = self.line(1.0, -100.0)
        dec = armijo_wolfe_search(phi, dphi, 0.5, -100.0)
        assert dec.t < 1.0
        assert phi(dec.t) <= 0.5 + 0.1 * dec.t * -100.0
        assert dphi(dec.t) >= 0.9 * -100.0

    def test_unbounded_below_fails(self):
        with pytest.raises(LineSearchFailure):
            armijo_wolfe_search(lambda t: -t, lambda t: -1.0, 0.0, -1.0)

    def test_not_descent(self):
        with pytest.raises(ValueError):
            armijo_wolfe_search(lambda t: t, lambda t: 1.0, 0.0, 1.0)


def test_predicted_decrease_is_scaled_omega():
    ctx = StepContext(-3.0, 1.0, 1.5, 0.7, 4.0)
    assert adaptive_step(ctx).predicted_decrease == pytest.approx(omega(0.7 * 2.0) / 0.49)
    assert math.isclose(sa2_step(ctx).predicted_decrease, adaptive_step(ctx).predicted_decrease)
