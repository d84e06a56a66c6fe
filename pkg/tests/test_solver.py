import math

import numpy as np
import pytest

from adabfgs.errors import CurvatureBreakdown, InconsistentConstants, SolverError
from adabfgs.objective import LogisticObjective, QuadraticObjective
from adabfgs.solver import RunConfig, run, solve_reference
from adabfgs.stepsize import SMOOTHNESS_AIDED
from adabfgs.testkit import random_spd


def scalar_quadratic():
    return QuadraticObjective(np.array([[1.0]]))


def test_adaptive_closed_form_trace():
    res = run(scalar_quadratic(), RunConfig("ABfgs", [1.0], B0=1.0, M=1.0, max_iters=3))
    xs = [1.0, 0.5, 1 / 6, 1 / 42]
    fs = [0.5 * x * x for x in xs]
    np.testing.assert_allclose(res.f_values, fs, rtol=1e-12)
    np.testing.assert_allclose(res.x_final, [1 / 42], rtol=1e-12)
    assert res.termination == "MaxIters"
    # B stays 1 because y = s on this problem
    assert all(r.psi_bar == pytest.approx(0.0, abs=1e-15) for r in res.records)


def test_sa2_one_step_exact():
    res = run(scalar_quadratic(), RunConfig("Sa2Bfgs", [1.0], B0=1.0, M=1.0, L=1.0))
    assert res.iterations_used == 1
    assert res.records[0].branch == SMOOTHNESS_AIDED
    assert res.records[0].alpha == 1.0
    assert abs(res.x_final[0]) <= 1e-12
    assert res.termination == "GradTol"


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("method", ["ABfgs", "Sa2Bfgs", "LsBfgs"])
def test_newton_limit_one_iteration(seed, method):
    rng = np.random.default_rng(seed)
    A = random_spd(6, 50.0, rng)
    obj = QuadraticObjective(A, rng.normal(size=6))
    cfg = RunConfig(method, 10 * rng.normal(size=6), B0=A, M=0.0, L=obj.constants.L)
    res = run(obj, cfg)
    assert res.iterations_used == 1
    assert res.termination == "GradTol"
    np.testing.assert_allclose(res.x_final, obj.minimizer(), rtol=1e-9)


def test_evaluation_accounting_adaptive():
    A = random_spd(4, 10.0, np.random.default_rng(0))
    obj = QuadraticObjective(A, np.ones(4))
    res = run(obj, RunConfig("ABfgs", np.zeros(4), B0=1.0, max_iters=3))
    assert res.iterations_used == 3
    assert res.counts == {"value": 0, "gradient": 4, "hvp": 3, "trace_value": 4}
    assert [r.evaluations for r in res.records] == [1, 3, 5, 7]


def test_evaluation_accounting_line_search():
    rng = np.random.default_rng(1)
    obj = LogisticObjective(rng.normal(size=(30, 4)), np.where(rng.random(30) < 0.5, 1.0, -1.0))
    res = run(obj, RunConfig("LsBfgs", np.ones(4), B0=obj.constants.L, max_iters=3))
    # every probe evaluates f; the gradient only where Armijo holds
    per_iter = np.diff([r.evaluations for r in res.records])
    assert res.counts["hvp"] == 0 and res.counts["trace_value"] == 0
    assert res.records[0].evaluations == 2
    assert sum(per_iter) == res.counts["value"] + res.counts["gradient"] - 2
    assert all(p >= 2 for p in per_iter)


def test_deterministic():
    rng = np.random.default_rng(2)
    obj = LogisticObjective(rng.normal(size=(50, 5)), np.where(rng.random(50) < 0.5, 1.0, -1.0))
    c = obj.constants
    cfg = RunConfig("Sa2Bfgs", np.ones(5), B0=c.mu, M=c.M, L=c.L, max_iters=40)
    a, b = run(obj, cfg), run(obj, cfg)
    assert [r.f for r in a.records] == [r.f for r in b.records]
    assert [r.psi_bar for r in a.records] == [r.psi_bar for r in b.records]


@pytest.mark.parametrize("method", ["ABfgs", "Sa2Bfgs", "LsBfgs"])
def test_logistic_monotone_and_converges(method):
    rng = np.random.default_rng(3)
    obj = LogisticObjective(rng.normal(size=(80, 6)), np.where(rng.random(80) < 0.5, 1.0, -1.0))
    c = obj.constants
    res = run(obj, RunConfig(method, np.ones(6), B0=c.L, M=c.M, L=c.L, max_iters=2000))
    assert res.termination == "GradTol"
    f = res.f_values
    assert np.all(np.diff(f) <= 1e-12 * (1 + np.abs(f[:-1])))


def test_gap_tolerance_stop():
    obj = QuadraticObjective(np.diag([1.0, 10.0]))
    res = run(obj, RunConfig("ABfgs", np.ones(2), M=0.5, f_star=0.0, gap_tol=1e-3))
    assert res.termination == "GapTol"
    assert res.records[-1].gap <= 1e-3 < res.records[-2].gap


def test_inconsistent_l_is_reported_with_trace():
    obj = QuadraticObjective(np.diag([1.0, 100.0]))
    with pytest.raises(InconsistentConstants) as info:
        run(obj, RunConfig("Sa2Bfgs", np.ones(2), B0=1.0, M=1.0, L=1.0))
    assert info.value.result is not None
    assert info.value.result.termination == "InconsistentConstants"
    assert len(info.value.result.records) >= 1


def test_non_descent_direction_breakdown():
    obj = QuadraticObjective(np.eye(2))
    with pytest.raises(CurvatureBreakdown):
        # g'd is NaN, so the direction cannot be certified as descent
        run(obj, RunConfig("ABfgs", np.array([np.nan, 1.0])))


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig("Newton", [1.0])
    with pytest.raises(ValueError):
        RunConfig("Sa2Bfgs", [1.0])
    with pytest.raises(ValueError):
        RunConfig("ABfgs", [1.0], M=-1.0)
    with pytest.raises(ValueError):
        run(scalar_quadratic(), RunConfig("ABfgs", [1.0, 2.0]))


def test_solve_reference_quadratic():
    rng = np.random.default_rng(4)
    A = random_spd(8, 100.0, rng)
    obj = QuadraticObjective(A, rng.normal(size=8))
    x, f = solve_reference(obj)
    assert np.linalg.norm(obj.gradient(x)) <= 1e-12
    np.testing.assert_allclose(x, obj.minimizer(), rtol=1e-9)


def test_solve_reference_single_sample():
    obj = LogisticObjective(np.array([[1.0, 0.0]]), np.array([1.0]))
    x, f = solve_reference(obj)
    assert np.linalg.norm(obj.gradient(x)) <= 1e-12
    assert f < math.log(2)


def test_errors_carry_termination():
    assert issubclass(InconsistentConstants, SolverError)
    assert InconsistentConstants.termination == "InconsistentConstants"
