import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftopt import signals as sg
from ftopt.problems import (
    ConvergenceError,
    EvaluationError,
    QuadraticCost,
    ResourceProfile,
    SquaredAffineCost,
    TVCost,
    TVLogistic,
    conjugate_argmax,
    dual_surfaces,
    eval_surfaces,
    probe_model,
)
from ftopt.scenarios import builtin_scenario
from ftopt.config import build


def logistic_simple():
    return TVLogistic(1, [1.0, 0.0], math.pi / 10, 1.0)


def case2_models():
    ex = build(builtin_scenario("case2"))
    return ex.models, ex.profiles


def all_models():
    rng = np.random.default_rng(3)
    models = [
        QuadraticCost(2.0, (sg.sin(),)),
        QuadraticCost([[3.0, 1.0], [1.0, 2.0]], (sg.sin(0.5, 2.0), sg.linear(0.3, 1.0)), sg.cos(1.0, 0.6)),
        SquaredAffineCost(-1.5, (sg.cos(), sg.linear(2.0))),
        logistic_simple(),
    ]
    models += [TVLogistic(int(rng.choice([-1, 1])), rng.uniform(0, 1, 2), math.pi / 10, float(rng.integers(1, 9)))
               for _ in range(3)]
    return models


def test_signal_values_and_derivatives():
    s = sg.Signal(1.0, 2.0, (sg.Wave("sin", 3.0, 0.5, 0.1), sg.Wave("cos", -1.0, 2.0, 0.0)))
    t = 0.7
    assert s(t) == pytest.approx(1 + 1.4 + 3 * math.sin(0.45) - math.cos(1.4))
    assert s.deriv(t) == pytest.approx(2 + 1.5 * math.cos(0.45) + 2 * math.sin(1.4))
    assert s.deriv_bound() == pytest.approx(2 + 1.5 + 2)
    fd = (s(t + 1e-6) - s(t - 1e-6)) / 2e-6
    assert s.deriv(t) == pytest.approx(fd, abs=1e-8)


def test_quadratic_surfaces_example():
    # f = 1/2 * 2 x^2 + sin(t) x
    m = QuadraticCost(2.0, (sg.sin(),))
    v, g, H, gt = eval_surfaces(m, np.array([1.0]), 0.0)
    assert v == 1.0
    assert g.tolist() == [2.0]
    assert H.tolist() == [[2.0]]
    assert gt.tolist() == [1.0]


def test_gradient_vanishes_at_quadratic_minimizer():
    m = QuadraticCost(2.0, (sg.sin(),))
    t = 0.9
    x = np.array([-math.sin(t) / 2.0])
    assert abs(m.grad(x, t)[0]) < 1e-15


def test_logistic_zero_sample_is_pure_regularizer():
    m = TVLogistic(1, [0.0, 0.0], math.pi / 10, 3.0)
    x = np.array([0.4, -1.2])
    np.testing.assert_allclose(m.grad(x, 2.0), 3.0 * x)
    np.testing.assert_allclose(m.hess(x, 2.0), 3.0 * np.eye(2))
    assert m.theta_lo == 3.0


def test_eval_surfaces_rejects_nonfinite():
    class Broken(TVCost):
        dim = 1

        def value(self, x, t):
            return math.nan

        def grad(self, x, t):
            return np.zeros(1)

        def hess(self, x, t):
            return np.eye(1)

        def grad_t(self, x, t):
            return np.zeros(1)

    with pytest.raises(EvaluationError, match="x=\\[0.5\\], t=1.5"):
        eval_surfaces(Broken(), np.array([0.5]), 1.5)


@pytest.mark.parametrize("model", all_models(), ids=lambda m: type(m).__name__)
def test_surface_consistency_and_constants(model):
    rep = probe_model(model, np.random.default_rng(7), n_samples=50)
    assert rep["fd_grad"] <= 1e-5
    assert rep["fd_hess"] <= 1e-5
    assert rep["fd_time"] <= 1e-5
    assert rep["rayleigh_min"] >= model.theta_lo - 1e-9
    assert rep["rayleigh_max"] <= model.theta_hi + 1e-9
    assert rep["drift_max"] <= model.kappa + 1e-12


def test_logistic_kappa_is_attained_closely():
    # drift bound should not be wildly loose: search over x and t
    m = TVLogistic(1, [0.6, 0.8], 1.0, 1.0)
    best = 0.0
    for t in np.linspace(0, 2 * math.pi, 200):
        for s in np.linspace(-6, 6, 241):
            x = s * np.array([0.6, 0.8])
            best = max(best, np.linalg.norm(m.grad_t(x, t)))
    assert best <= m.kappa
    assert best >= 0.8 * m.kappa


def test_conjugate_argmax_quadratic_closed_form():
    m = QuadraticCost(2.0, (sg.sin(),))
    assert conjugate_argmax(m, [1.0], 0.0).tolist() == [0.5]


def test_conjugate_argmax_logistic_against_bisection():
    # stationarity at t=0 with y=[1,0]: x2 = 0 and x1 = 1/(1+exp(x1)), root by plain bisection
    x = conjugate_argmax(logistic_simple(), [0.0, 0.0], 0.0)
    np.testing.assert_allclose(x, [0.401058137541547, 0.0], atol=1e-12)
    assert np.linalg.norm(logistic_simple().grad(x, 0.0)) <= 1e-12


@pytest.mark.parametrize("model", all_models(), ids=lambda m: type(m).__name__)
def test_conjugate_round_trip(model):
    rng = np.random.default_rng(11)
    for _ in range(20):
        x0 = rng.uniform(-3, 3, model.dim)
        t = rng.uniform(0, 10)
        lam = model.grad(x0, t)
        x = conjugate_argmax(model, lam, t)
        assert np.linalg.norm(model.grad(x, t) - lam) <= 1e-12 * max(1.0, np.linalg.norm(lam)) + 1e-12
        np.testing.assert_allclose(x, x0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 20), st.integers(1, 8),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_conjugate_round_trip_logistic_property(x1, x2, t, beta, y1, y2):
    m = TVLogistic(1, [y1, y2], math.pi / 10, float(beta))
    x0 = np.array([x1, x2])
    x = conjugate_argmax(m, m.grad(x0, t), t)
    np.testing.assert_allclose(x, x0, atol=1e-9)


def test_conjugate_argmax_reports_nonconvergence():
    with pytest.raises(ConvergenceError) as info:
        conjugate_argmax(logistic_simple(), [50.0, 0.0], 0.0, max_iter=1)
    assert info.value.residual > 0


def test_dual_surfaces_quadratic_closed_form():
    # d_i' + b_i'/a_i for f = 1/2 a x^2 + b(t) x
    a = 2.5
    m = QuadraticCost(a, (sg.sin(1.0, 0.3),))
    prof = ResourceProfile((sg.Signal(1.0, 0.0, (sg.Wave("sin", 1.0, 1.0, 0.2),)),))
    for t in (0.0, 1.3, 4.0):
        lam = np.array([0.7])
        g, gt = dual_surfaces(m, prof, lam, t)
        x = (0.7 - math.sin(0.3 * t)) / a
        assert g[0] == pytest.approx(1 + math.sin(t + 0.2) - x, abs=1e-15)
        assert gt[0] == pytest.approx(math.cos(t + 0.2) + 0.3 * math.cos(0.3 * t) / a, abs=1e-15)


def test_dual_surfaces_static_problem():
    m = QuadraticCost(3.0, (sg.const(1.0),))
    prof = ResourceProfile((sg.const(2.0),))
    _, gt = dual_surfaces(m, prof, [0.4], 5.0)
    assert gt.tolist() == [0.0]


def test_dual_time_partial_matches_finite_difference():
    m = logistic_simple()
    prof = ResourceProfile((sg.sin(), sg.cos(0.5, 2.0)))
    lam, t, h = np.array([0.3, -0.2]), 2.0, 1e-5
    _, gt = dual_surfaces(m, prof, lam, t)
    gp, _ = dual_surfaces(m, prof, lam, t + h)
    gm, _ = dual_surfaces(m, prof, lam, t - h)
    np.testing.assert_allclose(gt, (gp - gm) / (2 * h), atol=1e-7)


def test_dual_drift_bound_on_random_samples():
    models, profiles = case2_models()
    rng = np.random.default_rng(5)
    for m, p in zip(models, profiles):
        for _ in range(100):
            lam = rng.uniform(-10, 10, 1)
            t = rng.uniform(0, 50)
            _, gt = dual_surfaces(m, p, lam, t)
            assert np.linalg.norm(gt) <= m.kappa / m.theta_lo + p.delta + 1e-12


def test_resource_profile_delta():
    p = ResourceProfile((sg.Signal(3.0, 0.0, (sg.Wave("sin", 1.0, 1.0, 0.5),)),))
    assert p.delta == 1.0
    ts = np.linspace(0, 20, 500)
    assert max(abs(p.d_dot(t)[0]) for t in ts) <= p.delta
    with pytest.raises(ValueError):
        ResourceProfile((sg.const(1.0),), delta=-1.0)


def test_case2_cost_and_demand_values():
    models, profiles = case2_models()
    assert models[0].value(np.array([1.0]), 0.0) == pytest.approx(1.05, abs=1e-15)
    assert profiles[0].d(0.0)[0] == pytest.approx(1 + math.sin(math.pi / 12), abs=1e-15)
    assert profiles[0].d(0.0)[0] == pytest.approx(1.2588190451025207, abs=1e-12)


def test_quadratic_validation():
    with pytest.raises(ValueError, match="positive definite"):
        QuadraticCost(-1.0, (sg.const(0.0),))
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticCost([[1.0, 0.5], [0.0, 1.0]], (sg.const(0.0), sg.const(0.0)))
