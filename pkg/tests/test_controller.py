from dataclasses import replace

import numpy as np
import pytest

from cacbf.checks import feasibility_suite
from cacbf.controller import (ControllerConfig, RobustConfig, box_rows, cacbf_constraints,
                              compute_control, polygon_rows, rcbf_constraints, robust_margin)
from cacbf.model import AffineSystem, BarrierSpec, identity
from cacbf.qp import certify
from cacbf.scenarios import build


def _psi_system(psi):
    """Barrier h(x) = x_1 on a plant whose regressor row equals ``psi``."""
    psi = np.asarray(psi, dtype=float)
    p = psi.size
    sys = AffineSystem(1, 1, p, lambda x: np.zeros(1), lambda x: psi[None, :],
                       lambda x: np.ones((1, 1)), np.zeros(p))
    return sys, BarrierSpec(lambda x: float(x[0]), lambda x: np.ones(1), identity)


@pytest.mark.parametrize("psi, theta_e, theta_max, expected", [
    ((3.0, 4.0), (0.0, 0.0), 2.0, 10.0),
    ((3.0, 4.0), (0.0, 0.0), 0.0, 0.0),
    ((1.0, 0.0), (0.5, 0.0), 1.0, 1.5),
])
def test_robust_margin_examples(psi, theta_e, theta_max, expected):
    sys, b = _psi_system(psi)
    assert robust_margin(b, sys, np.ones(1), RobustConfig(theta_e, theta_max)) == pytest.approx(expected)


def test_robust_margin_matches_sphere_maximum():
    rng = np.random.default_rng(0)
    psi, theta_e, theta_max = np.array([3.0, 4.0]), np.array([0.2, -0.7]), 2.0
    sys, b = _psi_system(psi)
    w = rng.normal(size=(10_000, 2))
    pts = theta_max * w / np.linalg.norm(w, axis=1, keepdims=True)
    sampled = np.max(np.abs((pts - theta_e) @ psi))
    sigma = robust_margin(b, sys, np.ones(1), RobustConfig(theta_e, theta_max))
    assert sampled <= sigma + 1e-12
    assert sampled == pytest.approx(sigma, rel=1e-5)


def test_acc_initial_safety_row_forces_braking():
    sc = build("acc")
    rows = cacbf_constraints(sc.system, sc.barriers, sc.lyapunov, sc.x0, np.zeros(3), sc.controller)
    i = rows.labels.index("safety:headway")
    assert rows.A[i, 0] == pytest.approx(1.8 / 1650, rel=1e-14)
    assert rows.b[i] == pytest.approx(0.0, abs=1e-12)
    res = compute_control(sc.system, sc.barriers, sc.lyapunov, sc.x0, np.zeros(3), sc.controller)
    assert res.u[0] <= 1e-9
    assert certify(res.problem, res.solution)


def test_zero_estimate_gives_known_model_rows():
    sc = build("omni")
    x = np.array([1.0, 9.0])
    rows = cacbf_constraints(sc.system, sc.barriers, sc.lyapunov, x, np.zeros(2), sc.controller)
    h = float((x - 5.0) @ (x - 5.0)) - 20.25
    assert rows.b[0] == pytest.approx(2.0 * h)
    np.testing.assert_allclose(rows.A[0, :2], -2.0 * (x - 5.0))


def test_drone_row_at_start():
    sc = build("drone")
    rows = cacbf_constraints(sc.system, sc.barriers, sc.lyapunov, sc.x0, np.zeros(2), sc.controller)
    np.testing.assert_allclose(-rows.A[0, :2], [-6.0, 12.0])
    assert rows.b[0] == pytest.approx(10.0 * 21.96)


def test_drone_rows_match_expanded_constraint():
    """2(p-c)^T(u+th)/m + 2|v|^2 + 14(p-c)^T v >= -10 hbar, term by term."""
    sc = build("drone")
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = sc.sample_interior(rng)
        th = rng.uniform(-2, 2, size=2)
        rows = cacbf_constraints(sc.system, sc.barriers, sc.lyapunov, x, th, sc.controller)
        p, v = x[:2], x[2:]
        for i, c in enumerate(sc.meta["centers"]):
            d = p - np.asarray(c)
            hbar = d @ d - 4.8 ** 2
            np.testing.assert_allclose(-rows.A[i, :2], 2.0 * d, rtol=1e-13)
            drift = 2.0 * v @ v + 14.0 * d @ v + 2.0 * d @ th
            assert rows.b[i] == pytest.approx(drift + 10.0 * hbar, rel=1e-12, abs=1e-9)


def test_omni_robust_row():
    sc = build("omni")
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = sc.sample_interior(rng)
        rows = rcbf_constraints(sc.system, sc.barriers, sc.lyapunov, x, sc.robust, sc.controller)
        d = x - 5.0
        h = d @ d - 20.25
        # 2 d^T u - 2|d| theta_max >= -2 h
        np.testing.assert_allclose(-rows.A[0, :2], 2.0 * d)
        assert rows.b[0] == pytest.approx(2.0 * h - 2.0 * np.linalg.norm(d) * 1.0, rel=1e-12)


@pytest.mark.parametrize("name", ["acc", "omni", "drone"])
def test_zero_margin_reduces_to_adaptive_rows(name):
    sc = build(name)
    rng = np.random.default_rng(3)
    p = sc.system.param_dim
    for _ in range(20):
        x = sc.sample_interior(rng)
        a = cacbf_constraints(sc.system, sc.barriers, sc.lyapunov, x, np.zeros(p), sc.controller)
        r = rcbf_constraints(sc.system, sc.barriers, sc.lyapunov, x,
                             RobustConfig(np.zeros(p), 0.0), sc.controller)
        assert np.array_equal(a.A, r.A) and np.array_equal(a.b, r.b)


def test_omni_speed_limit_vertex():
    sc = build("omni")
    x = np.array([-10.0, 5.0])
    res = compute_control(sc.system, sc.barriers, sc.lyapunov, x, np.zeros(2), sc.controller)
    np.testing.assert_allclose(res.u, [2.0, 0.0], atol=1e-8)
    assert np.linalg.norm(res.u) == pytest.approx(2.0, abs=1e-8)


def test_polygon_facets():
    C, c = polygon_rows(2.0, 16)
    assert c[0] == pytest.approx(2.0 * np.cos(np.pi / 16))
    vertex = np.array([2.0, 0.0])
    assert np.all(C @ vertex <= c + 1e-12)
    assert np.sum(np.isclose(C @ vertex, c)) == 2


def test_box_rows():
    C, c = box_rows([-1.0, -2.0], [3.0, 4.0])
    assert np.all(C @ np.array([3.0, -2.0]) <= c)
    assert not np.all(C @ np.array([3.1, 0.0]) <= c)


def test_far_at_target_is_zero_control():
    sc = build("omni", obstacle=(50.0, 50.0))
    res = compute_control(sc.system, sc.barriers, sc.lyapunov, sc.target, np.zeros(2), sc.controller)
    np.testing.assert_allclose(res.u, 0.0, atol=1e-12)
    assert res.delta == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["acc", "omni", "drone"])
def test_optimum_satisfies_rows(name):
    sc = build(name)
    cfg = sc.controller.without_input_bounds()
    rng = np.random.default_rng(4)
    for _ in range(100):
        x = sc.sample_interior(rng)
        th = rng.normal(size=sc.system.param_dim)
        res = compute_control(sc.system, sc.barriers, sc.lyapunov, x, th, cfg)
        rows = cacbf_constraints(sc.system, sc.barriers, sc.lyapunov, x, th, cfg)
        z = np.concatenate([res.u, [res.delta]])
        assert not res.infeasible and rows.satisfied(z, 1e-8) and res.delta >= 0


@pytest.mark.parametrize("name", ["acc", "omni", "drone"])
def test_local_lipschitz(name):
    sc = build(name)
    cfg = sc.controller.without_input_bounds()
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(50):
        x = sc.sample_interior(rng)
        th = rng.normal(size=sc.system.param_dim)
        dx = rng.normal(size=x.size)
        dx *= 1e-6 / np.linalg.norm(dx)
        u0 = compute_control(sc.system, sc.barriers, sc.lyapunov, x, th, cfg).u
        u1 = compute_control(sc.system, sc.barriers, sc.lyapunov, x + dx, th, cfg).u
        ratios.append(np.linalg.norm(u1 - u0) / 1e-6)
    L = max(ratios)
    assert np.isfinite(L) and L < 1e7


def test_infeasible_with_bounds_is_flagged():
    sc = build("acc")
    x = np.array([30.0, 54.5])                  # h = 0.5 while closing at 20 m/s
    res = compute_control(sc.system, sc.barriers, sc.lyapunov, x, np.zeros(3), sc.controller)
    assert res.infeasible
    assert res.u[0] == pytest.approx(-sc.meta["u_max"])
    held = compute_control(sc.system, sc.barriers, sc.lyapunov, x, np.zeros(3),
                           replace(sc.controller, infeasible_policy="hold"), u_prev=np.array([7.0]))
    assert held.infeasible and held.u[0] == 7.0


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(rho=0.0)
    with pytest.raises(ValueError):
        ControllerConfig(R=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        ControllerConfig(infeasible_policy="clip")
    with pytest.raises(ValueError):
        RobustConfig(np.zeros(2), -1.0)


@pytest.mark.parametrize("name", ["acc", "omni", "drone"])
def test_strict_feasibility_sample(name):
    report = feasibility_suite(build(name), n=100, seed=6)
    assert report["passed"], report["examples"]
