import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cacbf.adaptation import (AdaptConfig, AdaptState, ProjectionDomainError,
                              adaptation_rate, integrate_estimate, project, raw_update)
from cacbf.checks import projection_suite, random_spd
from cacbf.model import DomainError, eval_dynamics
from cacbf.scenarios import build_omni


def _cfg(p=2, theta_max=2.0, G=None):
    return AdaptConfig(np.eye(p) if G is None else G, gamma=1.0, kappa=1.0, theta_max=theta_max)


def test_interior_passthrough():
    tau = np.array([3.0, -7.0])
    np.testing.assert_array_equal(project(tau, np.array([1.0, 0.0]), _cfg()), tau)


def test_boundary_outward_is_made_tangent():
    out = project(np.array([1.0, 1.0]), np.array([2.0, 0.0]), _cfg())
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)
    assert abs(np.array([2.0, 0.0]) @ out) < 1e-10


def test_boundary_inward_passthrough():
    th = np.array([0.0, 2.0])
    np.testing.assert_array_equal(project(-th, th, _cfg()), -th)


def test_outside_ball_raises():
    with pytest.raises(ProjectionDomainError):
        project(np.ones(2), np.array([2.5, 0.0]), _cfg())


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(np.eye(2), gamma=-1.0, kappa=1.0, theta_max=1.0)
    with pytest.raises(ValueError):
        AdaptConfig(np.eye(2), gamma=1.0, kappa=1.0, theta_max=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(-np.eye(2), gamma=1.0, kappa=1.0, theta_max=1.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_boundary_tangency_nonidentity_gain(seed, p):
    rng = np.random.default_rng(seed)
    G = random_spd(rng, p)
    th = rng.normal(size=p)
    th *= 1.5 / np.linalg.norm(th)
    tau = rng.normal(size=p) * 10
    out = project(tau, th, _cfg(p, 1.5, G))
    assert th @ out <= 1e-10 * (1 + np.abs(tau).sum())
    if th @ tau > 0:
        assert abs(th @ out) <= 1e-10 * (1 + np.abs(tau).sum())


def test_projection_inequality_sample():
    report = projection_suite(n=2000, seed=3)
    assert report["passed"], report["examples"]


def test_omni_rate_at_start():
    sc = build_omni()
    x = sc.x0
    xdot = sc.system.theta_true.copy()          # u_prev = 0, no drift
    rate = adaptation_rate(0.0, x, np.zeros(2), np.zeros(2), xdot, sc.barriers,
                           sc.lyapunov, sc.system, sc.adapt)
    expected = 20.0 * np.array([-20.0 + 10.0 / (4.75 * 5.75) + 3.0, -2.0])
    np.testing.assert_allclose(rate, expected, rtol=1e-12)
    np.testing.assert_allclose(rate, [-332.68, -40.0], atol=0.01)


def test_no_excitation_gives_zero_rate():
    """psi = 0 (no barrier), phi = 0 (at the target), e = 0."""
    sc = build_omni()
    tau = raw_update(sc.target, np.zeros(2),
                     np.zeros(2), (), sc.lyapunov, sc.system, sc.adapt)
    np.testing.assert_array_equal(tau, np.zeros(2))


def test_nonpositive_barrier_raises():
    sc = build_omni()
    with pytest.raises(DomainError):
        adaptation_rate(0.0, np.array([5.0, 5.0]), np.zeros(2), np.zeros(2), np.zeros(2),
                        sc.barriers, sc.lyapunov, sc.system, sc.adapt)


def test_gradient_term_is_dissipative():
    """gamma F^T e contributes -gamma |e|^2 to d/dt(1/2 theta_err^T Gamma^-1 theta_err)."""
    sc = build_omni()
    rng = np.random.default_rng(0)
    sys, cfg = sc.system, sc.adapt
    Gi = np.linalg.inv(cfg.gamma_matrix)
    for _ in range(50):
        x = sc.sample_interior(rng)
        th = rng.uniform(-0.5, 0.5, size=2)
        u = rng.normal(size=2)
        xdot = eval_dynamics(sys, 0.0, x, u, sys.theta_true)
        e = xdot - eval_dynamics(sys, 0.0, x, u, th)
        term = cfg.gamma_matrix @ (cfg.gamma * sys.F(x).T @ e)
        contrib = (th - sys.theta_true) @ Gi @ term
        assert contrib == pytest.approx(-cfg.gamma * e @ e, rel=1e-12)
        assert contrib <= 0


def test_integrate_zero_rate_unchanged():
    s = AdaptState(np.array([0.3, 0.1]), np.zeros(1))
    out = integrate_estimate(s, np.zeros(2), 0.01, 1.0)
    np.testing.assert_array_equal(out.theta_hat, s.theta_hat)


def test_integrate_euler_step():
    out = integrate_estimate(AdaptState(np.zeros(2), np.zeros(1)), np.array([1.0, 2.0]), 0.01, 5.0)
    np.testing.assert_allclose(out.theta_hat, [0.01, 0.02], rtol=1e-15)


def test_integrate_radial_guard():
    out = integrate_estimate(AdaptState(np.array([2.0, 0.0]), np.zeros(1)),
                             np.array([0.0, 3.0]), 0.1, 2.0)
    assert np.linalg.norm(out.theta_hat) == pytest.approx(2.0, abs=1e-15)


def test_integrate_records_input_and_rejects_bad_dt():
    s = AdaptState(np.zeros(2), np.zeros(2))
    assert np.array_equal(integrate_estimate(s, np.zeros(2), 0.1, 1.0, u=[1.0, 2.0]).last_input,
                          [1.0, 2.0])
    with pytest.raises(ValueError):
        integrate_estimate(s, np.zeros(2), 0.0, 1.0)
