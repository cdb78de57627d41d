"""Fixed-step closed-loop simulation of plant, estimator and QP controller.

Each control period at time ``t``:

1. measure ``x_dot`` (exact plant evaluation under the input held over the
   previous period, or a backward difference of the state);
2. evaluate the projected adaptation rate (adaptive controller only);
3. solve the QP with the current estimate;
4. integrate the plant with classical RK4 under the new input (zero-order
   hold) and advance the estimate by one Euler step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adaptation import AdaptState, adaptation_rate, integrate_estimate
from .controller import compute_control
from .model import composite_energy, eval_dynamics
from .scenarios import Scenario

logger = logging.getLogger(__name__)

CONTROLLERS = ("cacbf", "rcbf")


class SafetyViolation(RuntimeError):
    """A barrier became non-positive along the simulated trajectory."""

    def __init__(self, message, t=None, x=None, h=None):
        super().__init__(message)
        self.t, self.x, self.h = t, x, h


@dataclass
class SimState:
    t: float
    x: np.ndarray
    adapt: AdaptState
    x_prev: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    delta: float = 0.0
    h: Optional[np.ndarray] = None
    V: float = float("nan")
    e_norm: float = 0.0
    infeasible: bool = False


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    theta_hat: np.ndarray
    h: np.ndarray
    V: np.ndarray
    e_norm: np.ndarray
    infeasible: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def infeasible_count(self) -> int:
        return int(np.count_nonzero(self.infeasible))


def initial_state(scenario: Scenario) -> SimState:
    m = scenario.system.input_dim
    return SimState(0.0, scenario.x0.copy(),
                    AdaptState(scenario.theta_hat0.copy(), np.zeros(m)))


def _plant(scenario: Scenario, t, x, u):
    sys = scenario.system
    return sys.drift(t, x) + sys.F(x) @ sys.theta_true + sys.G(x) @ u


def rk4(fun, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = fun(t, x)
    k2 = fun(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = fun(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = fun(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _barrier_values(scenario: Scenario, x) -> np.ndarray:
    return np.array([b.h(x) for b in scenario.barriers])


def control_update(sim: SimState, scenario: Scenario, controller: str, dt: float,
                   measurement: str = "exact"):
    """Outputs at ``sim.t``: input, relaxation, adaptation rate and diagnostics."""
    if controller not in CONTROLLERS:
        raise ValueError(f"unknown controller {controller!r}")
    sys = scenario.system
    x, th, u_prev = sim.x, sim.adapt.theta_hat, sim.adapt.last_input
    h = _barrier_values(scenario, x)
    if not np.all(h > 0):
        i = int(np.argmin(h))
        raise SafetyViolation(
            f"{scenario.name}/{controller}: barrier {scenario.barriers[i].label} = {h[i]:.3e} "
            f"at t={sim.t:.4f}", t=sim.t, x=x.copy(), h=h)

    if measurement == "exact" or sim.x_prev is None:
        xdot = _plant(scenario, sim.t, x, u_prev)
    elif measurement == "difference":
        xdot = (x - sim.x_prev) / dt
    else:
        raise ValueError(f"unknown measurement mode {measurement!r}")
    e = xdot - eval_dynamics(sys, sim.t, x, u_prev, th)

    if controller == "cacbf":
        rate = adaptation_rate(sim.t, x, th, u_prev, xdot, scenario.barriers,
                               scenario.lyapunov, sys, scenario.adapt)
        res = compute_control(sys, scenario.barriers, scenario.lyapunov, x, th,
                              scenario.controller, t=sim.t, u_prev=u_prev)
    else:
        rate = np.zeros_like(th)
        res = compute_control(sys, scenario.barriers, scenario.lyapunov, x, th,
                              scenario.controller, t=sim.t, robust=scenario.robust,
                              u_prev=u_prev)
    return res, rate, h, float(np.linalg.norm(e))


def step(sim: SimState, scenario: Scenario, controller: str, dt: float,
         measurement: str = "exact") -> SimState:
    """Advance one control period; the returned state carries the outputs used."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    res, rate, h, e_norm = control_update(sim, scenario, controller, dt, measurement)
    u = res.u
    x_next = rk4(lambda t, x: _plant(scenario, t, x, u), sim.t, sim.x, dt)
    adapt = integrate_estimate(sim.adapt, rate, dt, scenario.adapt.theta_max, u=u)
    return SimState(sim.t + dt, x_next, adapt, x_prev=sim.x, u=u, delta=res.delta,
                    h=h, V=float(scenario.lyapunov.V(sim.x)), e_norm=e_norm,
                    infeasible=res.infeasible)


def run(scenario: Scenario, controller: str = "cacbf", T: Optional[float] = None,
        dt: float = 1e-3, sample_stride: int = 1, measurement: str = "exact",
        seed: int = 0) -> Trajectory:
    """Simulate ``[0, T]`` and log every ``sample_stride``-th control period.

    Raises ``SafetyViolation`` if any barrier reaches zero.
    """
    T = scenario.T if T is None else T
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    n_steps = int(round(T / dt))
    if sample_stride < 1 or n_steps % sample_stride:
        raise ValueError("sample_stride must divide the number of steps")
    n_rec = n_steps // sample_stride + 1
    sys = scenario.system
    n, m, p, k = sys.state_dim, sys.input_dim, sys.param_dim, len(scenario.barriers)
    out = Trajectory(np.empty(n_rec), np.empty((n_rec, n)), np.empty((n_rec, m)),
                     np.empty(n_rec), np.empty((n_rec, p)), np.empty((n_rec, k)),
                     np.empty(n_rec), np.empty(n_rec), np.zeros(n_rec, dtype=bool),
                     meta={"scenario": scenario.name, "controller": controller, "dt": dt,
                           "T": T, "seed": seed, "measurement": measurement})
    sim = initial_state(scenario)
    lyap = scenario.lyapunov
    for i in range(n_steps + 1):
        sim.t = i * dt
        res, rate, h, e_norm = control_update(sim, scenario, controller, dt, measurement)
        if i % sample_stride == 0:
            j = i // sample_stride
            out.t[j] = sim.t
            out.x[j] = sim.x
            out.u[j] = res.u
            out.delta[j] = res.delta
            out.theta_hat[j] = sim.adapt.theta_hat
            out.h[j] = h
            out.V[j] = lyap.V(sim.x)
            out.e_norm[j] = e_norm
            out.infeasible[j] = res.infeasible
        if res.infeasible:
            logger.debug("%s/%s: QP infeasible at t=%.4f", scenario.name, controller, sim.t)
        if i == n_steps:
            break
        u = res.u
        x_next = rk4(lambda t, x: _plant(scenario, t, x, u), sim.t, sim.x, dt)
        adapt = integrate_estimate(sim.adapt, rate, dt, scenario.adapt.theta_max, u=u)
        sim = SimState(sim.t + dt, x_next, adapt, x_prev=sim.x)
    return out


def composite_energy_series(traj: Trajectory, scenario: Scenario) -> np.ndarray:
    """V_c along a logged trajectory (needs the true parameter)."""
    return np.array([composite_energy(scenario.barriers, scenario.lyapunov, scenario.adapt,
                                      x, th, scenario.system.theta_true)
                     for x, th in zip(traj.x, traj.theta_hat)])


def dissipation_check(traj: Trajectory, scenario: Scenario, tol: float = 1e-3) -> dict:
    """Compare the forward-differenced V_c with its dissipation bound.

    Bound: ``sum_i alpha(h_i)/(h_i(1+h_i)) - kappa lambda V - gamma |e|^2 + kappa delta``.
    A sample passes when the difference quotient exceeds the bound by at most
    ``tol * (1 + sum of term magnitudes)``. Samples flagged infeasible are
    counted as failures.
    """
    cfg = scenario.adapt
    lam = scenario.lyapunov.lam
    Vc = composite_energy_series(traj, scenario)
    dt = np.diff(traj.t)
    dVc = np.diff(Vc) / dt
    alpha_terms = np.zeros(len(traj))
    for j, b in enumerate(scenario.barriers):
        hj = traj.h[:, j]
        alpha_terms += np.array([b.alpha(v) for v in hj]) / (hj * (1.0 + hj))
    delta = np.nan_to_num(traj.delta, nan=0.0)
    terms = np.vstack([alpha_terms, -cfg.kappa * lam * traj.V, -cfg.gamma * traj.e_norm ** 2,
                       cfg.kappa * delta])
    bound = terms.sum(axis=0)[:-1]
    scale = 1.0 + np.abs(terms[:, :-1]).sum(axis=0) + np.abs(dVc)
    ok = (dVc <= bound + tol * scale) & ~traj.infeasible[:-1]
    return {"fraction": float(np.mean(ok)), "n": int(ok.size),
            "worst_excess": float(np.max((dVc - bound) / scale))}


def dominance_diagnostic(scenario: Scenario, radii, samples_per_shell: int = 200,
                         seed: int = 0) -> list[dict]:
    """Per-shell minimum of ``lambda V(x) - delta*(x, theta_hat)``.

    States come from ``scenario.sample_shell``; estimates are uniform in the
    parameter ball. Input bounds are dropped, as in the growth argument.
    """
    rng = np.random.default_rng(seed)
    cfg = scenario.controller.without_input_bounds()
    lam = scenario.lyapunov.lam
    p = scenario.system.param_dim
    report = []
    for rad in radii:
        vals = []
        for _ in range(samples_per_shell):
            x = scenario.sample_shell(rng, float(rad))
            th = sample_ball(rng, p, scenario.adapt.theta_max)
            res = compute_control(scenario.system, scenario.barriers, scenario.lyapunov, x, th, cfg)
            vals.append(lam * scenario.lyapunov.V(x) - res.delta)
        report.append({"radius": float(rad), "min": float(np.min(vals)), "n": samples_per_shell})
    return report


def sample_ball(rng: np.random.Generator, p: int, radius: float) -> np.ndarray:
    """Uniform sample from the closed Euclidean ball."""
    w = rng.normal(size=p)
    w /= np.linalg.norm(w)
    return w * radius * rng.uniform() ** (1.0 / p)
