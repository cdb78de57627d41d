"""The three case studies: cruise control, omnidirectional robot, planar drone."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .adaptation import AdaptConfig
from .controller import ControllerConfig, RobustConfig, box_rows, polygon_rows
from .model import AffineSystem, BarrierSpec, LyapunovSpec, identity, linear_alpha

logger = logging.getLogger(__name__)

GRAVITY = 9.81


class ScenarioError(ValueError):
    """A scenario violates one of its structural assumptions."""


@dataclass(frozen=True)
class Scenario:
    name: str
    system: AffineSystem
    barriers: tuple
    lyapunov: LyapunovSpec
    controller: ControllerConfig
    adapt: AdaptConfig
    robust: RobustConfig
    x0: np.ndarray
    theta_hat0: np.ndarray
    T: float
    clearance: Callable[[np.ndarray], float]
    sample_interior: Callable[[np.random.Generator], np.ndarray]
    sample_shell: Callable[[np.random.Generator, float], np.ndarray]
    target: Optional[np.ndarray] = None
    position: Optional[slice] = None
    reach_radius: float = 0.5
    raw_barriers: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        theta_norm = float(np.linalg.norm(self.system.theta_true))
        if theta_norm > self.adapt.theta_max:
            raise ScenarioError(
                f"assumption A1 violated: |theta_true|={theta_norm:.4g} > theta_max={self.adapt.theta_max:g}")
        if float(np.linalg.norm(self.theta_hat0)) > self.adapt.theta_max:
            raise ScenarioError("initial estimate lies outside the parameter ball")
        for b in self.barriers + self.raw_barriers:
            if not b.h(self.x0) > 0:
                raise ScenarioError(f"x0 is not strictly inside barrier {b.label}")
        self.system.check_dims(self.x0)
        if self.T <= 0:
            raise ScenarioError("T must be positive")

    def reached(self, x) -> bool:
        if self.target is None:
            return False
        return float(np.linalg.norm(np.asarray(x)[self.position] - self.target)) <= self.reach_radius


# --- adaptive cruise control ----------------------------------------------

LEAD_PROFILE = ((0.0, 10.0), (25.0, 14.0), (50.0, 18.0), (75.0, 15.0))
LEAD_HORIZON = 100.0


def lead_velocity(t: float) -> float:
    """Piecewise-constant lead-vehicle speed in m/s on [0, 100)."""
    if t < 0.0 or t >= LEAD_HORIZON:
        logger.debug("lead_velocity: t=%g outside [0, 100), clamping", t)
    v = LEAD_PROFILE[0][1]
    for start, speed in LEAD_PROFILE:
        if t >= start:
            v = speed
    return v


def build_acc(mass: float = 1650.0, v_des: float = 26.0, headway: float = 1.8,
              x0=(25.0, 60.0), theta_true=(7.0, 6.0, 5.0), lam: float = 2.0,
              rho: float = 1e3, theta_max: float = 20.0,
              gamma_matrix=np.diag([1e4, 1e3, 1e2]), gamma: float = 1e2, kappa: float = 1.0,
              input_fraction: float = 0.25, T: float = 100.0) -> Scenario:
    """State ``(v, d)``: ego speed and gap; input is wheel force in N."""
    inv_m = 1.0 / mass

    def f(x):
        return np.array([0.0, -x[0]])

    def lead(t, x):
        return np.array([0.0, lead_velocity(t)])

    def F(x):
        v = x[0]
        return np.array([[-inv_m, -v * inv_m, -v * v * inv_m], [0.0, 0.0, 0.0]])

    G_mat = np.array([[inv_m], [0.0]])

    def G(x):
        return G_mat

    grad_h = np.array([-headway, 1.0])
    barrier = BarrierSpec(h=lambda x: x[1] - headway * x[0], grad_h=lambda x: grad_h,
                          alpha=identity, label="headway")
    lyap = LyapunovSpec(V=lambda x: (x[0] - v_des) ** 2,
                        grad_V=lambda x: np.array([2.0 * (x[0] - v_des), 0.0]), lam=lam)
    u_max = input_fraction * mass * GRAVITY
    system = AffineSystem(2, 1, 3, f, F, G, np.asarray(theta_true, dtype=float), lead)

    def sample_interior(rng):
        v = rng.uniform(0.0, 40.0)
        return np.array([v, headway * v + rng.uniform(0.05, 100.0)])

    def sample_shell(rng, radius):
        v = v_des + radius * rng.choice([-1.0, 1.0])
        return np.array([v, headway * v + rng.uniform(0.05, 100.0)])

    return Scenario(
        name="acc", system=system, barriers=(barrier,), lyapunov=lyap,
        controller=ControllerConfig(rho=rho, R=1.0, input_rows=box_rows([-u_max], [u_max])),
        adapt=AdaptConfig(np.asarray(gamma_matrix, dtype=float), gamma, kappa, theta_max),
        robust=RobustConfig(np.zeros(3), theta_max),
        x0=np.asarray(x0, dtype=float), theta_hat0=np.zeros(3), T=T,
        clearance=barrier.h, sample_interior=sample_interior, sample_shell=sample_shell,
        meta={"mass": mass, "v_des": v_des, "u_max": u_max,
              "states": ("v", "d"), "error": "v - v_des"},
    )


# --- omnidirectional robot ------------------------------------------------

def build_omni(x0=(0.0, 5.0), target=(10.0, 5.0), obstacle=(5.0, 5.0), radius: float = 4.5,
               theta_true=(0.3, -0.2), lam: float = 1.0, rho: float = 1e3,
               theta_max: float = 1.0, gamma_matrix=20.0 * np.eye(2), gamma: float = 10.0,
               kappa: float = 1.0, speed_limit: float = 2.0, polygon_sides: int = 16,
               kp: float = 1.0, alpha_gain: float = 2.0, T: float = 100.0) -> Scenario:
    """Kinematic point ``x_dot = u + theta`` passing a circular obstacle.

    Clearance is the signed distance to the obstacle surface, ``|x - c| - r``.
    """
    c = np.asarray(obstacle, dtype=float)
    xd = np.asarray(target, dtype=float)
    r2 = radius ** 2
    I2 = np.eye(2)

    barrier = BarrierSpec(h=lambda x: float((x - c) @ (x - c)) - r2,
                          grad_h=lambda x: 2.0 * (x - c),
                          alpha=identity if alpha_gain == 1.0 else linear_alpha(alpha_gain),
                          label="obstacle")
    lyap = LyapunovSpec(V=lambda x: float((x - xd) @ (x - xd)), grad_V=lambda x: 2.0 * (x - xd),
                        lam=lam)

    def nominal(x):
        u = kp * (xd - x)
        n = float(np.linalg.norm(u))
        return u * (speed_limit / n) if n > speed_limit else u

    system = AffineSystem(2, 2, 2, lambda x: np.zeros(2), lambda x: I2, lambda x: I2,
                          np.asarray(theta_true, dtype=float))

    def sample_interior(rng):
        while True:
            x = rng.uniform(-5.0, 15.0, size=2)
            if barrier.h(x) > 1e-3:
                return x

    def sample_shell(rng, rad):
        while True:
            a = rng.uniform(0, 2 * np.pi)
            x = xd + rad * np.array([np.cos(a), np.sin(a)])
            if barrier.h(x) > 1e-3:
                return x

    return Scenario(
        name="omni", system=system, barriers=(barrier,), lyapunov=lyap,
        controller=ControllerConfig(rho=rho, R=1.0, nominal_input=nominal,
                                    input_rows=polygon_rows(speed_limit, polygon_sides)),
        adapt=AdaptConfig(np.asarray(gamma_matrix, dtype=float), gamma, kappa, theta_max),
        robust=RobustConfig(np.zeros(2), theta_max),
        x0=np.asarray(x0, dtype=float), theta_hat0=np.zeros(2), T=T,
        clearance=lambda x: float(np.linalg.norm(x - c)) - radius,
        sample_interior=sample_interior, sample_shell=sample_shell,
        target=xd, position=slice(0, 2), reach_radius=0.5,
        meta={"obstacle": c.tolist(), "radius": radius, "speed_limit": speed_limit,
              "states": ("px", "py"), "kp": kp},
    )


# --- planar drone through a gate ------------------------------------------

def drone_barriers(centers, radius: float, mass: float, c1: float = 2.0, alpha_gain: float = 5.0):
    """Position barriers and their backstepped extensions ``hbar_dot + c1 hbar``."""
    r2 = radius ** 2
    raw, ext = [], []
    for i, c in enumerate(centers, start=1):
        c = np.asarray(c, dtype=float)

        def hbar(x, c=c):
            d = x[:2] - c
            return float(d @ d) - r2

        def grad_hbar(x, c=c):
            return np.concatenate([2.0 * (x[:2] - c), np.zeros(2)])

        def h(x, c=c):
            d = x[:2] - c
            return 2.0 * float(d @ x[2:]) + c1 * (float(d @ d) - r2)

        def grad_h(x, c=c):
            d = x[:2] - c
            return np.concatenate([2.0 * x[2:] + 2.0 * c1 * d, 2.0 * d])

        raw.append(BarrierSpec(hbar, grad_hbar, identity, f"hbar{i}"))
        ext.append(BarrierSpec(h, grad_h, linear_alpha(alpha_gain), f"h{i}"))
    return tuple(raw), tuple(ext)


def build_drone(mass: float = 1.0, p0=(-8.0, 6.0), v0=(0.0, 0.0), target=(8.0, -6.0),
                centers=((-5.0, 0.0), (5.0, 0.0)), radius: float = 4.8,
                theta_true=(1.0, 1.5), lam: float = 1.0, rho: float = 1e3,
                theta_max: float = 3.0, gamma_matrix=10.0 * np.eye(2), gamma: float = 10.0,
                kappa: float = 1.0, u_limit: float = 10.0, kp: float = 4.0, kd: float = 4.0,
                alpha_gain: float = 5.0, T: float = 12.0) -> Scenario:
    """Double integrator ``p_dot = v, v_dot = (u + theta) / m`` crossing a 0.4 m gate."""
    pd = np.asarray(target, dtype=float)
    inv_m = 1.0 / mass
    B = np.vstack([np.zeros((2, 2)), inv_m * np.eye(2)])
    raw, ext = drone_barriers(centers, radius, mass, alpha_gain=alpha_gain)

    def f(x):
        return np.concatenate([x[2:], np.zeros(2)])

    def V(x):
        s = x[2:] + x[:2] - pd
        return 0.5 * float(s @ s)

    def grad_V(x):
        s = x[2:] + x[:2] - pd
        return np.concatenate([s, s])

    def nominal(x):
        return kp * (pd - x[:2]) - kd * x[2:]

    system = AffineSystem(4, 2, 2, f, lambda x: B, lambda x: B, np.asarray(theta_true, dtype=float))

    def clearance(x):
        m = min(b.h(x) for b in raw)
        return float(np.sign(m) * np.sqrt(abs(m)))

    def inside(x):
        return all(b.h(x) > 1e-3 for b in raw + ext)

    def sample_interior(rng):
        while True:
            x = np.concatenate([rng.uniform(-10.0, 10.0, size=2), rng.normal(0.0, 2.0, size=2)])
            if inside(x):
                return x

    def sample_shell(rng, rad):
        while True:
            w = rng.normal(size=4)
            x = np.concatenate([pd, np.zeros(2)]) + rad * w / np.linalg.norm(w)
            if inside(x):
                return x

    return Scenario(
        name="drone", system=system, barriers=ext, lyapunov=LyapunovSpec(V, grad_V, lam),
        controller=ControllerConfig(rho=rho, R=1.0, nominal_input=nominal,
                                    input_rows=box_rows([-u_limit] * 2, [u_limit] * 2)),
        adapt=AdaptConfig(np.asarray(gamma_matrix, dtype=float), gamma, kappa, theta_max),
        robust=RobustConfig(np.zeros(2), theta_max),
        x0=np.concatenate([np.asarray(p0, dtype=float), np.asarray(v0, dtype=float)]),
        theta_hat0=np.zeros(2), T=T, clearance=clearance,
        sample_interior=sample_interior, sample_shell=sample_shell,
        target=pd, position=slice(0, 2), reach_radius=0.5, raw_barriers=raw,
        meta={"centers": [list(map(float, c)) for c in centers], "radius": radius,
              "mass": mass, "states": ("px", "py", "vx", "vy")},
    )


BUILDERS = {"acc": build_acc, "omni": build_omni, "drone": build_drone}


def build(name: str, **params) -> Scenario:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {sorted(BUILDERS)}") from None
    return builder(**params)


def gate_segment(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """End points of the free segment between the two drone obstacles."""
    c1, c2 = (np.asarray(c, dtype=float) for c in scenario.meta["centers"])
    r = scenario.meta["radius"]
    u = (c2 - c1) / np.linalg.norm(c2 - c1)
    return c1 + r * u, c2 - r * u
