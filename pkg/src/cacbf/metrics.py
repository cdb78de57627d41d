"""Comparison metrics over logged trajectories and the containment sampler."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .controller import ConstraintRows, cacbf_constraints, rcbf_constraints
from .qp import QpProblem, solve_qp
from .scenarios import Scenario, gate_segment
from .simulator import Trajectory, sample_ball

TIMEOUT = "timeout"


@dataclass
class MetricsReport:
    scenario: str
    controller: str
    h_min: float
    barrier_min: float
    eta: float
    E_control: float
    path_length: float
    T_reach: Optional[float]
    infeasibility_count: int
    horizon: float
    E_brake: Optional[float] = None
    crosses_gate: Optional[bool] = None

    @property
    def timed_out(self) -> bool:
        return self.T_reach is None

    def reach_key(self) -> float:
        """``T_reach`` with a timeout ordered after every finite time."""
        return np.inf if self.T_reach is None else self.T_reach

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        d["T_reach"] = TIMEOUT if self.T_reach is None else self.T_reach
        return d


def clearance_series(traj: Trajectory, scenario: Scenario) -> np.ndarray:
    return np.array([scenario.clearance(x) for x in traj.x])


def reach_time(traj: Trajectory, scenario: Scenario) -> Optional[float]:
    """First logged time with the position within the reach radius, else ``None``."""
    if scenario.target is None:
        return None
    pos = traj.x[:, scenario.position]
    idx = np.flatnonzero(np.linalg.norm(pos - scenario.target, axis=1) <= scenario.reach_radius)
    return float(traj.t[idx[0]]) if idx.size else None


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def crosses_segment(path: np.ndarray, p: np.ndarray, q: np.ndarray) -> bool:
    """True if the polyline ``path`` (N x 2) properly intersects segment ``pq``."""
    a, b = path[:-1], path[1:]
    d = q - p
    s1 = _cross(d, a - p)
    s2 = _cross(d, b - p)
    e = b - a
    s3 = _cross(e, p - a)
    s4 = _cross(e, q - a)
    return bool(np.any((s1 * s2 < 0) & (s3 * s4 < 0)))


def compute_metrics(traj: Trajectory, scenario: Scenario) -> MetricsReport:
    """All metrics that apply to ``scenario``; integrals use the trapezoid rule."""
    t = traj.t
    span = float(t[-1] - t[0])
    clear = clearance_series(traj, scenario)
    unorm = np.linalg.norm(traj.u, axis=1)
    E_control = float(np.trapezoid(unorm, t))
    report = MetricsReport(
        scenario=scenario.name,
        controller=str(traj.meta.get("controller", "")),
        h_min=float(clear.min()),
        barrier_min=float(traj.h.min()),
        eta=float(np.trapezoid(clear, t) / span) if span > 0 else float(clear[0]),
        E_control=E_control,
        path_length=E_control,
        T_reach=reach_time(traj, scenario),
        infeasibility_count=traj.infeasible_count,
        horizon=float(t[-1]),
    )
    if scenario.name == "acc":
        report.E_brake = float(np.trapezoid(np.abs(np.minimum(0.0, traj.u[:, 0])), t))
    if scenario.name == "drone":
        p, q = gate_segment(scenario)
        report.crosses_gate = crosses_segment(traj.x[:, scenario.position], p, q)
    return report


# --- containment of the robust safe-input set in the adaptive one ---------

@dataclass
class ContainmentResult:
    n_checked: int = 0
    n_violations: int = 0
    examples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def _safety_only(rows: ConstraintRows, m: int) -> tuple[np.ndarray, np.ndarray]:
    idx = [i for i, lab in enumerate(rows.labels) if lab.startswith("safety")]
    return rows.A[idx, :m], rows.b[idx]


def _sample_controls(rng, A, b, n, scale):
    """Controls satisfying ``A u <= b``: half projected onto the boundary, half interior."""
    m = A.shape[1]
    out = []
    Q = np.eye(m)
    tries = 0
    while len(out) < n and tries < 50 * n:
        tries += 1
        u = rng.normal(scale=scale, size=m)
        if np.all(A @ u <= b):
            if len(out) % 2 == 0:
                out.append(u)
            continue
        sol = solve_qp(QpProblem(Q, -u, A, b))
        if sol.solved:
            out.append(sol.z_star)
    return out


def containment_check(scenario: Scenario, n_states: int = 1000, n_controls: int = 100,
                      seed: int = 0, margin_sign: float = 1.0, tol: float = 1e-9,
                      max_report: int = 20) -> ContainmentResult:
    """Check that every input admissible for the robust safety rows is admissible adaptively.

    States are drawn from the scenario interior, estimates uniformly from the
    robust parameter ball. ``margin_sign=-1`` flips the robust margin and
    should produce violations.
    """
    rng = np.random.default_rng(seed)
    sys = scenario.system
    m, p = sys.input_dim, sys.param_dim
    cfg = scenario.controller.without_input_bounds()
    result = ContainmentResult()
    for _ in range(n_states):
        x = scenario.sample_interior(rng)
        th = sample_ball(rng, p, scenario.robust.theta_max)
        Ar, br = _safety_only(rcbf_constraints(sys, scenario.barriers, scenario.lyapunov, x,
                                               scenario.robust, cfg, margin_sign=margin_sign), m)
        Aa, ba = _safety_only(cacbf_constraints(sys, scenario.barriers, scenario.lyapunov, x,
                                                th, cfg), m)
        scale = 1.0 + float(np.max(np.abs(br)) / max(np.max(np.abs(Ar)), 1e-12))
        for u in _sample_controls(rng, Ar, br, n_controls, scale):
            result.n_checked += 1
            excess = Aa @ u - ba
            lim = tol * (1.0 + np.abs(ba) + np.abs(Aa) @ np.abs(u))
            if np.any(excess > lim):
                result.n_violations += 1
                if len(result.examples) < max_report:
                    result.examples.append({"x": x.tolist(), "theta_hat": th.tolist(),
                                            "u": u.tolist(), "excess": float(excess.max())})
    return result
