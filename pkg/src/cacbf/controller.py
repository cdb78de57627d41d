"""Adaptive CLF-CBF-QP and the robust-margin baseline.

Decision variable is ``z = (u, delta)``. Every constraint is written as a row
``a^T z <= b``:

* safety (one per barrier)   ``[-L_G h, 0] z <= L_f h + psi theta + alpha(h) [- sigma]``
* stability                  ``[ L_G V, -1] z <= -L_f V - phi theta - lambda V``
* relaxation sign            ``[0, -1] z <= 0``
* input bounds               ``[C, 0] z <= c``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import AffineSystem, BarrierSpec, LyapunovSpec, check_spd, safety_regressor, \
    stability_regressor
from .qp import QpProblem, QpSolution, solve_qp

# penalty on safety-row violation in the fallback problem, relative to rho
FALLBACK_WEIGHT = 1e9


def box_rows(lower, upper) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``C u <= c`` for ``lower <= u <= upper`` (componentwise)."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    m = lower.size
    C = np.vstack([np.eye(m), -np.eye(m)])
    return C, np.concatenate([upper, -lower])


def polygon_rows(radius: float, sides: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Inner polygonal approximation of ``||u|| <= radius`` in the plane.

    Vertices sit on the circle at angles ``2 pi k / sides``, so the facet
    distance is ``radius cos(pi / sides)``.
    """
    ang = (2 * np.arange(sides) + 1) * np.pi / sides
    C = np.column_stack([np.cos(ang), np.sin(ang)])
    return C, np.full(sides, radius * np.cos(np.pi / sides))


@dataclass(frozen=True)
class ControllerConfig:
    rho: float = 1e3
    R: Callable[[np.ndarray], np.ndarray] | np.ndarray | float = 1.0
    nominal_input: Optional[Callable[[np.ndarray], np.ndarray]] = None
    input_rows: Optional[tuple] = None
    infeasible_policy: str = "relax"

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.infeasible_policy not in ("relax", "hold"):
            raise ValueError(f"unknown infeasibility policy {self.infeasible_policy!r}")
        if not callable(self.R):
            check_spd(self.R, "R")

    def R_at(self, x: np.ndarray, m: int) -> np.ndarray:
        if callable(self.R):
            R = np.asarray(self.R(x), dtype=float)
            check_spd(R, "R(x)")
        else:
            R = np.asarray(self.R, dtype=float)
        return R * np.eye(m) if R.ndim == 0 else R

    def without_input_bounds(self) -> "ControllerConfig":
        from dataclasses import replace
        return replace(self, input_rows=None)


@dataclass(frozen=True)
class RobustConfig:
    theta_e: np.ndarray
    theta_max: float

    def __post_init__(self):
        object.__setattr__(self, "theta_e", np.asarray(self.theta_e, dtype=float))
        if self.theta_max < 0:
            raise ValueError("theta_max must be nonnegative")


@dataclass
class ConstraintRows:
    A: np.ndarray
    b: np.ndarray
    labels: list = field(default_factory=list)

    def satisfied(self, z, tol: float = 1e-8) -> bool:
        return bool(np.all(self.A @ z <= self.b + tol * (1.0 + np.max(np.abs(self.b), initial=0.0))))


@dataclass
class ControlResult:
    u: np.ndarray
    delta: float
    solution: Optional[QpSolution]
    problem: Optional[QpProblem]
    infeasible: bool = False


def _safety_terms(t, sys, b: BarrierSpec, x):
    gh = b.grad_h(x)
    h = float(b.h(x))
    Lf = float(gh @ sys.drift(t, x))
    LG = gh @ sys.G(x)
    psi = gh @ sys.F(x)
    return h, Lf, LG, psi


def _stability_row(t, sys, lyap: LyapunovSpec, x, theta):
    gV = lyap.grad_V(x)
    m = sys.input_dim
    row = np.zeros(m + 1)
    row[:m] = gV @ sys.G(x)
    row[m] = -1.0
    bound = -float(gV @ sys.drift(t, x)) - float((gV @ sys.F(x)) @ theta) - lyap.lam * float(lyap.V(x))
    return row, bound


def _input_rows(cfg: ControllerConfig, m: int):
    if cfg.input_rows is None:
        return np.zeros((0, m + 1)), np.zeros(0)
    C, c = cfg.input_rows
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return np.hstack([C, np.zeros((C.shape[0], 1))]), np.asarray(c, dtype=float)


def _assemble(t, sys, barriers, lyap, x, theta, cfg, margins):
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m = sys.input_dim
    rows, bounds, labels = [], [], []
    for b, sigma in zip(barriers, margins):
        h, Lf, LG, psi = _safety_terms(t, sys, b, x)
        row = np.zeros(m + 1)
        row[:m] = -LG
        rows.append(row)
        bounds.append(Lf + float(psi @ theta) + float(b.alpha(h)) - sigma)
        labels.append(f"safety:{b.label}")
    row, bound = _stability_row(t, sys, lyap, x, theta)
    rows.append(row)
    bounds.append(bound)
    labels.append("stability")
    Ain, bin_ = _input_rows(cfg, m)
    labels += ["input"] * len(bin_)
    A = np.vstack([np.array(rows), Ain])
    return ConstraintRows(A, np.concatenate([bounds, bin_]), labels)


def cacbf_constraints(sys: AffineSystem, barriers: Sequence[BarrierSpec], lyap: LyapunovSpec,
                      x, theta_hat, cfg: ControllerConfig, t: float = 0.0) -> ConstraintRows:
    """Safety, stability and input rows built with the current estimate."""
    if isinstance(barriers, BarrierSpec):
        barriers = (barriers,)
    return _assemble(t, sys, barriers, lyap, x, theta_hat, cfg, [0.0] * len(barriers))


def robust_margin(barrier: BarrierSpec, sys: AffineSystem, x, rcfg: RobustConfig) -> float:
    """Worst case of ``|psi (v - theta_e)|`` over the ball ``||v|| <= theta_max``."""
    psi = safety_regressor(sys, barrier, x)
    return float(np.linalg.norm(psi) * rcfg.theta_max + abs(psi @ rcfg.theta_e))


def rcbf_constraints(sys: AffineSystem, barriers: Sequence[BarrierSpec], lyap: LyapunovSpec,
                     x, rcfg: RobustConfig, cfg: ControllerConfig, t: float = 0.0,
                     margin_sign: float = 1.0) -> ConstraintRows:
    """Rows of the robust baseline: fixed estimate, safety tightened by the margin.

    ``margin_sign=-1`` loosens instead of tightening; it exists only to
    fault-inject the containment sampler.
    """
    if isinstance(barriers, BarrierSpec):
        barriers = (barriers,)
    margins = [margin_sign * robust_margin(b, sys, x, rcfg) for b in barriers]
    return _assemble(t, sys, barriers, lyap, x, rcfg.theta_e, cfg, margins)


def build_qp(rows: ConstraintRows, sys: AffineSystem, x, cfg: ControllerConfig) -> QpProblem:
    """Cost ``1/2 |u - u_n|_R^2 + rho delta^2`` with the given rows plus ``delta >= 0``."""
    m = sys.input_dim
    R = cfg.R_at(np.asarray(x, dtype=float), m)
    Q = np.zeros((m + 1, m + 1))
    Q[:m, :m] = R
    Q[m, m] = 2.0 * cfg.rho
    q = np.zeros(m + 1)
    if cfg.nominal_input is not None:
        q[:m] = -R @ np.asarray(cfg.nominal_input(x), dtype=float)
    slack_row = np.zeros((1, m + 1))
    slack_row[0, m] = -1.0
    A = np.vstack([rows.A, slack_row])
    b = np.concatenate([rows.b, [0.0]])
    if not (np.isfinite(A).all() and np.isfinite(b).all() and np.isfinite(q).all()):
        raise ValueError("non-finite constraint data")
    # Q is block diagonal with an SPD R block and a positive scalar
    return QpProblem.trusted(Q, q, A, b)


def _relaxed_solve(rows: ConstraintRows, sys: AffineSystem, x, cfg: ControllerConfig):
    """Least-violation fallback: safety rows get a heavily penalized slack."""
    m = sys.input_dim
    base = build_qp(rows, sys, x, cfg)
    safe_idx = [i for i, lab in enumerate(rows.labels) if lab.startswith("safety")]
    ns = len(safe_idx)
    d = m + 1 + ns
    Q = np.zeros((d, d))
    Q[:m + 1, :m + 1] = base.Q
    Q[m + 1:, m + 1:] = np.eye(ns) * 2.0 * FALLBACK_WEIGHT * cfg.rho
    q = np.concatenate([base.q, np.zeros(ns)])
    A = np.hstack([base.A, np.zeros((base.A.shape[0], ns))])
    for j, i in enumerate(safe_idx):
        A[i, m + 1 + j] = -1.0
    A = np.vstack([A, np.hstack([np.zeros((ns, m + 1)), -np.eye(ns)])])
    b = np.concatenate([base.b, np.zeros(ns)])
    p = QpProblem.trusted(Q, q, A, b)
    return p, solve_qp(p)


def compute_control(sys: AffineSystem, barriers, lyap, x, theta_hat, cfg: ControllerConfig,
                    t: float = 0.0, robust: Optional[RobustConfig] = None,
                    u_prev=None) -> ControlResult:
    """Solve the adaptive QP, or the robust one when ``robust`` is given.

    An infeasible problem (only possible once input bounds are present) is
    flagged; the applied input then follows ``cfg.infeasible_policy``:
    ``"relax"`` minimizes safety-row violation within the input bounds,
    ``"hold"`` repeats ``u_prev``.
    """
    if isinstance(barriers, BarrierSpec):
        barriers = (barriers,)
    if robust is None:
        rows = cacbf_constraints(sys, barriers, lyap, x, theta_hat, cfg, t=t)
    else:
        rows = rcbf_constraints(sys, barriers, lyap, x, robust, cfg, t=t)
    p = build_qp(rows, sys, x, cfg)
    sol = solve_qp(p)
    m = sys.input_dim
    if sol.solved:
        return ControlResult(sol.z_star[:m].copy(), float(sol.z_star[m]), sol, p)
    if cfg.infeasible_policy == "hold":
        u = np.zeros(m) if u_prev is None else np.asarray(u_prev, dtype=float)
        return ControlResult(u.copy(), float("nan"), sol, p, infeasible=True)
    p2, sol2 = _relaxed_solve(rows, sys, x, cfg)
    if not sol2.solved:
        u = np.zeros(m) if u_prev is None else np.asarray(u_prev, dtype=float)
        return ControlResult(u.copy(), float("nan"), sol2, p2, infeasible=True)
    return ControlResult(sol2.z_star[:m].copy(), float(sol2.z_star[m]), sol2, p2, infeasible=True)


def strict_feasibility_witness(sys: AffineSystem, barriers, lyap, x, theta_hat,
                               t: float = 0.0) -> np.ndarray:
    """Interior point of the bound-free QP built as in the feasibility argument.

    Pick ``u`` strictly inside every safety half-space, then take ``delta``
    large enough to make the stability row slack.
    """
    if isinstance(barriers, BarrierSpec):
        barriers = (barriers,)
    x = np.asarray(x, dtype=float)
    m = sys.input_dim
    cfg = ControllerConfig()
    rows = cacbf_constraints(sys, barriers, lyap, x, theta_hat, cfg, t=t)
    nb = len(barriers)
    Au, bu = rows.A[:nb, :m], rows.b[:nb]
    # least-norm u with margin 1 on every safety row
    u = np.linalg.lstsq(Au, bu - 1.0, rcond=None)[0]
    if np.any(Au @ u >= bu):
        raise ValueError("no common strict interior for the safety rows")
    a2, b2 = rows.A[nb], rows.b[nb]
    delta = max(0.0, float(a2[:m] @ u - b2)) + 1.0
    return np.concatenate([u, [delta]])
