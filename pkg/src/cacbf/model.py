"""Uncertain control-affine model, barrier/Lyapunov specs and regressors.

The plant is

    x_dot = f(t, x) + F(x) theta + G(x) u

with ``theta`` an unknown constant living in a Euclidean ball of known
radius. Barrier and Lyapunov functions carry analytic gradients; the
regressors are the Lie derivatives of those functions along ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

Field = Callable[[np.ndarray], float]
VectorField = Callable[[np.ndarray], np.ndarray]


class DomainError(ValueError):
    """Raised when a barrier-dependent quantity is evaluated outside int C."""


def identity(r: float) -> float:
    return r


def linear_alpha(gain: float) -> Callable[[float], float]:
    """Return ``r -> gain * r``; the extended class-K function used throughout."""
    if gain <= 0:
        raise ValueError("alpha gain must be positive")

    def alpha(r: float) -> float:
        return gain * r

    alpha.gain = gain  # type: ignore[attr-defined]
    return alpha


@dataclass(frozen=True)
class AffineSystem:
    """Known fields of the plant plus the ground-truth parameter.

    ``theta_true`` is only read by the simulator and by diagnostics; the
    controller never sees it.
    """

    state_dim: int
    input_dim: int
    param_dim: int
    f: VectorField
    F: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]
    theta_true: np.ndarray
    time_varying_drift: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        fx = self.f(x)
        if self.time_varying_drift is not None:
            fx = fx + self.time_varying_drift(t, x)
        return fx

    def check_dims(self, x: np.ndarray, t: float = 0.0) -> None:
        n, m, p = self.state_dim, self.input_dim, self.param_dim
        if np.shape(x) != (n,):
            raise ValueError(f"state has shape {np.shape(x)}, expected ({n},)")
        if np.shape(self.drift(t, x)) != (n,):
            raise ValueError("f(t, x) has wrong shape")
        if np.shape(self.F(x)) != (n, p):
            raise ValueError(f"F(x) has shape {np.shape(self.F(x))}, expected ({n}, {p})")
        if np.shape(self.G(x)) != (n, m):
            raise ValueError(f"G(x) has shape {np.shape(self.G(x))}, expected ({n}, {m})")


@dataclass(frozen=True)
class BarrierSpec:
    h: Field
    grad_h: VectorField
    alpha: Callable[[float], float] = identity
    label: str = "h"


@dataclass(frozen=True)
class LyapunovSpec:
    V: Field
    grad_V: VectorField
    lam: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class CompositeEnergyInputs:
    kappa: float
    gamma_matrix: np.ndarray

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        check_spd(self.gamma_matrix, "Gamma")


def check_spd(M: np.ndarray, name: str = "matrix", tol: float = 1e-12) -> None:
    """Raise ``ValueError`` unless ``M`` is symmetric positive definite."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if not np.allclose(M, M.T, rtol=0.0, atol=tol * scale):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc


def eval_dynamics(sys: AffineSystem, t: float, x, u, theta) -> np.ndarray:
    """Evaluate ``f(t,x) + F(x) theta + G(x) u``; shapes are checked."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if x.shape != (sys.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.state_dim},)")
    if u.shape != (sys.input_dim,):
        raise ValueError(f"input has shape {u.shape}, expected ({sys.input_dim},)")
    if theta.shape != (sys.param_dim,):
        raise ValueError(f"parameter has shape {theta.shape}, expected ({sys.param_dim},)")
    return sys.drift(t, x) + sys.F(x) @ theta + sys.G(x) @ u


def safety_regressor(sys: AffineSystem, barrier: BarrierSpec, x) -> np.ndarray:
    """psi(x) = grad h(x)^T F(x), returned as a length-p vector."""
    x = np.asarray(x, dtype=float)
    return barrier.grad_h(x) @ sys.F(x)


def stability_regressor(sys: AffineSystem, lyap: LyapunovSpec, x) -> np.ndarray:
    """phi(x) = grad V(x)^T F(x), returned as a length-p vector."""
    x = np.asarray(x, dtype=float)
    return lyap.grad_V(x) @ sys.F(x)


def estimation_error(sys: AffineSystem, t: float, x, xdot_measured, theta_hat, u) -> np.ndarray:
    """Mismatch between the measured state derivative and the estimated model."""
    return np.asarray(xdot_measured, dtype=float) - eval_dynamics(sys, t, x, u, theta_hat)


def composite_energy(barriers: BarrierSpec | Sequence[BarrierSpec], lyap: LyapunovSpec,
                     ce, x, theta_hat, theta_true) -> float:
    """Log-barrier + weighted CLF + Gamma^-1 weighted parameter error.

    Several barriers contribute one log term each. ``ce`` needs ``kappa`` and
    ``gamma_matrix`` attributes (``CompositeEnergyInputs`` or ``AdaptConfig``).
    """
    if isinstance(barriers, BarrierSpec):
        barriers = (barriers,)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for b in barriers:
        h = float(b.h(x))
        if not h > 0:
            raise DomainError(f"barrier {b.label} is non-positive (h={h:g})")
        total += np.log1p(1.0 / h)  # == -ln(h / (1 + h))
    err = np.asarray(theta_hat, dtype=float) - np.asarray(theta_true, dtype=float)
    quad = 0.5 * err @ np.linalg.solve(np.atleast_2d(ce.gamma_matrix), err)
    return float(total + ce.kappa * lyap.V(x) + quad)


def numeric_gradient(field: Field, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar field."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (field(x + e) - field(x - e)) / (2 * step)
    return grad
