"""Composite adaptation law with Gamma-weighted projection onto a parameter ball."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (AffineSystem, BarrierSpec, CompositeEnergyInputs, DomainError,
                    LyapunovSpec, check_spd, estimation_error, safety_regressor,
                    stability_regressor)

BOUNDARY_TOL = 1e-12


class ProjectionDomainError(ValueError):
    """The estimate handed to the projection lies outside the parameter ball."""


@dataclass(frozen=True)
class AdaptConfig:
    gamma_matrix: np.ndarray
    gamma: float
    kappa: float
    theta_max: float

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.gamma_matrix, dtype=float))
        check_spd(G, "Gamma")
        object.__setattr__(self, "gamma_matrix", G)
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.theta_max <= 0:
            raise ValueError("theta_max must be positive")

    @property
    def energy_inputs(self) -> CompositeEnergyInputs:
        return CompositeEnergyInputs(self.kappa, self.gamma_matrix)


@dataclass(frozen=True)
class AdaptState:
    theta_hat: np.ndarray
    last_input: np.ndarray


def project(tau, theta_hat, cfg: AdaptConfig) -> np.ndarray:
    """Remove the outward (Gamma^-1 normal) part of ``tau`` on the ball boundary.

    Interior estimates and inward or tangent directions pass through unchanged.
    """
    tau = np.asarray(tau, dtype=float)
    th = np.asarray(theta_hat, dtype=float)
    norm = float(np.linalg.norm(th))
    if norm > cfg.theta_max * (1.0 + BOUNDARY_TOL) + BOUNDARY_TOL:
        raise ProjectionDomainError(f"|theta_hat|={norm:.12g} exceeds theta_max={cfg.theta_max:g}")
    outward = float(th @ tau)
    if norm < cfg.theta_max * (1.0 - BOUNDARY_TOL) or outward <= 0.0:
        return tau
    Gth = cfg.gamma_matrix @ th
    return tau - Gth * (outward / float(th @ Gth))


def raw_update(x, theta_hat, e, barriers: Sequence[BarrierSpec], lyap: LyapunovSpec,
               sys: AffineSystem, cfg: AdaptConfig) -> np.ndarray:
    """tau = Gamma [kappa phi^T - sum_i psi_i^T / (h_i (1 + h_i)) + gamma F^T e]."""
    x = np.asarray(x, dtype=float)
    drive = cfg.kappa * stability_regressor(sys, lyap, x)
    for b in barriers:
        h = float(b.h(x))
        if not h > 0:
            raise DomainError(f"barrier {b.label} is non-positive (h={h:g}): safety breach")
        drive = drive - safety_regressor(sys, b, x) / (h * (1.0 + h))
    if cfg.gamma:
        drive = drive + cfg.gamma * (sys.F(x).T @ e)
    return cfg.gamma_matrix @ drive


def adaptation_rate(t, x, theta_hat, u_prev, xdot_measured, barriers, lyap,
                    sys: AffineSystem, cfg: AdaptConfig) -> np.ndarray:
    """Projected parameter update rate.

    The estimation error uses ``u_prev``, the input that produced
    ``xdot_measured``.
    """
    if isinstance(barriers, BarrierSpec):
        barriers = (barriers,)
    e = estimation_error(sys, t, x, xdot_measured, theta_hat, u_prev)
    tau = raw_update(x, theta_hat, e, barriers, lyap, sys, cfg)
    return project(tau, theta_hat, cfg)


def integrate_estimate(state: AdaptState, rate, dt: float, theta_max: float,
                       u=None) -> AdaptState:
    """Forward-Euler step of the estimate with a radial guard onto the ball."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    th = state.theta_hat + dt * np.asarray(rate, dtype=float)
    norm = float(np.linalg.norm(th))
    if norm > theta_max:
        th = th * (theta_max / norm)
    return AdaptState(th, state.last_input if u is None else np.asarray(u, dtype=float))
