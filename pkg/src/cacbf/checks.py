"""Randomized property suites shared by the test-suite and ``cacbf verify``.

Every suite returns a plain dict with at least ``cases``, ``failures`` and a
short list of ``examples`` (counterexamples) so it serializes to JSON as is.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .adaptation import AdaptConfig, project
from .controller import build_qp, cacbf_constraints, strict_feasibility_witness
from .metrics import containment_check
from .model import numeric_gradient
from .qp import QpProblem, certify, check_strict_feasibility, solve_qp
from .scenarios import Scenario
from .simulator import dominance_diagnostic, sample_ball

MAX_EXAMPLES = 10


def _report(name, cases, bad, **extra):
    out = {"suite": name, "cases": cases, "failures": len(bad), "examples": bad[:MAX_EXAMPLES]}
    out.update(extra)
    out["passed"] = not bad and out.get("passed", True)
    return out


def random_spd(rng, p, spread=10.0):
    """SPD matrix with eigenvalues in ``[1/spread, spread]`` and a random basis."""
    Qm, _ = np.linalg.qr(rng.normal(size=(p, p)))
    ev = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=p))
    G = (Qm * ev) @ Qm.T
    return 0.5 * (G + G.T)


def projection_suite(n: int = 10_000, seed: int = 0, tol: float = 1e-10) -> dict:
    """Projection inequality ``(th - th*)^T Gamma^-1 (P(tau) - tau) <= tol``.

    Half the estimates sit exactly on the boundary sphere so the correcting
    branch is exercised; there tangency ``th^T P(tau) = 0`` is also checked.
    """
    rng = np.random.default_rng(seed)
    bad, fired = [], 0
    for i in range(n):
        p = int(rng.integers(1, 5))
        G = random_spd(rng, p)
        tmax = float(rng.uniform(0.1, 10.0))
        cfg = AdaptConfig(G, 1.0, 1.0, tmax)
        th = sample_ball(rng, p, tmax)
        if rng.uniform() < 0.5:
            th = th / np.linalg.norm(th) * tmax
        th_star = sample_ball(rng, p, tmax)
        tau = rng.normal(scale=10.0, size=p)
        P = project(tau, th, cfg)
        lhs = float((th - th_star) @ np.linalg.solve(G, P - tau))
        branch = not np.array_equal(P, tau)
        fired += branch
        tangency = abs(float(th @ P)) if branch else 0.0
        if lhs > tol or tangency > tol * max(1.0, float(np.linalg.norm(th) * np.linalg.norm(tau))):
            bad.append({"case": i, "lhs": lhs, "tangency": tangency, "theta_hat": th.tolist(),
                        "tau": tau.tolist()})
    return _report("projection", n, bad, branch_fired=fired)


def random_feasible_qp(rng, max_dim: int = 3, max_rows: int = 4) -> QpProblem:
    """Small strictly convex QP whose rows share a known feasible point."""
    d = int(rng.integers(1, max_dim + 1))
    k = int(rng.integers(0, max_rows + 1))
    Q = random_spd(rng, d, spread=5.0)
    q = rng.normal(size=d)
    A = rng.normal(size=(k, d))
    z_f = rng.normal(scale=0.5, size=d)
    b = A @ z_f + rng.uniform(0.0, 0.5, size=k)
    return QpProblem(Q, q, A, b)


def grid_minimum(p: QpProblem, center, half_width: float = 0.02, pitch: float = 1e-3):
    """Smallest objective over feasible points of a grid around ``center``.

    Grid nodes are ``center + pitch * integer``, so ``center`` itself is a node.
    By convexity a better point anywhere implies better points nearby.
    """
    m = int(round(half_width / pitch))
    axis = pitch * np.arange(-m, m + 1)
    Z = np.asarray(center)[None, :] + np.array(list(product(axis, repeat=p.dim)))
    feas = np.all(Z @ p.A.T <= p.b, axis=1) if p.n_rows else np.ones(len(Z), dtype=bool)
    if not feas.any():
        return np.inf
    Z = Z[feas]
    vals = 0.5 * np.einsum("ni,ij,nj->n", Z, p.Q, Z) + Z @ p.q
    return float(vals.min())


def qp_oracle_suite(n: int = 1000, seed: int = 0, tol: float = 1e-4) -> dict:
    """Solver optimum against a dense local grid, plus the KKT certificate."""
    rng = np.random.default_rng(seed)
    bad, worst = [], 0.0
    for i in range(n):
        p = random_feasible_qp(rng)
        sol = solve_qp(p)
        if not sol.solved or not certify(p, sol):
            bad.append({"case": i, "reason": "not certified", "status": sol.status})
            continue
        gap = p.objective(sol.z_star) - grid_minimum(p, sol.z_star)
        worst = max(worst, gap)
        if gap > tol:
            bad.append({"case": i, "reason": "grid beats solver", "gap": gap})
    return _report("qp-oracle", n, bad, max_gap=worst)


def feasibility_suite(scenario: Scenario, n: int = 1000, seed: int = 0,
                      theta_scale: float = 2.0) -> dict:
    """Bound-free QP is strictly feasible and its solution is KKT-certified.

    Estimates are drawn from a ball ``theta_scale`` times wider than the
    parameter set since feasibility does not depend on the estimate.
    """
    rng = np.random.default_rng(seed)
    cfg = scenario.controller.without_input_bounds()
    p_dim = scenario.system.param_dim
    bad = []
    for i in range(n):
        x = scenario.sample_interior(rng)
        th = sample_ball(rng, p_dim, theta_scale * scenario.adapt.theta_max)
        rows = cacbf_constraints(scenario.system, scenario.barriers, scenario.lyapunov, x, th, cfg)
        qp = build_qp(rows, scenario.system, x, cfg)
        strict, _ = check_strict_feasibility(qp)
        w = strict_feasibility_witness(scenario.system, scenario.barriers, scenario.lyapunov, x, th)
        witness_ok = bool(np.all(qp.A @ w < qp.b))
        sol = solve_qp(qp)
        if not (strict and witness_ok and certify(qp, sol)):
            bad.append({"case": i, "x": x.tolist(), "theta_hat": th.tolist(),
                        "strict": strict, "witness": witness_ok, "status": sol.status})
    return _report("feasibility", n, bad, scenario=scenario.name)


def gradient_suite(scenario: Scenario, n: int = 100, seed: int = 0, tol: float = 1e-4,
                   step: float = 1e-6) -> dict:
    """Analytic gradients of every barrier and of V against central differences.

    Error is ``|g - g_fd| / max(|g|, 1)``.
    """
    rng = np.random.default_rng(seed)
    fields = [(b.label, b.h, b.grad_h) for b in scenario.barriers + scenario.raw_barriers]
    fields.append(("V", scenario.lyapunov.V, scenario.lyapunov.grad_V))
    bad, worst = [], 0.0
    for i in range(n):
        x = scenario.sample_interior(rng)
        for label, fn, grad in fields:
            g = np.asarray(grad(x), dtype=float)
            g_fd = numeric_gradient(fn, x, step=step)
            err = float(np.linalg.norm(g - g_fd) / max(np.linalg.norm(g), 1.0))
            worst = max(worst, err)
            if err > tol:
                bad.append({"case": i, "field": label, "x": x.tolist(), "error": err})
    return _report("gradients", n * len(fields), bad, scenario=scenario.name, max_error=worst)


def containment_suite(scenario: Scenario, n_states: int = 1000, n_controls: int = 100,
                      seed: int = 0, margin_sign: float = 1.0) -> dict:
    res = containment_check(scenario, n_states, n_controls, seed=seed, margin_sign=margin_sign)
    out = {"suite": "containment", "scenario": scenario.name, "cases": res.n_checked,
           "failures": res.n_violations, "examples": res.examples[:MAX_EXAMPLES],
           "margin_sign": margin_sign}
    out["passed"] = res.passed
    return out


def dominance_suite(scenario: Scenario, radii, samples: int = 200, seed: int = 0) -> dict:
    """Reports per-shell minima of ``lambda V - delta*``; passes if they increase."""
    shells = dominance_diagnostic(scenario, radii, samples, seed)
    mins = [s["min"] for s in shells]
    increasing = all(b > a for a, b in zip(mins, mins[1:]))
    return {"suite": "dominance", "scenario": scenario.name, "cases": len(shells) * samples,
            "failures": 0 if increasing else 1, "examples": [], "shells": shells,
            "passed": increasing}
