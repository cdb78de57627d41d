"""Acceptance criteria 1-13 at their stated tolerances.

Each test records one ``CRITERION n: PASS|FAIL`` line (printed in the
terminal summary) and then asserts the criterion.
"""

import numpy as np
import pytest

from cacbf.checks import (containment_suite, feasibility_suite, gradient_suite,
                          projection_suite, qp_oracle_suite)
from cacbf.cli import main
from cacbf.metrics import compute_metrics
from cacbf.scenarios import build
from cacbf.simulator import dissipation_check

from conftest import ACCEPTANCE_LINES, RUNTIMES, cached_run

SCENARIOS = ("acc", "omni", "drone")
CONTROLLERS = ("cacbf", "rcbf")


def _within(v, lo, hi):
    return v is not None and lo <= v <= hi


def _record(n, checks):
    """``checks`` maps a description to a bool; records the line and asserts."""
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}"
    if failed:
        line += "  failed: " + "; ".join(failed)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _metrics(name, ctrl, dt=1e-3):
    sc, tr = cached_run(name, ctrl, dt)
    return compute_metrics(tr, sc)


def test_criterion_01_acc_safety_margins():
    a, r = _metrics("acc", "cacbf"), _metrics("acc", "rcbf")
    ha = cached_run("acc", "cacbf")[1].h
    hr = cached_run("acc", "rcbf")[1].h
    ta, tr = RUNTIMES[("acc", "cacbf", 1e-3)], RUNTIMES[("acc", "rcbf", 1e-3)]
    _record(1, {
        f"CaCBF h_min={a.h_min:.4f} in [0.05, 0.5]": _within(a.h_min, 0.05, 0.5),
        f"R-CBF h_min={r.h_min:.4f} in [2.0, 3.6]": _within(r.h_min, 2.0, 3.6),
        "h > 0 throughout (both)": bool(np.all(ha > 0) and np.all(hr > 0)),
        f"runtime {ta:.1f}s / {tr:.1f}s < 30 s": ta < 30.0 and tr < 30.0,
    })


def test_criterion_02_acc_braking_effort():
    a, r = _metrics("acc", "cacbf"), _metrics("acc", "rcbf")
    _record(2, {
        f"CaCBF E_brake={a.E_brake:.1f} in [1.1e4, 1.7e4]": _within(a.E_brake, 1.1e4, 1.7e4),
        f"R-CBF E_brake={r.E_brake:.1f} in [1.1e4, 1.7e4]": _within(r.E_brake, 1.1e4, 1.7e4),
    })


def test_criterion_03_acc_clearance():
    a, r = _metrics("acc", "cacbf"), _metrics("acc", "rcbf")
    _record(3, {
        f"R-CBF eta={r.eta:.3f} in [5.0, 7.5]": _within(r.eta, 5.0, 7.5),
        f"CaCBF eta={a.eta:.3f} in [0.2, 0.9]": _within(a.eta, 0.2, 0.9),
    })


def test_criterion_04_omni():
    a, r = _metrics("omni", "cacbf"), _metrics("omni", "rcbf")
    _record(4, {
        f"CaCBF h_min={a.h_min:.4f} in (0, 0.15]": 0.0 < a.h_min <= 0.15,
        f"CaCBF T_reach={a.T_reach} in [6.5, 8.5]": _within(a.T_reach, 6.5, 8.5),
        f"CaCBF path={a.path_length:.2f} in [45, 49]": _within(a.path_length, 45.0, 49.0),
        f"R-CBF h_min={r.h_min:.4f} in [0.25, 0.7]": _within(r.h_min, 0.25, 0.7),
        f"R-CBF T_reach={r.T_reach} in [7.8, 9.5]": _within(r.T_reach, 7.8, 9.5),
        f"R-CBF path={r.path_length:.2f} in [46, 50]": _within(r.path_length, 46.0, 50.0),
        "ordering h_min": a.h_min < r.h_min,
        "ordering eta": a.eta < r.eta,
        "ordering T_reach": a.reach_key() < r.reach_key(),
    })


def test_criterion_05_drone_topology():
    a, r = _metrics("drone", "cacbf"), _metrics("drone", "rcbf")
    _record(5, {
        f"CaCBF reaches within 12 s (T_reach={a.T_reach})": _within(a.T_reach, 0.0, 12.0),
        "CaCBF crosses the gate": bool(a.crosses_gate),
        "R-CBF never crosses the gate": r.crosses_gate is False,
        "R-CBF times out": r.timed_out,
        f"E_control {a.E_control:.2f} > {r.E_control:.2f}": a.E_control > r.E_control,
        "CaCBF E_control within 40.11 +-30%": _within(a.E_control, 0.7 * 40.11, 1.3 * 40.11),
        "R-CBF E_control within 29.03 +-30%": _within(r.E_control, 0.7 * 29.03, 1.3 * 29.03),
    })


def test_criterion_06_projection_inequality():
    rep = projection_suite(n=10_000, seed=0, tol=1e-10)
    _record(6, {f"{rep['failures']} violations in {rep['cases']} cases": rep["passed"]
                and rep["cases"] == 10_000})


def test_criterion_07_estimate_norm():
    checks = {}
    for name in SCENARIOS:
        for ctrl in CONTROLLERS:
            sc, tr = cached_run(name, ctrl)
            peak = float(np.linalg.norm(tr.theta_hat, axis=1).max())
            checks[f"{name}/{ctrl} max|theta_hat|={peak:.6g}"] = peak <= sc.adapt.theta_max + 1e-6
    _record(7, checks)


def test_criterion_08_feasibility_and_oracle():
    checks = {}
    for name in SCENARIOS:
        rep = feasibility_suite(build(name), n=1000, seed=0)
        checks[f"{name}: {rep['failures']}/1000 uncertified"] = rep["passed"] and rep["cases"] == 1000
    rep = qp_oracle_suite(n=1000, seed=0)
    checks[f"oracle max gap {rep['max_gap']:.2e} < 1e-4"] = rep["passed"] and rep["max_gap"] < 1e-4
    _record(8, checks)


@pytest.mark.slow
def test_criterion_09_forward_invariance():
    checks = {}
    for dt in (1e-3, 5e-4):
        for name in SCENARIOS:
            sc, tr = cached_run(name, "cacbf", dt)
            hmin = float(tr.h.min())
            raw = [float(min(b.h(x) for b in sc.raw_barriers)) for x in tr.x] \
                if sc.raw_barriers else [np.inf]
            checks[f"{name} dt={dt:g} min h={hmin:.4g}"] = hmin > 0 and min(raw) > 0
    _record(9, checks)


def test_criterion_10_containment():
    checks = {}
    for name in SCENARIOS:
        rep = containment_suite(build(name), n_states=1000, n_controls=100, seed=0)
        checks[f"{name}: {rep['failures']} violations in {rep['cases']}"] = \
            rep["passed"] and rep["cases"] >= 1000 * 100
    fault = containment_suite(build("omni"), n_states=100, n_controls=100, seed=0, margin_sign=-1.0)
    checks[f"fault injection found {fault['failures']} violations"] = fault["failures"] >= 1
    _record(10, checks)


def test_criterion_11_gradients():
    checks = {}
    for name in SCENARIOS:
        rep = gradient_suite(build(name), n=100, seed=0, tol=1e-4)
        checks[f"{name}: max rel error {rep['max_error']:.2e}"] = rep["passed"]
    _record(11, checks)


def test_criterion_12_dissipation():
    checks = {}
    for dt in (1e-3, 5e-4):
        for name in SCENARIOS:
            sc, tr = cached_run(name, "cacbf", dt)
            frac = dissipation_check(tr, sc, tol=1e-3)["fraction"]
            checks[f"{name} dt={dt:g} fraction={frac:.4f} >= 0.99"] = frac >= 0.99
    _record(12, checks)


def test_criterion_13_determinism(tmp_path):
    checks = {}
    for name in ("drone", "omni"):
        files = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}_{tag}"
            assert main(["simulate", "--scenario", name, "--controller", "cacbf", "--seed", "0",
                         "--T", "12", "--out", str(out)]) == 0
            files.append((out / f"trajectory_{name}_cacbf.csv").read_bytes())
        checks[f"{name} CSV byte-identical"] = files[0] == files[1]
    _record(13, checks)
