"""Command-line entry point: ``cacbf simulate`` and ``cacbf verify``.

Exit codes: 0 success, 1 a verification suite failed, 2 usage or
configuration error, 3 a barrier was violated during simulation.
"""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks
from .metrics import compute_metrics
from .scenarios import BUILDERS, ScenarioError, build
from .simulator import CONTROLLERS, SafetyViolation, Trajectory, run

logger = logging.getLogger("cacbf")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_UNSAFE = 0, 1, 2, 3
OUTPUT_ENV = "CACBF_OUTPUT_DIR"

# dotted override sections and the builder keywords they may address
SECTIONS = {
    "adapt": ("gamma", "kappa", "theta_max", "gamma_matrix"),
    "controller": ("rho", "kp", "kd", "u_limit", "input_fraction", "speed_limit",
                   "polygon_sides"),
    "cbf": ("alpha_gain", "headway", "radius", "obstacle", "centers"),
    "clf": ("lam", "v_des", "target"),
    "plant": ("mass", "theta_true", "x0", "p0", "v0"),
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "acc"
    controller: str = "both"
    dt: float = 1e-3
    T: Optional[float] = None
    out: Optional[str] = None
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    measurement: str = "exact"

    def validate(self) -> None:
        if self.scenario not in BUILDERS:
            raise UsageError(f"unknown scenario {self.scenario!r}; choose from {sorted(BUILDERS)}")
        if self.controller not in CONTROLLERS + ("both",):
            raise UsageError(f"unknown controller {self.controller!r}")
        if not self.dt > 0:
            raise UsageError("dt must be positive")
        if self.T is not None and not self.T > 0:
            raise UsageError("T must be positive")
        if self.measurement not in ("exact", "difference"):
            raise UsageError(f"unknown measurement mode {self.measurement!r}")

    @property
    def controllers(self) -> tuple:
        return CONTROLLERS if self.controller == "both" else (self.controller,)

    def output_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUTPUT_ENV) or "cacbf_out")


def _coerce(value, default, key):
    """Type-check an override against the builder default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"{key} expects a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not float(value).is_integer():
            raise UsageError(f"{key} expects an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{key} expects a number")
        return float(value)
    arr_default = np.asarray(default, dtype=float)
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise UsageError(f"{key} expects numeric data shaped like {arr_default.shape}") from None
    if arr_default.ndim == 2 and arr.ndim == 0:
        arr = arr * np.eye(arr_default.shape[0])
    if arr.shape != arr_default.shape:
        raise UsageError(f"{key} expects shape {arr_default.shape}, got {arr.shape}")
    return arr if arr_default.ndim == 2 else tuple(arr.tolist()) if arr.ndim == 1 \
        else tuple(tuple(r) for r in arr.tolist())


def builder_kwargs(scenario: str, overrides: dict) -> dict:
    """Map dotted override keys onto keyword arguments of the scenario builder."""
    params = inspect.signature(BUILDERS[scenario]).parameters
    kwargs = {}
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if section not in SECTIONS or name not in SECTIONS[section] or name not in params:
            raise UsageError(f"unknown override {key!r} for scenario {scenario}")
        kwargs[name] = _coerce(value, params[name].default, key)
    return kwargs


def parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            raise UsageError(f"--set {key}: value {raw!r} is not valid JSON") from None
    return out


def csv_columns(traj: Trajectory) -> list:
    n, m, p, k = traj.x.shape[1], traj.u.shape[1], traj.theta_hat.shape[1], traj.h.shape[1]
    return (["t"] + [f"x_{i}" for i in range(1, n + 1)] + [f"u_{i}" for i in range(1, m + 1)]
            + ["delta"] + [f"theta_hat_{i}" for i in range(1, p + 1)]
            + [f"h_{i}" for i in range(1, k + 1)] + ["V", "e_norm", "infeasible"])


def write_csv(traj: Trajectory, path: Path) -> None:
    """Fixed column order and ``%.17g`` formatting, so reruns are byte-identical."""
    data = np.column_stack([traj.t, traj.x, traj.u, traj.delta, traj.theta_hat, traj.h,
                            traj.V, traj.e_norm]) + 0.0  # folds -0.0 into 0.0
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(csv_columns(traj)) + "\n")
        for row, flag in zip(data, traj.infeasible):
            fh.write(",".join(format(v, ".17g") for v in row) + f",{int(flag)}\n")


def _write_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(cfg: RunConfig) -> int:
    cfg.validate()
    kwargs = builder_kwargs(cfg.scenario, cfg.overrides)
    try:
        scenario = build(cfg.scenario, **kwargs)
    except (ScenarioError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for ctrl in cfg.controllers:
        logger.info("running %s/%s", cfg.scenario, ctrl)
        try:
            traj = run(scenario, ctrl, T=cfg.T, dt=cfg.dt, measurement=cfg.measurement,
                       seed=cfg.seed)
        except SafetyViolation as exc:
            print(f"safety violation: {exc}", file=sys.stderr)
            return EXIT_UNSAFE
        report = compute_metrics(traj, scenario)
        write_csv(traj, out_dir / f"trajectory_{cfg.scenario}_{ctrl}.csv")
        summary = report.to_dict()
        summary["config"] = {"dt": cfg.dt, "T": traj.meta["T"], "seed": cfg.seed,
                             "measurement": cfg.measurement, "overrides": cfg.overrides}
        _write_json(summary, out_dir / f"metrics_{cfg.scenario}_{ctrl}.json")
        reports[ctrl] = report
        print(f"{cfg.scenario}/{ctrl}: " + ", ".join(
            f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
            for k, v in report.to_dict().items() if k not in ("scenario", "controller")))
    if len(reports) == 2:
        a, r = reports["cacbf"], reports["rcbf"]
        comparison = {
            "scenario": cfg.scenario,
            "cacbf": a.to_dict(), "rcbf": r.to_dict(),
            "ordering": {"h_min": a.h_min < r.h_min, "eta": a.eta < r.eta,
                         "T_reach": a.reach_key() < r.reach_key()},
        }
        _write_json(comparison, out_dir / f"comparison_{cfg.scenario}.json")
    return EXIT_OK


VERIFY_SUITES = ("projection", "qp-oracle", "feasibility", "containment", "gradients",
                 "dominance")
DOMINANCE_RADII = {"acc": (10.0, 50.0, 100.0), "omni": (5.0, 20.0, 50.0),
                   "drone": (5.0, 20.0, 50.0)}


def cmd_verify(suite: str, seed: int, scenario: Optional[str], n: Optional[int],
               out: Optional[str], fault: bool = False) -> int:
    names = [scenario] if scenario else sorted(BUILDERS)
    for name in names:
        if name not in BUILDERS:
            raise UsageError(f"unknown scenario {name!r}")
    if suite == "projection":
        reports = [checks.projection_suite(n or 10_000, seed)]
    elif suite == "qp-oracle":
        reports = [checks.qp_oracle_suite(n or 1000, seed)]
    elif suite == "feasibility":
        reports = [checks.feasibility_suite(build(s), n or 1000, seed) for s in names]
    elif suite == "gradients":
        reports = [checks.gradient_suite(build(s), n or 100, seed) for s in names]
    elif suite == "containment":
        sign = -1.0 if fault else 1.0
        reports = [checks.containment_suite(build(s), n or 1000, 100, seed, margin_sign=sign)
                   for s in names]
    elif suite == "dominance":
        reports = [checks.dominance_suite(build(s), DOMINANCE_RADII[s], n or 200, seed)
                   for s in names]
    else:
        raise UsageError(f"unknown suite {suite!r}")
    passed = all(r["passed"] for r in reports)
    doc = {"suite": suite, "seed": seed, "passed": passed, "reports": reports}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)
    return EXIT_OK if passed else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cacbf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a scenario and export CSV/JSON")
    sim.add_argument("--scenario", choices=sorted(BUILDERS))
    sim.add_argument("--controller", choices=CONTROLLERS + ("both",))
    sim.add_argument("--dt", type=float)
    sim.add_argument("--T", type=float, help="horizon override in seconds")
    sim.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./cacbf_out)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--measurement", choices=("exact", "difference"))
    sim.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="parameter override, e.g. adapt.gamma=50 (repeatable)")
    sim.add_argument("--config", help="JSON file with RunConfig fields")

    ver = sub.add_parser("verify", help="run a randomized property suite")
    ver.add_argument("suite", choices=VERIFY_SUITES)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--scenario", choices=sorted(BUILDERS))
    ver.add_argument("-n", type=int, help="number of cases (suite default otherwise)")
    ver.add_argument("--out", help="write the JSON report here as well")
    ver.add_argument("--fault", action="store_true",
                     help="containment only: flip the robust margin (sampler self-test)")
    return parser


def load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        known = set(RunConfig.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config fields: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for name in ("scenario", "controller", "dt", "T", "out", "seed", "measurement"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    cfg.overrides = {**dict(cfg.overrides), **parse_set(args.set)}
    return cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(load_run_config(args))
        return cmd_verify(args.suite, args.seed, args.scenario, args.n, args.out, args.fault)
    except UsageError as exc:
        print(f"cacbf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
