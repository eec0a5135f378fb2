"""Batch command-line front end: ``porostdg run|converge|verify``.

Configs are flat ``section.key = value`` text files; ``#`` starts a comment.
See README.md for the full key list.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy as sym

from porostdg.analysis import (
    convergence_study, default_case, discrete_error, initial_from_data, quadrature_exactness,
    verify_identities, zero_case,
)
from porostdg.errors import InfeasibleCoercivity, InputError, NumericError
from porostdg.fespace import DiscreteSpace, write_field_csv
from porostdg.mesh import build_mesh
from porostdg.operators import MaterialParams, assemble_operators, compute_nu0
from porostdg.solver import initial_state, march, write_trajectory_csv
from porostdg.timeslab import TemporalRule, TimeMesh

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_RATE = 0, 2, 3, 4
COERCIVITY_TARGET = 0.1


class ConfigError(Exception):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _floats(text, count=None):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if count is not None and len(vals) != count:
        raise ValueError(f"expected {count} numbers, got {len(vals)}")
    return vals


def _bool(text):
    low = text.strip().lower()
    if low not in ("true", "false", "yes", "no", "1", "0"):
        raise ValueError(f"not a boolean: {text!r}")
    return low in ("true", "yes", "1")


def _nu(text):
    return "auto" if text.strip().lower() == "auto" else float(text)


def _case(text):
    if text.strip() not in ("manufactured", "zero"):
        raise ValueError("case.id must be 'manufactured' or 'zero'")
    return text.strip()


# key -> (parser, default)
SCHEMA = {
    "domain.rect": (lambda s: tuple(_floats(s, 4)), (0.0, 1.0, 0.0, 1.0)),
    "mesh.nx": (int, 4),
    "mesh.ny": (int, 4),
    "space.r": (int, 1),
    "time.T": (float, 1.0),
    "time.N": (int, 4),
    "time.tau": (float, None),
    "time.k": (int, 1),
    "time.nu": (_nu, "auto"),
    "penalty.gamma_v": (float, None),
    "penalty.gamma_p": (float, None),
    "material.rho": (float, 1.0),
    "material.alpha": (float, 1.0),
    "material.c0": (float, 1.0),
    "material.lambda": (float, 1.0),
    "material.mu": (float, 1.0),
    "material.K": (lambda s: tuple(_floats(s, 4)), (1.0, 0.0, 0.0, 1.0)),
    "material.coupling_sign": (int, -1),
    "case.id": (_case, "manufactured"),
    "case.scale": (float, 1.0),
    "initial.u0_1": (str, "0"),
    "initial.u0_2": (str, "0"),
    "initial.u1_1": (str, "0"),
    "initial.u1_2": (str, "0"),
    "initial.p0": (str, "0"),
    "study.start": (int, None),
    "output.dir": (str, "out"),
    "output.fields": (_bool, False),
}


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict)  # key -> source line number

    def __getitem__(self, key):
        return self.values[key]

    def line(self, key):
        return self.lines.get(key)


def parse_config(text: str) -> RunConfig:
    values = {k: d for k, (_, d) in SCHEMA.items()}
    lines = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", no)
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", no)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", no)
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"invalid value for {key}: {exc}", no) from None
        lines[key] = no
    return RunConfig(values, lines)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


@dataclass
class Setup:
    """Validated objects built from a config, before any assembly."""

    params: MaterialParams
    nu: float
    time_mesh: TimeMesh
    case: object
    initial: object
    source: object


def _checked(cfg: RunConfig, key, ok, message):
    if not ok:
        raise ConfigError(f"{key}: {message}", cfg.line(key))


def build_setup(cfg: RunConfig) -> Setup:
    for key in ("mesh.nx", "mesh.ny"):
        _checked(cfg, key, cfg[key] >= 1, "must be >= 1")
    _checked(cfg, "space.r", cfg["space.r"] >= 0, "must be >= 0")
    _checked(cfg, "time.k", cfg["time.k"] >= 0, "must be >= 0")
    _checked(cfg, "time.T", cfg["time.T"] > 0, "must be > 0")
    for key in ("penalty.gamma_v", "penalty.gamma_p"):
        _checked(cfg, key, cfg[key] is None or cfg[key] > 0, "penalties must be > 0")
    x0, x1, y0, y1 = cfg["domain.rect"]
    _checked(cfg, "domain.rect", x1 > x0 and y1 > y0, "rectangle must have positive area")
    for key in ("material.rho", "material.c0", "material.mu"):
        _checked(cfg, key, cfg[key] > 0, "must be > 0")
    for key in ("material.alpha", "material.lambda"):
        _checked(cfg, key, cfg[key] >= 0, "must be >= 0")
    K = np.array(cfg["material.K"]).reshape(2, 2)
    try:
        params = MaterialParams(cfg["material.rho"], cfg["material.alpha"], cfg["material.c0"],
                                cfg["material.lambda"], cfg["material.mu"], K, cfg["material.coupling_sign"])
    except InputError as exc:
        key = "material.K" if "material.K" in cfg.lines else "material.coupling_sign"
        raise ConfigError(f"material: {exc}", cfg.line(key)) from None
    try:
        nu0 = compute_nu0(params, COERCIVITY_TARGET)
    except InfeasibleCoercivity as exc:
        raise ConfigError(f"material: coercivity infeasible in block {exc.block}: {exc}",
                          cfg.line("material.K")) from None
    nu = nu0 + 0.1 if cfg["time.nu"] == "auto" else cfg["time.nu"]
    _checked(cfg, "time.nu", nu >= nu0,
             f"nu = {nu:g} is below nu0 = {nu0:.8g}; the coercivity condition "
             f"<(nu M0 + M1) x, x> >= gamma <x, x> with gamma = {COERCIVITY_TARGET} is violated")
    T = cfg["time.T"]
    if cfg["time.tau"] is not None:
        tau = cfg["time.tau"]
        _checked(cfg, "time.tau", tau > 0, "must be > 0")
        N = int(round(T / tau))
        _checked(cfg, "time.tau", N >= 1 and abs(N * tau - T) <= 1e-12 * T, "must divide time.T")
    else:
        N = cfg["time.N"]
        _checked(cfg, "time.N", N >= 1, "must be >= 1")
    if cfg["case.id"] == "manufactured":
        case = default_case(params, cfg["case.scale"])
        initial, source = case.initial, case.source
    else:
        case = zero_case(params)
        exprs = {}
        for key in ("initial.u0_1", "initial.u0_2", "initial.u1_1", "initial.u1_2", "initial.p0"):
            try:
                exprs[key] = sym.sympify(cfg[key], locals={"x": sym.Symbol("x", real=True),
                                                           "y": sym.Symbol("y", real=True)})
            except (sym.SympifyError, SyntaxError, TypeError) as exc:
                raise ConfigError(f"{key}: cannot parse expression: {exc}", cfg.line(key)) from None
            extra = exprs[key].free_symbols - {sym.Symbol("x", real=True), sym.Symbol("y", real=True)}
            _checked(cfg, key, not extra, f"unknown symbols {sorted(map(str, extra))}; use x and y")
        initial = initial_from_data((exprs["initial.u0_1"], exprs["initial.u0_2"]),
                                    (exprs["initial.u1_1"], exprs["initial.u1_2"]), exprs["initial.p0"], params)
        source = None
    return Setup(params, nu, TimeMesh.uniform(T, N), case, initial, source)


def _out_dir(cfg, args) -> Path:
    out = Path(args.out or cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg: RunConfig, args) -> int:
    setup = build_setup(cfg)
    space = DiscreteSpace(build_mesh(cfg["domain.rect"], cfg["mesh.nx"], cfg["mesh.ny"]), cfg["space.r"])
    ops = assemble_operators(setup.params, space, cfg["penalty.gamma_v"], cfg["penalty.gamma_p"])
    rule = TemporalRule(setup.time_mesh, cfg["time.k"], setup.nu)
    traj = march(ops, rule, setup.source, initial_state(setup.initial, space))
    out = _out_dir(cfg, args)
    write_trajectory_csv(out / "trajectory.csv", traj, ops.M0)
    if cfg["output.fields"]:
        write_field_csv(out / "fields_final.csv", space, traj.traces[-1])
    print(f"slabs={rule.N} dofs={space.dim} nu={setup.nu:.8g} energy_final={traj.energies(ops.M0)[-1]:.10e}")
    if cfg["case.id"] == "manufactured":
        err = discrete_error(traj, setup.case)
        print(f"err_tau_nu={err.err_tau_nu:.10e} err_sup_energy={err.err_sup_energy:.10e} err_nu={err.err_nu:.10e}")
    return EXIT_OK


def rate_ok(axis, rate, k, r) -> bool:
    if axis == "time":
        return abs(rate - (k + 1)) <= 0.2
    return rate >= r - 0.2


def cmd_converge(cfg: RunConfig, args) -> int:
    if args.levels < 3:
        raise ConfigError(f"--levels must be >= 3 for a rate fit, got {args.levels}")
    setup = build_setup(cfg)
    if cfg["case.id"] != "manufactured":
        raise ConfigError("convergence studies need case.id = manufactured", cfg.line("case.id"))
    k, r = cfg["time.k"], cfg["space.r"]
    if args.axis == "time":
        fixed, start = cfg["mesh.nx"], cfg["study.start"] or 1
    else:
        fixed, start = setup.time_mesh.N, cfg["study.start"] or 2
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        report = convergence_study(setup.case, args.axis, args.levels, fixed, k, r, setup.nu,
                                   cfg["penalty.gamma_v"], cfg["penalty.gamma_p"], start=start)
    out = _out_dir(cfg, args)
    report.write_csv(out / f"convergence_{args.axis}.csv")
    rate = report.rate("err_tau_nu")
    print(f"axis={args.axis} levels={args.levels} k={k} r={r} rate_tau_nu={rate:.4f} "
          f"rate_sup_energy={report.rate('err_sup_energy'):.4f} rate_nu={report.rate('err_nu'):.4f}")
    if caught or not report.monotone:
        print("warning: non-monotone error sequence")
    if args.assert_rates and not rate_ok(args.axis, rate, k, r):
        print(f"rate assertion failed: {rate:.4f}", file=sys.stderr)
        return EXIT_RATE
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify_identities(tuple(args.sizes), tuple(args.degrees), args.trials,
                               jpartial_sign=-1.0 if args.flip_jpartial else 1.0)
    for line in report.lines():
        print(line)
    quad_ok = True
    print("quadrature exactness (k, c, max relative error):")
    for k, c, err in quadrature_exactness():
        ok = err <= 1e-12
        quad_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} k={k} c={c:g} err={err:.3e}")
    passed = report.passed and quad_ok
    print("verify: " + ("PASS" if passed else "FAIL"))
    return EXIT_OK if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="porostdg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="march one configuration and write the trajectory summary")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    conv = sub.add_parser("converge", help="dyadic refinement study along one axis")
    conv.add_argument("--config", required=True)
    conv.add_argument("--axis", choices=("time", "space"), default="time")
    conv.add_argument("--levels", type=int, default=4)
    conv.add_argument("--assert-rates", action="store_true")
    conv.add_argument("--out")
    ver = sub.add_parser("verify", help="operator identities and quadrature exactness")
    ver.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 8])
    ver.add_argument("--degrees", type=int, nargs="+", default=[0, 1, 2])
    ver.add_argument("--trials", type=int, default=100)
    ver.add_argument("--flip-jpartial", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = load_config(args.config)
        return cmd_run(cfg, args) if args.command == "run" else cmd_converge(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
