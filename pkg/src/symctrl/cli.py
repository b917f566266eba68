"""Command-line interface: config ingestion, the four commands
(validate-params, synthesize, simulate, compare), and the text file formats
for controllers and traces.

Exit codes: 0 success, 1 config or usage error, 2 parameter-validation
violation, 3 empty controller, 4 resource cap exceeded, 5 conformance failure
or uncontrolled state.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .abstraction import DEFAULT_TRANSITION_CAP, ResourceLimitError
from .dynamics import DEFAULT_SUBSTEPS, ControlSystem, StabilityCertificate
from .expr import ExprSyntaxError, parse_expression
from .loop import UncontrolledStateError, conformance_report, simulate_closed_loop
from .quantize import Lattice, SynthesisParams, validate_parameters
from .synthesis import (Controller, ParameterValidationError,
                        baseline_artifacts, controller_to_system,
                        synthesize_integrated)
from .tsys import check_bisimulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_EMPTY = 3
EXIT_RESOURCE = 4
EXIT_CONFORMANCE = 5


class ConfigError(ValueError):
    """Malformed or inconsistent problem configuration."""


@dataclass
class ProblemConfig:
    plant: ControlSystem
    specification: ControlSystem
    params: SynthesisParams
    substeps: int
    override_validation: bool
    transition_cap: Optional[int]


def _section(doc: dict, name: str) -> dict:
    if name not in doc or not isinstance(doc[name], dict):
        raise ConfigError(f"missing section '{name}'")
    return doc[name]


def _number(sec: dict, name: str, where: str) -> float:
    if name not in sec:
        raise ConfigError(f"missing '{name}' in {where}")
    value = sec[name]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"'{name}' in {where} must be a number")
    return float(value)


def _box(sec: dict, name: str, where: str, expected_len: int) -> list:
    if name not in sec:
        raise ConfigError(f"missing '{name}' in {where}")
    box = sec[name]
    if (not isinstance(box, list) or len(box) != expected_len
            or any(not isinstance(iv, list) or len(iv) != 2 for iv in box)):
        raise ConfigError(f"'{name}' in {where} must be {expected_len} "
                          f"[lo, hi] pairs")
    return box


def _certificate(sec: dict, where: str) -> StabilityCertificate:
    cert = sec.get("certificate")
    if not isinstance(cert, dict):
        raise ConfigError(f"missing 'certificate' in {where}")
    try:
        return StabilityCertificate(
            beta_c=_number(cert, "beta_c", where),
            beta_lambda=_number(cert, "beta_lambda", where),
            gamma_a=float(cert.get("gamma_a", 0.0)),
            gamma_p=float(cert.get("gamma_p", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"bad certificate in {where}: {exc}")


def _system(sec: dict, where: str, n_inputs: int) -> ControlSystem:
    n = int(_number(sec, "n", where))
    field_src = sec.get("field")
    if not isinstance(field_src, list) or len(field_src) != n:
        raise ConfigError(f"'field' in {where} must list {n} expressions")
    try:
        field = tuple(parse_expression(text, n, n_inputs) for text in field_src)
    except ExprSyntaxError as exc:
        raise ConfigError(f"bad field expression in {where}: {exc}")
    try:
        return ControlSystem(
            n=n, m=n_inputs,
            state_box=_box(sec, "state_box", where, n),
            init_box=_box(sec, "init_box", where, n),
            input_box=_box(sec, "input_box", where, n_inputs) if n_inputs
            else [],
            field=field,
            certificate=_certificate(sec, where))
    except ValueError as exc:
        raise ConfigError(f"bad {where}: {exc}")


def load_config(path: str) -> ProblemConfig:
    """Parse and validate a problem configuration file (flat JSON)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    plant_sec = _section(doc, "plant")
    m = int(_number(plant_sec, "m", "plant"))
    plant = _system(plant_sec, "plant", m)
    specification = _system(_section(doc, "specification"), "specification", 0)
    if plant.n != specification.n:
        raise ConfigError("plant and specification must share the state "
                          "dimension (same output space)")
    p = _section(doc, "params")
    try:
        params = SynthesisParams(
            epsilon=_number(p, "epsilon", "params"),
            theta_p=_number(p, "theta_p", "params"),
            theta_q=_number(p, "theta_q", "params"),
            tau=_number(p, "tau", "params"),
            eta=_number(p, "eta", "params"),
            mu=_number(p, "mu", "params"))
    except ValueError as exc:
        raise ConfigError(f"bad params: {exc}")
    substeps = int(p.get("substeps", DEFAULT_SUBSTEPS))
    if substeps < 1:
        raise ConfigError("substeps must be a positive integer")
    options = doc.get("options", {})
    cap = options.get("transition_cap", DEFAULT_TRANSITION_CAP)
    return ProblemConfig(
        plant=plant, specification=specification, params=params,
        substeps=substeps,
        override_validation=bool(options.get("override_validation", False)),
        transition_cap=None if cap in (None, 0) else int(cap))


def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_controller_file(path: str, ctrl: Controller) -> None:
    """Write a controller in the line-oriented text format.

    Header: #dim, #eta, #mu, #state_box, #input_box, #initials, #bad; then
    one `src input dst` line per transition in ascending source order.
    Floats are written with repr and reload bit-exactly.
    """
    st = ctrl.state_lattice
    eta = st.spacing / 2.0
    if ctrl.input_lattice is not None:
        mu = ctrl.input_lattice.spacing / 2.0
        input_box = ctrl.input_lattice.box.reshape(-1)
    else:
        mu = 0.0
        input_box = np.zeros(0)
    lines = [
        f"#dim {st.dim}",
        f"#eta {repr(float(eta))}",
        f"#mu {repr(float(mu))}",
        f"#state_box {_fmt_floats(st.box.reshape(-1))}",
        f"#input_box {_fmt_floats(input_box)}".rstrip(),
        f"#initials {' '.join(str(int(i)) for i in ctrl.initials)}".rstrip(),
        f"#bad {' '.join(str(int(i)) for i in ctrl.bad)}".rstrip(),
    ]
    for src, uix, dst in ctrl.transitions:
        lines.append(f"{int(src)} {int(uix)} {int(dst)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_controller_file(path: str) -> Controller:
    """Reload a controller written by write_controller_file."""
    header = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, rest = line[1:].partition(" ")
                header[key] = rest.strip()
            else:
                parts = line.split()
                if len(parts) != 3:
                    raise ConfigError(f"bad transition line: {line!r}")
                rows.append([int(parts[0]), int(parts[1]), int(parts[2])])
    try:
        dim = int(header["dim"])
        eta = float(header["eta"])
        mu = float(header["mu"])
        sb = [float(v) for v in header["state_box"].split()]
        ib = [float(v) for v in header.get("input_box", "").split()]
        initials = [int(v) for v in header.get("initials", "").split()]
        bad = [int(v) for v in header.get("bad", "").split()]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad controller header: {exc}")
    if len(sb) != 2 * dim:
        raise ConfigError("state_box length does not match dim")
    st_lat = Lattice(np.asarray(sb, dtype=float).reshape(dim, 2), 2.0 * eta)
    in_lat = None
    if mu > 0.0:
        if len(ib) % 2:
            raise ConfigError("input_box must list lo/hi pairs")
        in_lat = Lattice(np.asarray(ib, dtype=float).reshape(-1, 2), 2.0 * mu)
    return Controller(np.asarray(rows, dtype=np.int64).reshape(-1, 3),
                      initials, bad, st_lat, in_lat)


def write_trace_csv(path: str, trace, n: int, m: int) -> None:
    """Trace CSV: header k, x_1..x_n, u_1..u_m, s_1..s_n, deviation; one row
    per sampling instant (the final row has no input)."""
    cols = (["k"] + [f"x_{i + 1}" for i in range(n)]
            + [f"u_{j + 1}" for j in range(m)]
            + [f"s_{i + 1}" for i in range(n)] + ["deviation"])
    lines = [",".join(cols)]
    steps = trace.inputs.shape[0]
    for k in range(steps + 1):
        row = [str(k)]
        row += [repr(float(v)) for v in trace.states[k]]
        if k < steps:
            row += [repr(float(v)) for v in trace.inputs[k]]
        else:
            row += [""] * m
        row += [repr(float(v)) for v in trace.spec_states[k]]
        row.append(repr(float(trace.deviations[k])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_parameters(cfg.plant.certificate,
                                 cfg.specification.certificate, cfg.params)
    print(report.describe())
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _run_method(cfg: ProblemConfig, method: str, force: bool):
    force = force or cfg.override_validation
    if method == "baseline":
        ctrl, metrics, systems = baseline_artifacts(
            cfg.plant, cfg.specification, cfg.params, cfg.substeps,
            force=force, transition_cap=cfg.transition_cap)
        return ctrl, metrics, systems
    ctrl, metrics = synthesize_integrated(
        cfg.plant, cfg.specification, cfg.params, cfg.substeps,
        force=force, transition_cap=cfg.transition_cap)
    return ctrl, metrics, None


def _cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    try:
        ctrl, metrics, _ = _run_method(cfg, args.method, args.force)
    except ParameterValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except ResourceLimitError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    if args.out:
        write_controller_file(args.out, ctrl)
    print(json.dumps(metrics.as_dict()))
    print(f"{args.method} controller: {metrics.states} states, "
          f"{metrics.transitions} transitions", file=sys.stderr)
    return EXIT_OK if metrics.states > 0 else EXIT_EMPTY


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    ctrl = read_controller_file(args.controller)
    if ctrl.state_lattice.spacing != 2.0 * cfg.params.eta:
        raise ConfigError("controller file lattice does not match the config "
                          "(eta differs)")
    shared = np.column_stack([
        np.maximum(cfg.plant.state_box[:, 0],
                   cfg.specification.state_box[:, 0]),
        np.minimum(cfg.plant.state_box[:, 1],
                   cfg.specification.state_box[:, 1])])
    if not np.array_equal(ctrl.state_lattice.box, shared):
        raise ConfigError("controller file lattice does not match the config "
                          "(state box differs)")
    if ctrl.input_lattice is not None and (
            ctrl.input_lattice.spacing != 2.0 * cfg.params.mu
            or not np.array_equal(ctrl.input_lattice.box,
                                  cfg.plant.input_box)):
        raise ConfigError("controller file lattice does not match the config "
                          "(input lattice differs)")
    try:
        x0 = [float(v) for v in args.x0.split(",")]
    except ValueError:
        print(f"malformed --x0 value: {args.x0!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        trace = simulate_closed_loop(cfg.plant, cfg.specification, ctrl, x0,
                                     args.steps, cfg.params, cfg.substeps)
    except ValueError as exc:
        print(f"bad initial state: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UncontrolledStateError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFORMANCE
    if args.out:
        write_trace_csv(args.out, trace, cfg.plant.n, cfg.plant.m)
    report = conformance_report(trace, cfg.params.epsilon)
    print(report.describe())
    return EXIT_OK if report.passed else EXIT_CONFORMANCE


def _ratio(a: float, b: float) -> str:
    return f"{a / b:.4g}" if b else "n/a"


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    try:
        int_ctrl, int_metrics, _ = _run_method(cfg, "integrated", args.force)
    except ParameterValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    try:
        base_ctrl, base_metrics, _ = _run_method(cfg, "baseline", args.force)
    except ResourceLimitError as exc:
        print("integrated:", json.dumps(int_metrics.as_dict()))
        print(f"baseline leg aborted, resource cap exceeded: {exc}",
              file=sys.stderr)
        return EXIT_RESOURCE
    rows = [
        ("states", int_metrics.states, base_metrics.states),
        ("transitions", int_metrics.transitions, base_metrics.transitions),
        ("memory_units", int_metrics.memory_units, base_metrics.memory_units),
        ("steps", int_metrics.steps, base_metrics.steps),
    ]
    print(f"{'quantity':<14}{'integrated':>14}{'baseline':>14}{'ratio':>10}")
    for name, iv, bv in rows:
        print(f"{name:<14}{iv:>14}{bv:>14}{_ratio(iv, bv):>10}")
    relation = check_bisimulation(controller_to_system(int_ctrl),
                                  controller_to_system(base_ctrl), 0.0)
    verdict = "exactly bisimilar" if relation is not None else \
        "NOT bisimilar (unexpected)"
    print(f"controllers: {verdict}")
    return EXIT_OK if relation is not None else EXIT_CONFORMANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symctrl",
        description="Symbolic controller synthesis for sampled ODE plants "
                    "against ODE specifications.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-params",
                       help="check the quantization inequalities")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("synthesize", help="synthesize a controller")
    p.add_argument("config")
    p.add_argument("--method", choices=("integrated", "baseline"),
                   default="integrated")
    p.add_argument("--out", help="controller file to write")
    p.add_argument("--force", action="store_true",
                   help="proceed even if parameter validation fails")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("simulate", help="run the closed loop from x0")
    p.add_argument("config")
    p.add_argument("controller")
    p.add_argument("--x0", required=True, help="comma-separated coordinates")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--out", help="trace CSV to write")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare",
                       help="run both methods and compare their metrics")
    p.add_argument("config")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
