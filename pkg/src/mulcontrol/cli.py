"""Command line front end.

::

    mulcontrol simulate|synthesize|verify|sweep|oracle-compare --config CFG --out DIR [--seed N]

Exit codes: 0 success, 1 verification failure, 2 config or alignment error,
3 precondition violation. Every run writes ``manifest.json`` with the
resolved config; wall-clock timings go to ``timing.json`` so that all other
outputs are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import spectral
from .config import (ConfigError, build_control, build_field, build_grid, build_nonlinearity,
                     load_config, public_config)
from .dynamics import (AlignmentError, ControlSchedule, ProblemSpec, StabilityError, solve)
from .estimates import (static_error_bound, verify_contraction, verify_nonneg, verify_energy_bounds,
                        verify_growth_bound)
from .field_core import l2_norm, write_field_csv
from .suite import random_suite
from .synthesis import PreconditionError, SynthesisError, check_ratio_condition, static_log_ratio_control, steer

log = logging.getLogger("mulcontrol")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _require(cfg: dict, *keys: str):
    for key in keys:
        if cfg.get(key) is None:
            raise ConfigError(f"config: '{key}' is required for this command")


def _problem(cfg: dict) -> ProblemSpec:
    _require(cfg, "initial", "T")
    grid = build_grid(cfg)
    u0 = build_field(cfg["initial"], grid, cfg["_base_dir"])
    return ProblemSpec(grid, build_nonlinearity(cfg), u0, float(cfg["T"]))


def _target(cfg: dict, grid):
    _require(cfg, "target")
    return build_field(cfg["target"], grid, cfg["_base_dir"])


def _default_dt(schedule: ControlSchedule, L: float, T: float) -> float:
    rate = max(L, schedule.sup_positive_part())
    nsteps = max(1000, math.ceil(2 * T * rate))
    return T / nsteps


def _schedule_from_config(cfg: dict, problem: ProblemSpec) -> ControlSchedule:
    ctl = cfg.get("control")
    if ctl is not None and ctl["kind"] == "log_ratio":
        v = static_log_ratio_control(problem.u0, _target(cfg, problem.grid), problem.T)
        return ControlSchedule.static(v, problem.T)
    return build_control(cfg, problem.grid, problem.T)


def write_schedule(out: Path, schedule: ControlSchedule) -> None:
    """``schedule.json`` with breakpoints, time steps and per-step field files."""
    step_dir = out / "schedule"
    step_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for k, v in enumerate(schedule.steps, start=1):
        name = f"step_{k:05d}.csv"
        write_field_csv(step_dir / name, v)
        files.append(f"schedule/{name}")
    _dump(out / "schedule.json", {
        "m": schedule.m,
        "breakpoints": list(schedule.breakpoints),
        "dts": None if schedule.dts is None else list(schedule.dts),
        "steps": files,
    })


def run_simulate(cfg: dict, out: Path) -> int:
    problem = _problem(cfg)
    schedule = _schedule_from_config(cfg, problem)
    dt = cfg["dt"] if cfg["dt"] is not None else _default_dt(schedule, problem.f.L, problem.T)
    trace = solve(problem, schedule, dt, reaction_only=bool(cfg["reaction_only"]))
    trace.to_csv(out / "trace.csv")
    snaps = []
    if cfg["snapshots"]:
        (out / "snapshots").mkdir(exist_ok=True)
    for t in cfg["snapshots"]:
        i = trace.index_at(float(t))
        name = f"snapshots/u_t{i:07d}.csv"
        write_field_csv(out / name, trace.state(i))
        snaps.append({"t": float(trace.times[i]), "file": name})
    report = {
        "T": trace.T,
        "dt": dt,
        "steps": len(trace) - 1,
        "final_l2": float(trace.l2_u[-1]),
        "final_linf": float(trace.linf_u[-1]),
        "min_state": float(trace.states.min()),
        "max_l2": float(trace.l2_u.max()),
        "snapshots": snaps,
    }
    if cfg["target"] is not None:
        report["final_error"] = l2_norm(trace.final - _target(cfg, problem.grid))
    _dump(out / "report.json", report)
    return EXIT_OK


def run_synthesize(cfg: dict, out: Path) -> int:
    _require(cfg, "eps")
    problem = _problem(cfg)
    ustar = _target(cfg, problem.grid)
    eps = float(cfg["eps"])
    if not np.any(problem.u0.values != 0):
        raise PreconditionError("the zero initial state cannot be steered anywhere")

    report = None
    if np.all(problem.u0.values != 0) and check_ratio_condition(problem.u0, ustar)[0]:
        v = static_log_ratio_control(problem.u0, ustar, problem.T)
        schedule = ControlSchedule.static(v, problem.T)
        dt = cfg["dt"] if cfg["dt"] is not None else _default_dt(schedule, problem.f.L, problem.T)
        schedule = ControlSchedule.static(v, problem.T, dt)
        trace = solve(problem, schedule)
        err = l2_norm(trace.final - ustar)
        if err < eps:
            report = {
                "mode": "static",
                "eps": eps,
                "success": True,
                "final_error": err,
                "static_error_bound": static_error_bound(problem.u0, v * problem.T, problem.f.L, problem.T),
                "m": 1,
            }
    if report is None:
        schedule, rep = steer(problem, ustar, eps)
        trace = rep.trace
        report = {"mode": "two_phase", **rep.to_dict()}
    write_schedule(out, schedule)
    trace.to_csv(out / "trace.csv")
    write_field_csv(out / "final_state.csv", trace.final)
    _dump(out / "synthesis_report.json", report)
    return EXIT_OK if report["success"] else EXIT_VERIFY


def _fabricate(trace, scale: float):
    states = np.array(trace.states)
    states[1:] *= scale
    return trace.with_states(states)


def run_verify(cfg: dict, out: Path) -> int:
    vcfg = cfg["verify"]
    tol = float(vcfg.get("tol", 1e-3))
    reports = []
    cases = []
    if vcfg.get("suite", "trace") == "random":
        for case, reps in random_suite(cfg["seed"], int(vcfg.get("cases", 10)), tol):
            cases.append(case.describe())
            reports.extend(reps)
    else:
        problem = _problem(cfg)
        schedule = _schedule_from_config(cfg, problem)
        dt = cfg["dt"] if cfg["dt"] is not None else _default_dt(schedule, problem.f.L, problem.T)
        trace = solve(problem, schedule, dt)
        scale = vcfg.get("fabricate_scale")
        if scale is not None:
            trace = _fabricate(trace, float(scale))
        L = problem.f.L
        if schedule.m == 1:
            reports.extend(verify_energy_bounds(trace, L, schedule.steps[0], problem.T, tol))
        reports.append(verify_growth_bound(trace, L, schedule, tol))
        reports.append(verify_nonneg(trace))
        if cfg["initial_b"] is not None:
            u0b = build_field(cfg["initial_b"], problem.grid, cfg["_base_dir"])
            trace_b = solve(ProblemSpec(problem.grid, problem.f, u0b, problem.T), schedule, dt)
            if scale is not None:
                trace_b = _fabricate(trace_b, float(scale))
            reports.append(verify_contraction(trace, trace_b, L, schedule, tol))
    _dump(out / "bounds.json", {"cases": cases, "reports": [r.to_dict() for r in reports]})
    failed = [r for r in reports if r.hypothesis_ok and not r.passed]
    for r in failed:
        log.error("bound %s failed: lhs=%.6g rhs=%.6g", r.name, r.lhs, r.rhs)
    return EXIT_VERIFY if failed else EXIT_OK


def _richardson_order(errors, params):
    orders = [None] * len(errors)
    for i in range(2, len(errors)):
        d1 = errors[i - 2] - errors[i - 1]
        d2 = errors[i - 1] - errors[i]
        r = params[i - 2] / params[i - 1]
        if d1 != 0 and d2 != 0 and r != 1 and d1 / d2 > 0:
            orders[i] = math.log(d1 / d2) / math.log(r)
    return orders


def _oracle_discrepancy(problem: ProblemSpec, v1: float, dt: float, K=None):
    schedule = ControlSchedule.constant(problem.grid, v1, problem.T)
    trace = solve(problem, schedule, dt)
    exact = spectral.oracle_state(problem.u0, v1, problem.T, K)
    if problem.f.kind != "zero":
        exact = exact + spectral.f_term(trace, v1, problem.T, K)
    return trace, exact, l2_norm(trace.final - exact)


def _constant_rate(cfg: dict) -> float:
    ctl = cfg.get("control") or {"kind": "constant", "value": 0.0}
    if ctl["kind"] != "constant":
        raise ConfigError("oracle comparison needs a spatially constant control")
    return float(ctl.get("value", 0.0))


def run_sweep(cfg: dict, out: Path, parameter: str | None = None, values=None) -> int:
    parameter = parameter or cfg["sweep"].get("parameter")
    values = values if values is not None else cfg["sweep"].get("values")
    if parameter not in ("T", "dt", "n", "eps") or not values:
        raise ConfigError("sweep needs parameter in {T, dt, n, eps} and a list of values")
    rows, timing = [], []
    for value in values:
        t0 = time.perf_counter()
        row = {"parameter": parameter, "value": value, "error": math.nan, "bound": math.nan, "status": "ok"}
        try:
            local = dict(cfg)
            if parameter == "n":
                local["grid"] = dict(cfg["grid"], n=int(value))
            elif parameter in ("T", "dt", "eps"):
                local[parameter] = float(value)
            problem = _problem(local)
            if parameter == "T":
                ustar = _target(local, problem.grid)
                v = static_log_ratio_control(problem.u0, ustar, problem.T)
                dt = local["dt"] if local["dt"] is not None else problem.T / 1000
                trace = solve(problem, ControlSchedule.static(v, problem.T), dt)
                row["error"] = l2_norm(trace.final - ustar)
                row["bound"] = static_error_bound(problem.u0, v * problem.T, problem.f.L, problem.T)
            elif parameter in ("dt", "n"):
                _require(local, "dt")
                _, _, disc = _oracle_discrepancy(problem, _constant_rate(local), float(local["dt"]))
                row["error"] = disc
            else:
                _, rep = steer(problem, _target(local, problem.grid), float(value))
                row["error"] = rep.final_error
                row["bound"] = float(value)
        except (ValueError, RuntimeError) as exc:
            row["status"] = f"{type(exc).__name__}: {exc}".replace(",", ";")
        rows.append(row)
        timing.append({"value": value, "runtime_s": time.perf_counter() - t0})

    if parameter in ("dt", "n"):
        scale = [float(v) if parameter == "dt" else 1.0 / (int(v) + 1) for v in values]
        orders = _richardson_order([r["error"] for r in rows], scale)
    else:
        orders = [None] * len(rows)
    lines = ["parameter,value,error,bound,order,status"]
    for row, p in zip(rows, orders):
        value = str(int(row["value"])) if parameter == "n" else repr(float(row["value"]))
        lines.append(",".join([
            row["parameter"], value, repr(float(row["error"])), repr(float(row["bound"])),
            "" if p is None else repr(float(p)), row["status"],
        ]))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    _dump(out / "timing.json", {"rows": timing})
    errs = [r["error"] for r in rows if r["status"] == "ok"]
    return EXIT_OK if len(errs) == len(rows) else EXIT_VERIFY


def run_oracle_compare(cfg: dict, out: Path) -> int:
    problem = _problem(cfg)
    if problem.grid.dim != 1:
        raise ConfigError("oracle comparison is one-dimensional")
    _require(cfg, "dt")
    v1 = _constant_rate(cfg)
    tol = float(cfg["oracle"].get("tolerance", 5e-3))
    K = cfg["oracle"].get("K")
    trace, exact, disc = _oracle_discrepancy(problem, v1, float(cfg["dt"]), K)
    before = spectral.project(problem.u0, K)
    after_fd = spectral.project(trace.final, K)
    after_oracle = spectral.project(exact, K)
    F = spectral.f_term(trace, v1, problem.T, K)
    M = math.exp(v1 * problem.T)
    bound = spectral.f_term_bound(trace, M, problem.T)
    spectral.write_modal_csv(out / "modal.csv", before, {"c_k_fd": after_fd, "c_k_oracle": after_oracle})
    result = {
        "discrepancy": disc,
        "tolerance": tol,
        "pass": disc <= tol,
        "F_eps_norm": l2_norm(F),
        "F_eps_bound": bound,
        "F_eps_within_bound": l2_norm(F) <= bound * (1 + 1e-6),
        "modes": [
            {"k": k + 1, "lambda_k": float(before.lambdas[k]), "c_k": float(before.coeffs[k]),
             "c_k_fd": float(after_fd.coeffs[k]), "c_k_oracle": float(after_oracle.coeffs[k])}
            for k in range(min(before.K, 16))
        ],
    }
    _dump(out / "compare.json", result)
    return EXIT_OK if result["pass"] and result["F_eps_within_bound"] else EXIT_VERIFY


COMMANDS = {
    "simulate": run_simulate,
    "synthesize": run_synthesize,
    "verify": run_verify,
    "sweep": run_sweep,
    "oracle-compare": run_oracle_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mulcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--parameter", default=None, help="sweep parameter (overrides config)")
    parser.add_argument("--values", default=None, help="comma separated sweep values")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["seed"] = args.seed
        out = Path(args.out or cfg["output_dir"] or "out")
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "manifest.json", {"command": args.command, "config": public_config(cfg)})
        t0 = time.perf_counter()
        if args.command == "sweep":
            values = None if args.values is None else [float(v) for v in args.values.split(",")]
            code = run_sweep(cfg, out, args.parameter, values)
        else:
            code = COMMANDS[args.command](cfg, out)
        if args.command != "sweep":
            _dump(out / "timing.json", {"runtime_s": time.perf_counter() - t0})
        return code
    except PreconditionError as exc:
        log.error("precondition violated: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, AlignmentError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
