"""Acceptance criteria A1-A9.

Each criterion is a function returning ``(passed, detail)``. Under pytest
every criterion is one test and a pass/fail line per criterion is printed
in the terminal summary; ``python3 tests/test_acceptance.py`` runs them
directly and prints the same lines.
"""

import math
import time

import numpy as np
import pytest

from mulcontrol import spectral
from mulcontrol.dynamics import ControlSchedule, Nonlinearity, ProblemSpec, solve
from mulcontrol.estimates import (closure_check, static_error_bound, verify_contraction, verify_energy_bounds,
                                  verify_growth_bound)
from mulcontrol.field_core import ScalarField, l2_norm, make_grid
from mulcontrol.suite import random_suite
from mulcontrol.synthesis import static_log_ratio_control, steer

RESULTS: dict[str, tuple[bool, str]] = {}

T_SWEEP = (0.1, 0.05, 0.02, 0.01)


def exact_eigenmode_error(T: float) -> float:
    """``0.5 (1 - exp(-pi^2 T)) sqrt(1/2)``: sin(pi x) steered towards half of itself."""
    return 0.5 * (1 - math.exp(-math.pi**2 * T)) * math.sqrt(0.5)


def _sine(grid):
    return ScalarField.from_function(grid, lambda x: np.sin(np.pi * x))


def _static_run(f, T, n=199, dt=1e-5, reaction_only=False):
    g = make_grid(1, n, 1.0)
    u0 = _sine(g)
    ustar = 0.5 * u0
    v = static_log_ratio_control(u0, ustar, T)
    tr = solve(ProblemSpec(g, f, u0, T), ControlSchedule.static(v, T), dt, reaction_only=reaction_only)
    return u0, ustar, v, tr


def criterion_a1():
    t0 = time.perf_counter()
    _, ustar, _, tr = _static_run(Nonlinearity.zero(), 0.01)
    runtime = time.perf_counter() - t0
    err = l2_norm(tr.final - ustar)
    exact = exact_eigenmode_error(0.01)
    rel = abs(err - exact) / exact
    return rel <= 0.02 and runtime < 5, f"error {err:.6f} vs exact {exact:.6f} (rel {rel:.2e}), {runtime:.2f}s"


def _sweep(f):
    rows = []
    for T in T_SWEEP:
        u0, ustar, v, tr = _static_run(f, T)
        rows.append((T, l2_norm(tr.final - ustar), static_error_bound(u0, v * T, f.L, T)))
    return rows


def criterion_a2():
    rows = _sweep(Nonlinearity.zero())
    errs = [e for _, e, _ in rows]
    slack_ok = all(b - e >= 0 for _, e, b in rows)
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    # T halves from 0.1 to 0.05 and from 0.02 to 0.01
    ratios = [errs[1] / errs[0], errs[3] / errs[2]]
    ok = slack_ok and decreasing and max(ratios) <= 0.75
    detail = ", ".join(f"T={T}: {e:.5f}<={b:.5f}" for T, e, b in rows)
    return ok, f"{detail}; halving ratios {ratios[0]:.3f}, {ratios[1]:.3f}"


def criterion_a3():
    f = Nonlinearity.scaled_sine(0.1)
    rows = _sweep(f)
    assert max(T_SWEEP) <= 1 / (4 * f.L)
    within = all(e <= b * (1 + 1e-2) for _, e, b in rows)
    final = rows[-1][1]
    ok = within and final < 0.05
    return ok, ", ".join(f"T={T}: {e:.5f}<={b:.5f}" for T, e, b in rows)


def _oracle_discrepancy(n, dt, v=-2.0, T=0.1):
    g = make_grid(1, n, 1.0)
    u0 = ScalarField.from_function(g, lambda x: 4 * x * (1 - x) * (1 + np.cos(3 * np.pi * x)))
    tr = solve(ProblemSpec(g, Nonlinearity.zero(), u0, T), ControlSchedule.constant(g, v, T), dt)
    return l2_norm(tr.final - spectral.oracle_state(u0, v, T))


def richardson_orders(errors, ratio=2.0):
    """Orders from successive differences ``e_i - e_{i+1}``; constant error parts cancel."""
    d = np.diff(errors)
    return [math.log(d[i] / d[i + 1]) / math.log(ratio) for i in range(len(d) - 1)]


def criterion_a4():
    e_dt = [_oracle_discrepancy(199, dt) for dt in (4e-4, 2e-4, 1e-4, 5e-5)]
    # h = 1/(n+1) halves along 24, 49, 99, 199
    e_h = [_oracle_discrepancy(n, 1e-4) for n in (24, 49, 99, 199)]
    p_dt, p_h = richardson_orders(e_dt), richardson_orders(e_h)
    absolute = _oracle_discrepancy(199, 1e-4)
    ok = all(abs(p - 1) <= 0.1 for p in p_dt) and all(abs(p - 2) <= 0.1 for p in p_h) and absolute <= 5e-3
    return ok, (f"dt orders {', '.join(f'{p:.3f}' for p in p_dt)}; h orders {', '.join(f'{p:.3f}' for p in p_h)};"
                f" discrepancy {absolute:.2e} at n=199, dt=1e-4")


def _fabricated_fails(case_reports_pair):
    # states after t = 0 scaled by 10 must break state, growth and contraction bounds
    case, _ = case_reports_pair
    g = case.v.grid
    sched = ControlSchedule.static(case.v, case.T)
    dt = case.T / case.nsteps
    tr = solve(ProblemSpec(g, case.f, case.u0_a, case.T), sched, dt)
    tb = solve(ProblemSpec(g, case.f, case.u0_b, case.T), sched, dt)
    fake = lambda t: t.with_states(np.concatenate([t.states[:1], 10 * t.states[1:]]))
    reports = verify_energy_bounds(fake(tr), case.f.L, case.v, case.T)
    reports.append(verify_growth_bound(fake(tr), case.f.L, sched))
    reports.append(verify_contraction(fake(tr), tb, case.f.L, sched))
    return all(not r.passed for r in reports[:1] + reports[3:])


def criterion_a5():
    t0 = time.perf_counter()
    suite = random_suite(seed=0, cases=10, tol=1e-3)
    runtime = time.perf_counter() - t0
    reports = [r for _, reps in suite for r in reps]
    all_pass = all(r.passed and r.hypothesis_ok for r in reports)
    names = sorted({r.name for r in reports})
    fabricated = all(_fabricated_fails(pair) for pair in suite)
    ok = all_pass and fabricated and runtime < 60 and len(reports) == 60
    return ok, f"{len(reports)} reports ({', '.join(names)}) pass; fabricated traces fail: {fabricated}; {runtime:.2f}s"


def criterion_a6():
    _, ustar, _, tr = _static_run(Nonlinearity.zero(), 0.01, dt=1e-3, reaction_only=True)
    pointwise = float(np.max(np.abs(tr.final.values - ustar.values)))
    g = make_grid(1, 199, 1.0)
    L = 0.3
    tr2 = solve(ProblemSpec(g, Nonlinearity.linear(L), _sine(g), 0.5),
                ControlSchedule.constant(g, 2.0, 0.5), 0.01, reaction_only=True)
    r = verify_growth_bound(tr2, L)
    gap = abs(r.lhs / r.rhs - 1)
    return pointwise <= 1e-10 and gap <= 1e-9, f"max|u(T)-u*| = {pointwise:.1e}; growth lhs/rhs - 1 = {gap:.1e}"


def criterion_a7():
    g = make_grid(1, 199, 1.0)
    u0 = ScalarField.from_function(g, lambda x: x * (1 - x) * (1 + np.cos(3 * np.pi * x)))
    r = np.abs(g.coords(0) - 0.6)
    ustar = ScalarField(g, np.where(r < 0.25, 0.25 * (1 + np.cos(np.pi * r / 0.25)), 0.0))
    prob = ProblemSpec(g, Nonlinearity.scaled_sine(0.1), u0, 0.5)
    t0 = time.perf_counter()
    sched, rep = steer(prob, ustar, 0.05)
    runtime = time.perf_counter() - t0
    recomputed = l2_norm(solve(prob, sched).final - ustar)
    n_iter = rep.plan.n_iter
    conforming = (sched.breakpoints[0] == 0.0 and math.isclose(sched.T, 0.5)
                  and all(b > a for a, b in zip(sched.breakpoints, sched.breakpoints[1:])))
    ok = recomputed < 0.05 and rep.ledger.passed and conforming and sched.m <= 2 + n_iter and runtime < 120
    return ok, (f"final error {recomputed:.5f}, ledger pass {rep.ledger.passed}, m={sched.m}, "
                f"n_iter={n_iter}, {runtime:.1f}s")


def criterion_a8():
    rng = np.random.default_rng(8)
    g = make_grid(1, 63, 1.0)
    kinds = ["zero", "linear", "scaled_sine", "saturating"]
    worst = math.inf
    for _ in range(100):
        u0 = ScalarField(g, rng.uniform(0, 1, g.shape) * (rng.uniform(size=g.shape) < 0.8))
        m = int(rng.integers(1, 6))
        bps = np.concatenate([[0.0], np.cumsum(rng.integers(1, 20, m))]) * 0.005
        steps = tuple(ScalarField(g, rng.uniform(-50, 50, g.shape)) for _ in range(m))
        kind = kinds[rng.integers(4)]
        L = float(rng.uniform(0, 2))
        f = Nonlinearity.zero() if kind == "zero" else (
            Nonlinearity.linear(float(rng.uniform(-L, L)), L) if kind == "linear" else Nonlinearity(kind, L))
        tr = solve(ProblemSpec(g, f, u0, bps[-1]), ControlSchedule(tuple(bps), steps), 0.005)
        worst = min(worst, float(tr.states.min()))
    return worst >= -1e-12, f"100 runs, smallest state value {worst:.2e}"


def criterion_a9():
    rng = np.random.default_rng(9)
    worst = -math.inf
    for _ in range(1000):
        eps = 10 ** rng.uniform(-6, 2)
        L = rng.uniform(0, 10)
        M = 1 + 10 ** rng.uniform(-4, 3)
        T1 = rng.uniform(1e-6, 1.0)
        r = closure_check(eps, L, M, T1)
        if not r.passed:
            return False, f"failed at eps={eps}, L={L}, M={M}, T1={T1}"
        worst = max(worst, r.lhs / r.rhs - 1)
    edge = closure_check(0.1, 3.0, 5.0, 1.0)
    ok = edge.passed and abs(edge.lhs - edge.rhs) <= 1e-12 * edge.rhs
    return ok, f"1000 random tuples pass, max lhs/rhs - 1 = {worst:.1e}; T1 = 1 attains eps/8"


CRITERIA = {
    "A1": ("static control, linear eigenmode", criterion_a1),
    "A2": ("error envelope and decay", criterion_a2),
    "A3": ("static control, nonlinear", criterion_a3),
    "A4": ("oracle equivalence orders", criterion_a4),
    "A5": ("randomised estimate suite", criterion_a5),
    "A6": ("pure-reaction exactness", criterion_a6),
    "A7": ("end-to-end steering", criterion_a7),
    "A8": ("nonnegativity, 100 schedules", criterion_a8),
    "A9": ("ledger closure identity", criterion_a9),
}


def _line(key: str) -> str:
    ok, detail = RESULTS[key]
    return f"{key} {'PASS' if ok else 'FAIL'} {CRITERIA[key][0]}: {detail}"


@pytest.mark.parametrize("key", list(CRITERIA))
def test_criterion(key):
    RESULTS[key] = CRITERIA[key][1]()
    print(_line(key))
    assert RESULTS[key][0], _line(key)


def summary_lines() -> list[str]:
    return [_line(k) for k in CRITERIA if k in RESULTS]


if __name__ == "__main__":
    for key in CRITERIA:
        RESULTS[key] = CRITERIA[key][1]()
        print(_line(key), flush=True)
