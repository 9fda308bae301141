"""Randomised verification suite for the energy estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlSchedule, Nonlinearity, ProblemSpec, solve
from .estimates import (BoundReport, DEFAULT_TOL, verify_contraction, verify_nonneg,
                        verify_energy_bounds, verify_growth_bound)
from .field_core import Grid, ScalarField, make_grid

__all__ = ["SuiteCase", "random_case", "run_case", "random_suite"]


@dataclass(frozen=True, eq=False)
class SuiteCase:
    f: Nonlinearity
    v: ScalarField
    u0_a: ScalarField
    u0_b: ScalarField
    T: float
    nsteps: int

    def describe(self) -> dict:
        return {"f": self.f.to_dict(), "T": self.T, "nsteps": self.nsteps,
                "v_min": self.v.min(), "v_max": self.v.max()}


def _random_nonneg_mix(grid: Grid, rng: np.random.Generator, modes: int = 5) -> ScalarField:
    # |a_k| k <= 1/4 for k >= 2 keeps the mix nonnegative, since |sin(k t)| <= k sin(t) on [0, pi]
    a = np.concatenate([[1.0], rng.uniform(-1, 1, modes - 1) / (4 * np.arange(2, modes + 1))])
    a *= rng.uniform(0.5, 2.0)
    x = grid.coords(0) / grid.lengths[0]
    vals = sum(ak * np.sin((k + 1) * np.pi * x) for k, ak in enumerate(a))
    return ScalarField(grid, np.maximum(vals, 0.0))


def _random_nonpositive_control(grid: Grid, rng: np.random.Generator, vmax: float = 5.0) -> ScalarField:
    x = grid.coords(0) / grid.lengths[0]
    b = rng.uniform(-0.3, 0.3, 3)
    g = 1.0 + sum(bk * np.cos((k + 1) * np.pi * x) for k, bk in enumerate(b))
    return ScalarField(grid, -rng.uniform(0.0, vmax) * g / g.max())


def random_case(rng: np.random.Generator, grid: Grid | None = None, nsteps: int = 400) -> SuiteCase:
    """One case: smooth ``v <= 0`` with ``|v| <= 5``, 5-mode nonnegative sine
    mixes, a builtin ``f`` with ``L <= 1``, and ``T = 1/(8L)`` (0.1 if ``L = 0``)."""
    grid = make_grid(1, 63, 1.0) if grid is None else grid
    kind = ["zero", "linear", "scaled_sine", "saturating"][rng.integers(4)]
    if kind == "zero":
        f = Nonlinearity.zero()
    else:
        L = float(rng.uniform(0.1, 1.0))
        f = Nonlinearity.linear(float(rng.uniform(-L, L)), L) if kind == "linear" else Nonlinearity(kind, L)
    T = 1.0 / (8.0 * f.L) if f.L > 0 else 0.1
    v = _random_nonpositive_control(grid, rng)
    return SuiteCase(f, v, _random_nonneg_mix(grid, rng), _random_nonneg_mix(grid, rng), T, nsteps)


def run_case(case: SuiteCase, tol: float = DEFAULT_TOL) -> list[BoundReport]:
    schedule = ControlSchedule.static(case.v, case.T)
    dt = case.T / case.nsteps
    grid = case.v.grid
    tr_a = solve(ProblemSpec(grid, case.f, case.u0_a, case.T), schedule, dt)
    tr_b = solve(ProblemSpec(grid, case.f, case.u0_b, case.T), schedule, dt)
    reports = verify_energy_bounds(tr_a, case.f.L, case.v, case.T, tol)
    reports.append(verify_growth_bound(tr_a, case.f.L, schedule, tol))
    reports.append(verify_contraction(tr_a, tr_b, case.f.L, schedule, tol))
    reports.append(verify_nonneg(tr_a))
    return reports


def random_suite(seed: int = 0, cases: int = 10, tol: float = DEFAULT_TOL) -> list[tuple[SuiteCase, list[BoundReport]]]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(cases):
        case = random_case(rng)
        out.append((case, run_case(case, tol)))
    return out
