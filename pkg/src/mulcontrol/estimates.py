"""Numerical checks of the a-priori estimates along computed trajectories.

Each verifier is a pure function of one or two traces and returns
:class:`BoundReport` objects comparing a measured quantity with the
corresponding theoretical bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Mapping

import numpy as np

from .dynamics import ControlSchedule, SolveTrace
from .field_core import ScalarField, h10_norm, l2_norm, laplacian, linf_norm

__all__ = [
    "BoundReport",
    "BudgetEntry",
    "BudgetLedger",
    "DEFAULT_TOL",
    "c_constant",
    "verify_energy_bounds",
    "verify_growth_bound",
    "verify_contraction",
    "verify_nonneg",
    "static_error_bound",
    "closure_check",
    "budget_ledger",
]

DEFAULT_TOL = 1e-3
NONNEG_FLOOR = 1e-12


@dataclass(frozen=True)
class BoundReport:
    """Measured ``lhs`` against bound ``rhs``; passes when ``lhs <= rhs (1 + tol)``.

    ``hypothesis_ok`` is False when the bound's assumptions do not hold for
    the inputs; the comparison is still carried out and reported.
    """

    name: str
    lhs: float
    rhs: float
    tol: float = DEFAULT_TOL
    hypothesis_ok: bool = True
    note: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs * (1 + self.tol))

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "pass": self.passed,
            "tol": self.tol,
            "hypothesis_ok": self.hypothesis_ok,
        }
        if self.note:
            out["note"] = self.note
        return out


def _max_abs_laplacian(v: ScalarField) -> float:
    # controls need not vanish on the boundary, so no zero ghost values here
    return linf_norm(laplacian(v, boundary="extrapolate"))


def c_constant(L: float, T: float, v_field: ScalarField) -> float:
    """``sqrt(1 + 2 T max|Lap v| + 2 L^2 T)``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    return math.sqrt(1.0 + 2.0 * T * _max_abs_laplacian(v_field) + 2.0 * L**2 * T)


def _right_endpoint_integral(trace: SolveTrace, values: np.ndarray) -> float:
    return float(np.sum(np.diff(trace.times) * values[1:]))


def verify_energy_bounds(trace: SolveTrace, L: float, v_field: ScalarField, T: float | None = None,
                  tol: float = DEFAULT_TOL) -> list[BoundReport]:
    """Three energy bounds for a nonpositive static control on a short horizon.

    (a) ``max_t ||u|| <= sqrt(2) ||u0||``
    (b) ``max_t ||f(u)|| <= sqrt(2) L ||u0||``
    (c) ``||Lap u||_{L2(Q_T)} <= C(L, T, v) ||u0||_{H1_0}``

    The hypotheses ``v <= 0`` and ``L T <= 1/4`` are checked and flagged.
    """
    T = trace.T if T is None else T
    notes = []
    if v_field.max() > 0:
        notes.append("control has a positive part")
    if L * T > 0.25 * (1 + 1e-12):
        notes.append(f"L*T = {L * T:.6g} > 1/4")
    ok = not notes
    note = "; ".join(notes)
    u0 = trace.u0
    norm0 = l2_norm(u0)
    lap_l2 = math.sqrt(_right_endpoint_integral(trace, trace.l2_lap_u**2))
    return [
        BoundReport("energy_state", float(trace.l2_u.max()), math.sqrt(2) * norm0, tol, ok, note),
        BoundReport("energy_reaction", float(trace.l2_f_u.max()), math.sqrt(2) * L * norm0, tol, ok, note),
        BoundReport("energy_laplacian", lap_l2, c_constant(L, T, v_field) * h10_norm(u0), tol, ok, note),
    ]


def _growth_rate(L: float, schedule: ControlSchedule) -> float:
    return L + schedule.sup_positive_part()


def verify_growth_bound(trace: SolveTrace, L: float, schedule: ControlSchedule | None = None,
                  tol: float = DEFAULT_TOL) -> BoundReport:
    """``max_t ||u(t)|| <= exp((L + ||v^+||_inf) T) ||u0||`` for any control."""
    schedule = trace.schedule if schedule is None else schedule
    rhs = math.exp(_growth_rate(L, schedule) * trace.T) * float(trace.l2_u[0])
    return BoundReport("growth", float(trace.l2_u.max()), rhs, tol)


def verify_contraction(trace_a: SolveTrace, trace_b: SolveTrace, L: float,
                       schedule: ControlSchedule | None = None,
                       tol: float = DEFAULT_TOL) -> BoundReport:
    """``max_t ||u_a - u_b|| <= exp((L + ||v^+||_inf) T) ||u_a(0) - u_b(0)||``."""
    if trace_a.grid != trace_b.grid or trace_a.states.shape != trace_b.states.shape:
        raise ValueError("traces are on different grids or time levels")
    if not np.allclose(trace_a.times, trace_b.times, rtol=1e-12, atol=0):
        raise ValueError("traces use different time levels")
    schedule = trace_a.schedule if schedule is None else schedule
    diff = trace_a.states - trace_b.states
    axes = tuple(range(1, diff.ndim))
    dist = np.sqrt(trace_a.grid.cell_volume * np.sum(diff**2, axis=axes))
    rhs = math.exp(_growth_rate(L, schedule) * trace_a.T) * float(dist[0])
    return BoundReport("contraction", float(dist.max()), rhs, tol)


def verify_nonneg(trace: SolveTrace) -> BoundReport:
    """Nonnegative data must stay nonnegative (down to ``-1e-12``)."""
    ok = bool(trace.states[0].min() >= 0)
    lhs = max(0.0, -float(trace.states.min()))
    note = "" if ok else "initial state has negative values"
    return BoundReport("nonnegativity", lhs, NONNEG_FLOOR, 0.0, ok, note)


def static_error_bound(u0: ScalarField, v0_star: ScalarField, L: float, T: float) -> float:
    """``sqrt(2T (1 + 2 max|Lap v0*| + 4 L^2 T)) ||u0||_{H1_0}``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    return math.sqrt(2.0 * T * (1.0 + 2.0 * _max_abs_laplacian(v0_star) + 4.0 * L**2 * T)) * h10_norm(u0)


def closure_check(eps: float, L: float, M_eps: float, T1: float) -> BoundReport:
    """``exp((L + v1) T1) eps / (16 e^L M) + eps/16 <= eps/8`` with ``exp(v1 T1) = M``."""
    if not (M_eps > 1 and 0 < T1 <= 1):
        return BoundReport("closure", math.nan, eps / 8, 1e-12, False,
                           "needs M > 1 and 0 < T1 <= 1")
    v1 = math.log(M_eps) / T1
    lhs = math.exp((L + v1) * T1) * eps / (16 * math.exp(L) * M_eps) + eps / 16
    return BoundReport("closure", lhs, eps / 8, 1e-12)


@dataclass(frozen=True)
class BudgetEntry:
    name: str
    tag: str
    measured: float
    budget: float

    @property
    def passed(self) -> bool:
        return bool(self.measured < self.budget)

    def to_dict(self) -> dict:
        return {"name": self.name, "tag": self.tag, "measured": self.measured,
                "budget": self.budget, "pass": self.passed}


@dataclass(frozen=True)
class BudgetLedger:
    eps: float
    entries: tuple[BudgetEntry, ...]
    closure: BoundReport | None = None
    missing: tuple[str, ...] = dc_field(default=())

    @property
    def passed(self) -> bool:
        ok = all(e.passed for e in self.entries)
        if self.closure is not None:
            ok = ok and self.closure.passed
        return ok

    def __getitem__(self, name: str) -> BudgetEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "pass": self.passed,
            "entries": [e.to_dict() for e in self.entries],
            "closure": None if self.closure is None else self.closure.to_dict(),
            "missing": list(self.missing),
        }


def _budgets(eps: float, L: float, M_eps: float) -> list[tuple[str, str, float]]:
    return [
        ("approx_target", "||u*_eps - u*|| < eps/4", eps / 4),
        ("approx_initial", "||u0_eps - u0|| < eps/(16 e^L M)", eps / (16 * math.exp(L) * M_eps)),
        ("cutoff", "||u*_eta - u*_eps|| < eps/4", eps / 4),
        ("semigroup", "||e^{v1 T1} S(T1) u0_eps - M u0_eps|| < eps/32", eps / 32),
        ("phase1_from_approx", "||u_eps(T1) - M u0_eps|| < eps/16", eps / 16),
        ("phase1", "||u(T1) - M u0_eps|| < eps/8", eps / 8),
        ("delta0", "||delta0|| < eps/(4 sqrt 2)", eps / (4 * math.sqrt(2))),
        ("phase2", "||u~(T) - u*_eta|| < eps/4", eps / 4),
        ("final", "||u(T) - u*|| < eps", eps),
    ]


def budget_ledger(eps: float, L: float, M_eps: float, stages: Mapping[str, float]) -> BudgetLedger:
    """Compare measured stage errors with their tolerances.

    ``stages`` maps entry names (see ``_budgets``) to measured values; the
    optional key ``"T1"`` adds the closure check. Entries without a
    measurement are listed under ``missing``.
    """
    entries = []
    missing = []
    for name, tag, budget in _budgets(eps, L, M_eps):
        if name in stages:
            entries.append(BudgetEntry(name, tag, float(stages[name]), budget))
        else:
            missing.append(name)
    closure = closure_check(eps, L, M_eps, stages["T1"]) if "T1" in stages else None
    return BudgetLedger(eps, tuple(entries), closure, tuple(missing))
