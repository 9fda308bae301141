"""Semilinear reaction-diffusion dynamics ``u_t = Lap u + v(x, t) u + f(u)``
with homogeneous Dirichlet data and piecewise-static reaction coefficients.

Time stepping is backward Euler in ``Lap + v`` and explicit in ``f``::

    (I - dt Lap_h - dt diag(v)) u_new = u + dt f(u)

Under ``dt * max(L, sup v+) <= 1/2`` the matrix is a nonsingular M-matrix and
the right-hand side keeps the sign of ``u``, so nonnegative data stay
nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .field_core import Grid, ScalarField, _laplacian_values, linf_norm

__all__ = [
    "Nonlinearity",
    "ControlSchedule",
    "ProblemSpec",
    "SolveTrace",
    "StabilityError",
    "AlignmentError",
    "LinearSolveError",
    "control_at",
    "stability_guard",
    "step_imex",
    "solve",
    "lipschitz_selfcheck",
]

RESIDUAL_TOL = 1e-10


class StabilityError(ValueError):
    """Time step too large for the stability guard."""


class AlignmentError(ValueError):
    """Schedule breakpoints do not fall on the time grid."""


class LinearSolveError(RuntimeError):
    pass


NONLINEARITY_KINDS = ("zero", "linear", "scaled_sine", "saturating")


@dataclass(frozen=True)
class Nonlinearity:
    """Lipschitz reaction term with ``f(0) = 0``.

    ============  =======================
    kind          f(u)
    ============  =======================
    zero          0
    linear        c u,  with ``|c| <= L``
    scaled_sine   L sin(u)
    saturating    L u / (1 + u^2)
    ============  =======================
    """

    kind: str = "zero"
    L: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; choose from {NONLINEARITY_KINDS}")
        if not (self.L >= 0 and math.isfinite(self.L)):
            raise ValueError(f"Lipschitz constant must be finite and >= 0, got {self.L}")
        if self.kind == "linear" and abs(self.c) > self.L:
            raise ValueError(f"linear slope |c|={abs(self.c)} exceeds L={self.L}")

    @classmethod
    def zero(cls, L: float = 0.0) -> "Nonlinearity":
        return cls("zero", L)

    @classmethod
    def linear(cls, c: float, L: float | None = None) -> "Nonlinearity":
        return cls("linear", abs(c) if L is None else L, c)

    @classmethod
    def scaled_sine(cls, L: float) -> "Nonlinearity":
        return cls("scaled_sine", L)

    @classmethod
    def saturating(cls, L: float) -> "Nonlinearity":
        return cls("saturating", L)

    @property
    def is_linear(self) -> bool:
        return self.kind in ("zero", "linear")

    @property
    def slope(self) -> float:
        """Slope ``c`` of a linear term (0 for ``zero``)."""
        if not self.is_linear:
            raise ValueError(f"{self.kind} is not linear")
        return self.c if self.kind == "linear" else 0.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.c * u
        if self.kind == "scaled_sine":
            return self.L * np.sin(u)
        return self.L * u / (1.0 + u * u)

    def apply(self, field: ScalarField) -> ScalarField:
        return ScalarField(field.grid, self(field.values))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "L": self.L, "c": self.c}


def lipschitz_selfcheck(f: Callable, samples, L: float | None = None) -> bool:
    """Check ``f(0) = 0`` and ``|f(a) - f(b)| <= L |a - b|`` over all sample pairs."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("need at least one sample")
    if L is None:
        L = f.L
    if float(np.asarray(f(np.zeros(1)))[0]) != 0.0:
        return False
    fs = np.asarray(f(samples), dtype=float)
    df = np.abs(fs[:, None] - fs[None, :])
    du = np.abs(samples[:, None] - samples[None, :])
    # a few ulps of absolute slack so rounding in f itself cannot flip the verdict
    slack = 4 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(fs))))
    return bool(np.all(df <= L * du * (1 + 1e-12) + slack))


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Piecewise-static reaction coefficient.

    ``steps[0]`` is active on ``[t_0, t_1]`` and ``steps[k]`` on
    ``(t_k, t_{k+1}]`` for ``k >= 1``. ``dts`` optionally records the time
    step each control step is meant to be integrated with.
    """

    breakpoints: tuple[float, ...]
    steps: tuple[ScalarField, ...]
    dts: tuple[float, ...] | None = None

    def __post_init__(self):
        bp = tuple(float(t) for t in self.breakpoints)
        steps = tuple(self.steps)
        if len(steps) < 1:
            raise ValueError("a schedule needs at least one step")
        if len(bp) != len(steps) + 1:
            raise ValueError(f"{len(steps)} steps need {len(steps) + 1} breakpoints, got {len(bp)}")
        if bp[0] < 0 or any(b <= a for a, b in zip(bp, bp[1:])):
            raise ValueError(f"breakpoints must be nonnegative and strictly increasing: {bp}")
        grid = steps[0].grid
        if any(s.grid != grid for s in steps):
            raise ValueError("all control steps must share one grid")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "steps", steps)
        if self.dts is not None:
            dts = tuple(float(d) for d in self.dts)
            if len(dts) != len(steps) or any(d <= 0 for d in dts):
                raise ValueError("dts must hold one positive time step per control step")
            object.__setattr__(self, "dts", dts)

    @classmethod
    def constant(cls, grid: Grid, value: float, T: float, dt: float | None = None) -> "ControlSchedule":
        return cls((0.0, T), (ScalarField.constant(grid, value),), None if dt is None else (dt,))

    @classmethod
    def static(cls, v: ScalarField, T: float, dt: float | None = None) -> "ControlSchedule":
        return cls((0.0, T), (v,), None if dt is None else (dt,))

    @property
    def grid(self) -> Grid:
        return self.steps[0].grid

    @property
    def m(self) -> int:
        return len(self.steps)

    @property
    def start(self) -> float:
        return self.breakpoints[0]

    @property
    def T(self) -> float:
        return self.breakpoints[-1]

    def sup_positive_part(self) -> float:
        """``max_k ||v_k^+||_inf``."""
        return max(linf_norm(s.positive_part()) for s in self.steps)

    def step_index(self, t: float) -> int:
        tol = 1e-12 * max(1.0, abs(self.T))
        if t < self.start - tol or t > self.T + tol:
            raise ValueError(f"t={t} outside the schedule horizon [{self.start}, {self.T}]")
        # number of interior breakpoints strictly below t
        return int(np.searchsorted(np.asarray(self.breakpoints[1:-1]), t, side="left"))

    def then(self, other: "ControlSchedule") -> "ControlSchedule":
        """Append a schedule that starts where this one ends."""
        if not math.isclose(other.start, self.T, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"cannot append a schedule starting at {other.start} to one ending at {self.T}")
        if (self.dts is None) != (other.dts is None):
            raise ValueError("either both or neither schedule must carry time steps")
        dts = None if self.dts is None else self.dts + other.dts
        return ControlSchedule(self.breakpoints + other.breakpoints[1:], self.steps + other.steps, dts)

    def shifted(self, offset: float) -> "ControlSchedule":
        return ControlSchedule(tuple(t + offset for t in self.breakpoints), self.steps, self.dts)


def control_at(schedule: ControlSchedule, t: float) -> ScalarField:
    """Control field active at time ``t`` (closed first interval, half-open others)."""
    return schedule.steps[schedule.step_index(t)]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    grid: Grid
    f: Nonlinearity
    u0: ScalarField
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.u0.grid != self.grid:
            raise ValueError("initial state is not on the problem grid")


def _step_dts(schedule: ControlSchedule, dt) -> tuple[float, ...]:
    if dt is None:
        if schedule.dts is None:
            raise ValueError("no time step given and the schedule carries none")
        return schedule.dts
    if np.isscalar(dt):
        return (float(dt),) * schedule.m
    dts = tuple(float(d) for d in dt)
    if len(dts) != schedule.m:
        raise ValueError(f"expected {schedule.m} time steps, got {len(dts)}")
    return dts


def stability_guard(dt, schedule: ControlSchedule, f: Nonlinearity) -> bool:
    """Require ``dt * max(L, ||v_k^+||_inf) <= 1/2`` on every control step.

    ``dt`` may be one number or one per control step. Raises
    :class:`StabilityError` naming the offending step.
    """
    for k, (dtk, vk) in enumerate(zip(_step_dts(schedule, dt), schedule.steps)):
        if not dtk > 0:
            raise ValueError(f"time step must be positive, got {dtk}")
        vplus = linf_norm(vk.positive_part())
        q = dtk * max(f.L, vplus)
        if q > 0.5:
            which = "L" if f.L >= vplus else "sup v+"
            raise StabilityError(
                f"step {k + 1}: dt*max(L, sup v+) = {q:.6g} > 0.5 "
                f"(dt={dtk:.6g}, L={f.L:.6g}, sup v+={vplus:.6g}; limited by {which})"
            )
    return True


class _ImplicitOperator:
    """``I - dt Lap_h - dt diag(v)``, factorised once for repeated solves."""

    def __init__(self, grid: Grid, v: np.ndarray, dt: float):
        self.grid = grid
        self.dt = dt
        self.v = np.asarray(v, dtype=float)
        if grid.dim == 1:
            h2 = grid.h[0] ** 2
            n = grid.n
            ab = np.empty((3, n))
            ab[0, :] = -dt / h2
            ab[2, :] = -dt / h2
            ab[1, :] = 1.0 + 2.0 * dt / h2 - dt * self.v
            self._ab = ab
        else:
            lap = _laplacian_matrix(grid)
            mat = sparse.identity(grid.size, format="csc") - dt * lap - dt * sparse.diags(self.v.ravel())
            self._lu = splinalg.splu(sparse.csc_matrix(mat))

    def apply(self, u: np.ndarray) -> np.ndarray:
        return u - self.dt * _laplacian_values(u, self.grid.h) - self.dt * self.v * u

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.grid.dim == 1:
            out = linalg.solve_banded((1, 1), self._ab, rhs, check_finite=False)
        else:
            out = self._lu.solve(rhs.ravel()).reshape(self.grid.shape)
        scale = np.linalg.norm(rhs)
        if scale > 0:
            res = np.linalg.norm(self.apply(out) - rhs) / scale
            if not res <= RESIDUAL_TOL:
                raise LinearSolveError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
        return out


def _laplacian_matrix(grid: Grid) -> sparse.csr_matrix:
    ops = []
    for ha in grid.h:
        n = grid.n
        ops.append(sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / ha**2)
    if grid.dim == 1:
        return sparse.csr_matrix(ops[0])
    eye = sparse.identity(grid.n)
    return sparse.csr_matrix(sparse.kron(ops[0], eye) + sparse.kron(eye, ops[1]))


def _reaction_step(u: np.ndarray, v: np.ndarray, dt: float, f: Nonlinearity) -> np.ndarray:
    # exact for linear f; exponential (Lawson) Euler otherwise
    if f.is_linear:
        return np.exp((v + f.slope) * dt) * u
    return np.exp(v * dt) * (u + dt * f(u))


def step_imex(state: ScalarField, v_field: ScalarField, dt: float, f: Nonlinearity,
              reaction_only: bool = False) -> ScalarField:
    """Advance one time step.

    With ``reaction_only=True`` the diffusion is switched off and each node
    integrates ``u' = v u + f(u)`` with the integrating factor ``exp(v dt)``;
    this diagnostic mode is exact for linear ``f``.
    """
    if state.grid != v_field.grid:
        raise ValueError("state and control live on different grids")
    stability_guard(dt, ControlSchedule.static(v_field, dt), f)
    u = state.values
    if reaction_only:
        return ScalarField(state.grid, _reaction_step(u, v_field.values, dt, f))
    op = _ImplicitOperator(state.grid, v_field.values, dt)
    return ScalarField(state.grid, op.solve(u + dt * f(u)))


@dataclass(frozen=True, eq=False)
class SolveTrace:
    """States of one simulation at every time level, with norm records.

    ``states[i]`` is the state at ``times[i]``; ``states[0]`` is ``u0``.
    """

    grid: Grid
    f: Nonlinearity
    schedule: ControlSchedule
    times: np.ndarray
    states: np.ndarray
    dts: tuple[float, ...]
    reaction_only: bool = False
    l2_u: np.ndarray = dc_field(init=False, repr=False)
    linf_u: np.ndarray = dc_field(init=False, repr=False)
    l2_f_u: np.ndarray = dc_field(init=False, repr=False)
    l2_lap_u: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.shape != (len(times),) + self.grid.shape:
            raise ValueError(f"states shape {states.shape} does not match times/grid")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        axes = tuple(range(1, states.ndim))
        vol = self.grid.cell_volume
        lap = np.stack([_laplacian_values(s, self.grid.h) for s in states])
        object.__setattr__(self, "l2_u", np.sqrt(vol * np.sum(states**2, axis=axes)))
        object.__setattr__(self, "linf_u", np.max(np.abs(states), axis=axes))
        object.__setattr__(self, "l2_f_u", np.sqrt(vol * np.sum(self.f(states) ** 2, axis=axes)))
        object.__setattr__(self, "l2_lap_u", np.sqrt(vol * np.sum(lap**2, axis=axes)))

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.states[i])

    @property
    def u0(self) -> ScalarField:
        return self.state(0)

    @property
    def final(self) -> ScalarField:
        return self.state(-1)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @cached_property
    def step_sizes(self) -> np.ndarray:
        return np.diff(self.times)

    def with_states(self, states) -> "SolveTrace":
        """Copy with replaced states (for fabricated falsification fixtures)."""
        return SolveTrace(self.grid, self.f, self.schedule, self.times, states, self.dts, self.reaction_only)

    def index_at(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"no trace level at t={t}")
        return i

    def to_csv(self, path: str | Path) -> None:
        """Write ``t, l2_u, linf_u, l2_f_u, l2_lap_u`` per time level."""
        rows = ["t,l2_u,linf_u,l2_f_u,l2_lap_u"]
        for row in zip(self.times, self.l2_u, self.linf_u, self.l2_f_u, self.l2_lap_u):
            rows.append(",".join(format(float(x), ".17g") for x in row))
        Path(path).write_text("\n".join(rows) + "\n")


def _steps_per_interval(schedule: ControlSchedule, dts: Sequence[float]) -> list[int]:
    counts = []
    for k, dtk in enumerate(dts):
        t_lo, t_hi = schedule.breakpoints[k], schedule.breakpoints[k + 1]
        ratio = (t_hi - t_lo) / dtk
        nk = int(round(ratio))
        if nk < 1 or abs(ratio - nk) > 1e-9 * max(1.0, ratio):
            raise AlignmentError(
                f"breakpoint t_{k + 1}={t_hi!r} is not aligned with dt={dtk!r} "
                f"starting from t_{k}={t_lo!r} ({ratio:.12g} steps)"
            )
        counts.append(nk)
    return counts


def solve(problem: ProblemSpec, schedule: ControlSchedule, dt=None,
          reaction_only: bool = False) -> SolveTrace:
    """Integrate the problem under a piecewise-static control.

    Parameters
    ----------
    problem : ProblemSpec
    schedule : ControlSchedule
        Must start at 0 and end at ``problem.T``.
    dt : float, sequence of float or None
        One time step for the whole run, one per control step, or ``None``
        to use ``schedule.dts``. Every breakpoint must be a whole number of
        steps from the previous one.
    reaction_only : bool
        Diagnostic mode without diffusion, see :func:`step_imex`.

    Returns
    -------
    SolveTrace
    """
    if schedule.grid != problem.grid:
        raise ValueError("schedule and problem live on different grids")
    if schedule.start != 0.0:
        raise ValueError(f"schedule must start at t=0, starts at {schedule.start}")
    if not math.isclose(schedule.T, problem.T, rel_tol=1e-12):
        raise ValueError(f"schedule horizon {schedule.T} differs from problem horizon {problem.T}")
    dts = _step_dts(schedule, dt)
    counts = _steps_per_interval(schedule, dts)
    stability_guard(dts, schedule, problem.f)

    f = problem.f
    grid = problem.grid
    total = sum(counts)
    states = np.empty((total + 1,) + grid.shape)
    times = np.empty(total + 1)
    states[0] = problem.u0.values
    times[0] = 0.0
    u = np.array(problem.u0.values)
    j = 0
    for k, (nk, dtk, vk) in enumerate(zip(counts, dts, schedule.steps)):
        t_lo = schedule.breakpoints[k]
        v = vk.values
        op = None if reaction_only else _ImplicitOperator(grid, v, dtk)
        for i in range(1, nk + 1):
            if reaction_only:
                u = _reaction_step(u, v, dtk, f)
            else:
                u = op.solve(u + dtk * f(u))
            j += 1
            states[j] = u
            times[j] = t_lo + i * dtk
        times[j] = schedule.breakpoints[k + 1]
    return SolveTrace(grid, f, schedule, times, states, dts, reaction_only)
