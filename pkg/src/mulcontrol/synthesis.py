"""Construction of piecewise-static multiplicative controls.

Two constructions are provided:

* :func:`static_log_ratio_control` -- for smooth data with ``0 < u*/u0 <= 1``
  the static coefficient ``ln(u*/u0) / T`` steers ``u0`` close to ``u*`` in
  short time.
* :func:`steer` -- for arbitrary nonnegative data: smooth positive
  approximants, amplification by a constant rate, a static shrinking step
  towards a cut-off target, then repeated static re-synthesis until ``T``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import spectral
from .dynamics import ControlSchedule, Nonlinearity, ProblemSpec, SolveTrace, solve
from .estimates import BudgetLedger, budget_ledger
from .field_core import ScalarField, boundary_distance, cutoff, l2_norm, linf_norm, mollify, sine_mode

__all__ = [
    "SynthesisError",
    "PreconditionError",
    "ApproximantPair",
    "SynthesisPlan",
    "SynthesisReport",
    "check_ratio_condition",
    "static_log_ratio_control",
    "build_approximants",
    "choose_eta",
    "cutoff_targets",
    "phase1_control",
    "calibrated_rate",
    "find_T1",
    "two_phase_schedule",
    "refine_iterate",
    "steer",
]

RATIO_TOL = 1e-12


class SynthesisError(RuntimeError):
    """A synthesis stage could not meet its tolerance."""


class PreconditionError(ValueError):
    """Input data outside the class the construction applies to."""


def _ratio(num: ScalarField, den: ScalarField) -> np.ndarray:
    if num.grid != den.grid:
        raise ValueError("fields live on different grids")
    if np.any(den.values == 0):
        raise PreconditionError("initial state vanishes at an interior node")
    return num.values / den.values


def check_ratio_condition(u0: ScalarField, ustar: ScalarField) -> tuple[bool, float]:
    """Return ``(ok, nu)`` where ``ok`` means ``0 < nu <= u*/u0 <= 1`` at every node."""
    r = _ratio(ustar, u0)
    nu = float(r.min())
    return bool(nu > 0 and r.max() <= 1 + RATIO_TOL), nu


def static_log_ratio_control(u0: ScalarField, ustar: ScalarField, T: float) -> ScalarField:
    """``v = ln(u*/u0) / T``; nonpositive under the ratio condition."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    ok, nu = check_ratio_condition(u0, ustar)
    if not ok:
        r = _ratio(ustar, u0)
        raise PreconditionError(
            f"ratio u*/u0 must lie in (0, 1]; observed range [{r.min():.6g}, {r.max():.6g}]"
        )
    v = np.minimum(np.log(_ratio(ustar, u0)), 0.0) / T
    return ScalarField(u0.grid, v)


@dataclass(frozen=True, eq=False)
class ApproximantPair:
    u0_eps: ScalarField
    ustar_eps: ScalarField
    M_eps: float
    sigma: float
    delta_floor: float
    iterations: int = 1

    @property
    def ratio(self) -> np.ndarray:
        return self.ustar_eps.values / self.u0_eps.values


def _check_nonneg_pair(u0: ScalarField, ustar: ScalarField):
    if u0.grid != ustar.grid:
        raise ValueError("initial and target states live on different grids")
    if u0.min() < 0 or ustar.min() < 0:
        raise PreconditionError("initial and target states must be nonnegative")
    if not np.any(u0.values > 0):
        raise PreconditionError("the zero initial state cannot be steered anywhere")


def build_approximants(u0: ScalarField, ustar: ScalarField, eps: float, L: float,
                       sigma: float | None = None, delta_floor: float | None = None,
                       max_iter: int = 40) -> ApproximantPair:
    """Smooth, strictly positive approximants of a nonnegative pair.

    Both states are mollified with width ``sigma`` and lifted by
    ``delta_floor * phi_1``; ``M`` is ``max(1.05, 1.01 max(u*_eps/u0_eps))``.
    ``sigma`` and ``delta_floor`` are halved until::

        ||u*_eps - u*|| < eps/4,    ||u0_eps - u0|| < eps / (16 e^L M)
    """
    _check_nonneg_pair(u0, ustar)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grid = u0.grid
    phi1 = sine_mode(grid, 1)
    sigma = 0.05 * min(grid.lengths) if sigma is None else sigma
    delta = eps / 4 if delta_floor is None else delta_floor
    for it in range(1, max_iter + 1):
        u0_eps = mollify(u0, sigma) + delta * phi1
        ustar_eps = mollify(ustar, sigma) + delta * phi1
        M = max(1.05, 1.01 * float(np.max(ustar_eps.values / u0_eps.values)))
        err_target = l2_norm(ustar_eps - ustar)
        err_init = l2_norm(u0_eps - u0)
        if err_target < eps / 4 and err_init < eps / (16 * math.exp(L) * M):
            return ApproximantPair(u0_eps, ustar_eps, M, sigma, delta, it)
        sigma *= 0.5
        delta *= 0.5
    raise SynthesisError(
        f"approximation budgets not met after {max_iter} halvings "
        f"(last errors {err_target:.3e}, {err_init:.3e}, M={M:.4g})"
    )


def choose_eta(ustar_eps: ScalarField, eps: float, max_halvings: int = 60) -> float:
    """Largest ``eta = eta_max / 2^j`` with ``||(1 - chi_eta) u*_eps|| < eps/4``."""
    eta = min(ustar_eps.grid.lengths) / 4
    for _ in range(max_halvings):
        leak = l2_norm((1.0 - cutoff(ustar_eps.grid, eta)) * ustar_eps)
        if leak < eps / 4:
            return eta
        eta *= 0.5
    return eta


def _strip_limited_eta(pair: ApproximantPair, eta: float, eps: float, max_halvings: int = 60) -> float:
    """Shrink ``eta`` until ``M u0_eps`` carries less than ``eps/8`` within
    distance ``eta`` of the boundary.

    The shrinking control vanishes there, so whatever mass the amplified
    state has in that strip is not removed by the static step.
    """
    dist = boundary_distance(pair.u0_eps.grid).values
    amplified = pair.M_eps * pair.u0_eps.values
    vol = pair.u0_eps.grid.cell_volume
    for _ in range(max_halvings):
        if math.sqrt(vol * np.sum(amplified[dist < eta] ** 2)) < eps / 8:
            break
        eta *= 0.5
    return eta


def cutoff_targets(pair: ApproximantPair, eta: float) -> tuple[ScalarField, ScalarField]:
    """Cut-off target ``chi u*_eps`` and nonpositive profile ``chi ln(u*_eps/(M u0_eps))``."""
    scaled = pair.ratio / pair.M_eps
    if np.any(scaled > 1 + RATIO_TOL):
        raise SynthesisError(f"u*_eps/(M u0_eps) reaches {scaled.max():.6g} > 1; approximant pair is broken")
    chi = cutoff(pair.u0_eps.grid, eta)
    u_eta_star = chi * pair.ustar_eps
    v0_eta = chi * np.minimum(np.log(scaled), 0.0)
    return u_eta_star, v0_eta


def phase1_control(M_eps: float, T1: float) -> float:
    """Constant rate ``ln(M) / T1`` so that ``exp(v1 T1) = M``."""
    if not M_eps > 1:
        raise ValueError(f"amplification factor must exceed 1, got {M_eps}")
    if not T1 > 0:
        raise ValueError(f"T1 must be positive, got {T1}")
    return math.log(M_eps) / T1


def _substeps(duration: float, rate: float, minimum: int) -> int:
    return max(minimum, math.ceil(2.0 * duration * rate))


def calibrated_rate(log_factor, duration: float, nsteps: int):
    """Rate whose backward-Euler factor over ``nsteps`` steps is ``exp(log_factor)``.

    Solves ``(1 - v dt)^(-nsteps) = exp(log_factor)`` for ``v``, with
    ``dt = duration / nsteps``. It differs from ``log_factor / duration`` by
    O(dt), but makes the reaction part of each step exact, which matters
    when a state is amplified or damped by several orders of magnitude.
    Works elementwise on arrays.
    """
    dt = duration / nsteps
    return -np.expm1(-np.asarray(log_factor, dtype=float) / nsteps) / dt


def _phase1_schedule(grid, M_eps: float, T1: float, L: float, min_steps: int = 64,
                     calibrate: bool = False) -> ControlSchedule:
    v1 = phase1_control(M_eps, T1)
    nsteps = _substeps(T1, max(v1, L), min_steps)
    rate = float(calibrated_rate(math.log(M_eps), T1, nsteps)) if calibrate else v1
    return ControlSchedule.constant(grid, rate, T1, T1 / nsteps)


def _semigroup_error(u0_eps: ScalarField, M_eps: float, T1: float, schedule: ControlSchedule) -> float:
    """``||exp(v1 T1) S(T1) u0_eps - M u0_eps||`` with ``S`` the heat semigroup."""
    v1 = phase1_control(M_eps, T1)
    if u0_eps.grid.dim == 1:
        lin = spectral.oracle_state(u0_eps, v1, T1)
    else:
        lin = solve(ProblemSpec(u0_eps.grid, Nonlinearity.zero(), u0_eps, T1), schedule).final
    return l2_norm(lin - M_eps * u0_eps)


def _phase1_trial(problem: ProblemSpec, pair: ApproximantPair, T1: float, strict: bool,
                  calibrate: bool = False) -> dict:
    f = problem.f
    sched = _phase1_schedule(problem.grid, pair.M_eps, T1, f.L, calibrate=calibrate)
    target = pair.M_eps * pair.u0_eps
    tr = solve(ProblemSpec(problem.grid, f, problem.u0, T1), sched)
    out = {"T1": T1, "phase1": l2_norm(tr.final - target), "schedule": sched}
    if strict:
        tr_eps = solve(ProblemSpec(problem.grid, f, pair.u0_eps, T1), sched)
        out["phase1_from_approx"] = l2_norm(tr_eps.final - target)
        out["semigroup"] = _semigroup_error(pair.u0_eps, pair.M_eps, T1, sched)
        out["trace_eps"] = tr_eps
    return out


def _phase1_ok(trial: dict, eps: float, strict: bool) -> bool:
    ok = trial["phase1"] <= eps / 8
    if strict:
        ok = ok and trial["phase1_from_approx"] < eps / 16 and trial["semigroup"] < eps / 32
    return ok


def find_T1(problem: ProblemSpec, pair: ApproximantPair, eps: float, strict: bool = False,
            T1_start: float | None = None, max_halvings: int = 40, calibrate: bool = False) -> float:
    """Halve ``T1`` from ``min(0.01, T/4)`` until the amplification step lands
    within ``eps/8`` of ``M u0_eps``.

    With ``strict=True`` the run from ``u0_eps`` must also be within
    ``eps/16`` and its linear part within ``eps/32``. ``calibrate`` uses
    :func:`calibrated_rate` for the amplification rate.
    """
    T1 = min(0.01, problem.T / 4) if T1_start is None else T1_start
    best = math.inf
    for _ in range(max_halvings):
        trial = _phase1_trial(problem, pair, T1, strict, calibrate)
        best = min(best, trial["phase1"])
        if _phase1_ok(trial, eps, strict):
            return T1
        T1 *= 0.5
    raise SynthesisError(
        f"no T1 down to {2 * T1:.3e} reaches the amplification budget; smallest error {best:.4e}"
    )


@dataclass(frozen=True, eq=False)
class SynthesisPlan:
    pair: ApproximantPair
    eta: float
    u_eta_star: ScalarField
    v0_eta: ScalarField
    v1: float
    T1: float
    dt1: float
    T2: float = math.nan
    n_iter: int = 0
    budgets: BudgetLedger | None = None

    @property
    def M_eps(self) -> float:
        return self.pair.M_eps

    def to_dict(self) -> dict:
        return {
            "M_eps": self.M_eps,
            "sigma": self.pair.sigma,
            "delta_floor": self.pair.delta_floor,
            "approximant_iterations": self.pair.iterations,
            "eta": self.eta,
            "v1": self.v1,
            "T1": self.T1,
            "dt1": self.dt1,
            "T2": self.T2,
            "n_iter": self.n_iter,
            "v0_eta_min": self.v0_eta.min(),
            "v0_eta_max": self.v0_eta.max(),
        }


def two_phase_schedule(plan: SynthesisPlan, T: float, L: float = 0.0,
                       min_substeps: int = 64, calibrate: bool = False) -> ControlSchedule:
    """Constant ``v1`` on ``[0, T1]``, then ``v0_eta / (T - T1)`` on ``(T1, T]``.

    With ``calibrate=True`` both rates are replaced by
    :func:`calibrated_rate` for their time steps.
    """
    if not T > plan.T1:
        raise ValueError(f"horizon {T} must exceed T1 = {plan.T1}")
    grid = plan.u_eta_star.grid
    T2 = T - plan.T1
    v2 = plan.v0_eta / T2
    s2 = _substeps(T2, max(L, linf_norm(v2)), min_substeps)
    v1 = plan.v1
    if calibrate:
        v1 = float(calibrated_rate(math.log(plan.M_eps), plan.T1, round(plan.T1 / plan.dt1)))
        v2 = ScalarField(grid, calibrated_rate(plan.v0_eta.values, T2, s2))
    return ControlSchedule(
        (0.0, plan.T1, T),
        (ScalarField.constant(grid, v1), v2),
        (plan.dt1, T2 / s2),
    )


def refine_iterate(current: ScalarField, u_eta_star: ScalarField, t_start: float, t_end: float,
                   n: int, f: Nonlinearity | None = None, clamp: bool = True,
                   min_substeps: int = 16, calibrate: bool = False) -> ControlSchedule:
    """Re-synthesise a static control on each of ``n`` equal subintervals.

    On subinterval ``k`` the control is
    ``ln((u*_eta + floor) / (u_k + floor)) / dt_k`` where ``u_k`` is the
    simulated state entering the subinterval and
    ``floor = 1e-12 max|u*_eta|``. With ``clamp=True`` positive logarithms
    are cut to zero so every step is nonpositive; with ``clamp=False`` the
    step may also amplify, which is what holds a state near a target against
    diffusion over long horizons. ``calibrate`` swaps each rate for
    :func:`calibrated_rate` on its substeps.

    Returns a schedule on ``[t_start, t_end]`` carrying its time steps.
    """
    if n < 1:
        raise ValueError(f"need at least one subinterval, got {n}")
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    f = Nonlinearity.zero() if f is None else f
    grid = current.grid
    width = (t_end - t_start) / n
    floor = 1e-12 * linf_norm(u_eta_star)
    target = u_eta_star.values + floor
    state = current
    bps, steps, dts = [t_start], [], []
    for k in range(n):
        logr = np.log(target / np.maximum(state.values + floor, np.finfo(float).tiny))
        if clamp:
            logr = np.minimum(logr, 0.0)
        v = ScalarField(grid, logr / width)
        s = _substeps(width, max(f.L, linf_norm(v.positive_part())), min_substeps)
        if calibrate:
            v = ScalarField(grid, calibrated_rate(logr, width, s))
        sub = ControlSchedule.static(v, width, width / s)
        state = solve(ProblemSpec(grid, f, state, width), sub).final
        bps.append(t_start + (k + 1) * width if k < n - 1 else t_end)
        steps.append(v)
        dts.append(width / s)
    return ControlSchedule(tuple(bps), tuple(steps), tuple(dts))


@dataclass(frozen=True, eq=False)
class SynthesisReport:
    plan: SynthesisPlan
    phase1_error: float
    final_error: float
    eps: float
    ledger: BudgetLedger
    diagnostics: dict = dc_field(default_factory=dict)
    runtime_s: float = math.nan
    trace: SolveTrace | None = dc_field(default=None, repr=False)

    @property
    def success(self) -> bool:
        return bool(self.final_error < self.eps)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "success": self.success,
            "final_error": self.final_error,
            "phase1_error": self.phase1_error,
            "plan": self.plan.to_dict(),
            "ledger": self.ledger.to_dict(),
            "diagnostics": self.diagnostics,
        }


def _phase2_duration(problem: ProblemSpec, plan: SynthesisPlan, eps: float, max_halvings: int = 40):
    """Largest halving of ``min(T - T1, 1/(4L))`` for which the static step
    from ``M u0_eps`` lands within ``eps/4`` of the cut-off target."""
    grid, f = problem.grid, problem.f
    T2 = problem.T - plan.T1
    if f.L > 0:
        T2 = min(T2, 1.0 / (4.0 * f.L))
    start = plan.M_eps * plan.pair.u0_eps
    err = math.inf
    for _ in range(max_halvings):
        sched = two_phase_schedule(plan, plan.T1 + T2, f.L, calibrate=True)
        span = sched.breakpoints[2] - sched.breakpoints[1]
        second = ControlSchedule.static(sched.steps[1], span, sched.dts[1])
        err = l2_norm(solve(ProblemSpec(grid, f, start, span), second).final - plan.u_eta_star)
        if err < eps / 4:
            return T2, err
        T2 *= 0.5
    raise SynthesisError(f"static shrinking step never reached eps/4; last error {err:.4e}")


def _hold_subintervals(problem: ProblemSpec, u_eta_star: ScalarField, remaining: float, eps: float,
                       max_doublings: int = 20) -> int:
    """Smallest power of two ``n`` such that one re-synthesis step of length
    ``remaining / n`` started on the target stays within ``eps/8`` of it."""
    n = 1
    for _ in range(max_doublings):
        sched = refine_iterate(u_eta_star, u_eta_star, 0.0, remaining / n, 1, problem.f, clamp=False,
                               calibrate=True)
        drift = l2_norm(solve(ProblemSpec(problem.grid, problem.f, u_eta_star, sched.T), sched).final - u_eta_star)
        if drift <= eps / 8:
            return n
        n *= 2
    return n


def steer(problem: ProblemSpec, ustar: ScalarField, eps: float,
          clamp_refine: bool = False) -> tuple[ControlSchedule, SynthesisReport]:
    """Piecewise-static control steering ``problem.u0`` to within ``eps`` of ``ustar``.

    Stages: approximants, cutoff level, amplification time ``T1``,
    static shrinking step of length ``T2`` and, if time remains, ``n_iter``
    re-synthesis steps up to ``T``. The returned report carries the final
    error recomputed from a full simulation of the returned schedule, the
    stage budgets and the trace.
    """
    t_start = time.perf_counter()
    grid, f, T = problem.grid, problem.f, problem.T
    u0 = problem.u0
    _check_nonneg_pair(u0, ustar)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    L = f.L

    pair = build_approximants(u0, ustar, eps, L)
    eta = _strip_limited_eta(pair, choose_eta(pair.ustar_eps, eps), eps)
    u_eta_star, v0_eta = cutoff_targets(pair, eta)
    T1 = find_T1(problem, pair, eps, strict=True, calibrate=True)
    trial = _phase1_trial(problem, pair, T1, strict=True, calibrate=True)
    v1 = phase1_control(pair.M_eps, T1)
    plan = SynthesisPlan(pair, eta, u_eta_star, v0_eta, v1, T1, trial["schedule"].dts[0])

    T2, phase2_err = _phase2_duration(problem, plan, eps)
    schedule = two_phase_schedule(plan, T1 + T2, L, calibrate=True)
    remaining = T - T1 - T2
    n_iter = 0
    if remaining > 1e-12 * T:
        n_iter = _hold_subintervals(problem, u_eta_star, remaining, eps)
        mid = solve(ProblemSpec(grid, f, u0, schedule.T), schedule).final
        hold = refine_iterate(mid, u_eta_star, schedule.T, T, n_iter, f, clamp=clamp_refine,
                              calibrate=True)
        schedule = schedule.then(hold)
    else:
        schedule = ControlSchedule((0.0, T1, T), schedule.steps, schedule.dts)

    trace = solve(problem, schedule)
    final_error = l2_norm(trace.final - ustar)
    delta0 = l2_norm(trace.state(trace.index_at(T1)) - pair.M_eps * pair.u0_eps)

    stages = {
        "approx_target": l2_norm(pair.ustar_eps - ustar),
        "approx_initial": l2_norm(pair.u0_eps - u0),
        "cutoff": l2_norm(u_eta_star - pair.ustar_eps),
        "semigroup": trial["semigroup"],
        "phase1_from_approx": trial["phase1_from_approx"],
        "phase1": trial["phase1"],
        "delta0": delta0,
        "phase2": phase2_err,
        "final": final_error,
        "T1": T1,
    }
    ledger = budget_ledger(eps, L, pair.M_eps, stages)
    diagnostics = {
        "m": schedule.m,
        "time_steps": len(trace) - 1,
        "final_l2_u": float(trace.l2_u[-1]),
        "min_state": float(trace.states.min()),
    }
    if grid.dim == 1:
        tr_eps = trial["trace_eps"]
        diagnostics["F_eps_norm"] = l2_norm(spectral.f_term(tr_eps, v1, T1))
        diagnostics["F_eps_bound"] = spectral.f_term_bound(tr_eps, pair.M_eps, T1, v1)
    plan = SynthesisPlan(pair, eta, u_eta_star, v0_eta, v1, T1, plan.dt1, T2, n_iter, ledger)
    report = SynthesisReport(plan, delta0, final_error, eps, ledger, diagnostics,
                             time.perf_counter() - t_start, trace)
    return schedule, report
