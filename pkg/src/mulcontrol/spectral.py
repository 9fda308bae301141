"""Dirichlet sine eigenbasis on an interval ``(0, ell)``.

Gives exact modal evolution for spatially constant reaction coefficients and
the Duhamel term generated by the nonlinearity along a computed trajectory.
Used as an independent check on the finite-difference stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import SolveTrace
from .field_core import Grid, ScalarField, l2_norm, sine_mode

__all__ = [
    "ModalCoeffs",
    "eigenvalue",
    "eigenpair",
    "project",
    "reconstruct",
    "evolve_const_v",
    "oracle_state",
    "f_term",
    "f_term_bound",
    "write_modal_csv",
    "parseval_gap",
]


@dataclass(frozen=True, eq=False)
class ModalCoeffs:
    """Coefficients ``c_k`` of modes ``k = 1..K`` on an interval of length ``length``."""

    coeffs: np.ndarray
    length: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size < 1 or not np.all(np.isfinite(c)):
            raise ValueError("need at least one finite coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.size

    @property
    def lambdas(self) -> np.ndarray:
        k = np.arange(1, self.K + 1)
        return (k * np.pi / self.length) ** 2


def _require_1d(grid: Grid):
    if grid.dim != 1:
        raise ValueError("the sine-basis oracle is one-dimensional")


def eigenvalue(k: int, length: float = 1.0) -> float:
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    return (k * math.pi / length) ** 2


def eigenpair(grid: Grid, k: int) -> tuple[float, ScalarField]:
    """``(lambda_k, phi_k)`` with ``phi_k = sqrt(2/ell) sin(k pi x / ell)``."""
    _require_1d(grid)
    return eigenvalue(k, grid.lengths[0]), sine_mode(grid, k)


def _basis(grid: Grid, K: int) -> np.ndarray:
    x = grid.coords(0)
    ell = grid.lengths[0]
    k = np.arange(1, K + 1)[:, None]
    return math.sqrt(2.0 / ell) * np.sin(k * np.pi * x[None, :] / ell)


def project(field: ScalarField, K: int | None = None) -> ModalCoeffs:
    """``c_k = <field, phi_k>`` for ``k = 1..K`` (default ``K = n``)."""
    grid = field.grid
    _require_1d(grid)
    K = grid.n if K is None else int(K)
    if not 1 <= K <= grid.n:
        raise ValueError(f"K must lie in [1, n={grid.n}], got {K}")
    c = grid.cell_volume * (_basis(grid, K) @ field.values)
    return ModalCoeffs(c, grid.lengths[0])


def reconstruct(coeffs: ModalCoeffs, grid: Grid) -> ScalarField:
    _require_1d(grid)
    if not math.isclose(coeffs.length, grid.lengths[0]):
        raise ValueError("coefficients belong to a different interval")
    if coeffs.K > grid.n:
        raise ValueError(f"{coeffs.K} modes cannot be represented on {grid.n} nodes")
    return ScalarField(grid, coeffs.coeffs @ _basis(grid, coeffs.K))


def evolve_const_v(coeffs: ModalCoeffs, v1: float, t: float) -> ModalCoeffs:
    """``c_k -> exp((v1 - lambda_k) t) c_k``."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return ModalCoeffs(np.exp((v1 - coeffs.lambdas) * t) * coeffs.coeffs, coeffs.length)


def oracle_state(u0: ScalarField, v1: float, t: float, K: int | None = None) -> ScalarField:
    """Exact linear evolution (``f = 0``, constant ``v1``) of ``u0`` to time ``t``."""
    return reconstruct(evolve_const_v(project(u0, K), v1, t), u0.grid)


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _check_horizon(trace: SolveTrace, T1: float):
    if trace.times[0] != 0.0 or not math.isclose(trace.T, T1, rel_tol=1e-9):
        raise ValueError(f"trace covers [{trace.times[0]}, {trace.T}], expected [0, {T1}]")


def f_term(trace: SolveTrace, v1: float, T1: float, K: int | None = None) -> ScalarField:
    """Duhamel contribution of the nonlinearity along a trace.

    ``F(x) = sum_k [int_0^T1 exp((v1 - lambda_k)(T1 - t)) <f(u(t)), phi_k> dt] phi_k(x)``
    with the time integral done by the trapezoid rule over the trace levels.
    """
    grid = trace.grid
    _require_1d(grid)
    _check_horizon(trace, T1)
    K = grid.n if K is None else int(K)
    if not 1 <= K <= grid.n:
        raise ValueError(f"K must lie in [1, n={grid.n}], got {K}")
    basis = _basis(grid, K)
    g = grid.cell_volume * (trace.f(trace.states) @ basis.T)  # (levels, K)
    lam = ModalCoeffs(np.ones(K), grid.lengths[0]).lambdas
    w = _trapezoid_weights(trace.times)
    kernel = np.exp(np.outer(T1 - trace.times, v1 - lam))
    coeffs = np.sum((w[:, None] * kernel) * g, axis=0)
    return ScalarField(grid, coeffs @ basis)


def _constant_rate(trace: SolveTrace) -> float:
    vals = np.concatenate([s.values.ravel() for s in trace.schedule.steps])
    if np.ptp(vals) > 1e-12 * max(1.0, np.max(np.abs(vals))):
        raise ValueError("trace was not produced by a constant reaction coefficient")
    return float(vals[0])


def f_term_bound(trace: SolveTrace, M_eps: float, T1: float, v1: float | None = None) -> float:
    """``sqrt(M^2 T1 int_0^T1 ||f(u(t))||^2 dt)``, the Parseval bound on ``||F||``.

    ``v1`` is the rate used in the kernel of ``F`` and must satisfy
    ``exp(v1 T1) = M``. By default it is read from the trace's (constant)
    schedule.
    """
    _check_horizon(trace, T1)
    v1 = _constant_rate(trace) if v1 is None else v1
    if not math.isclose(math.exp(v1 * T1), M_eps, rel_tol=1e-9):
        raise ValueError(f"exp(v1*T1) = {math.exp(v1 * T1):.12g} does not match M = {M_eps:.12g}")
    integral = float(np.sum(_trapezoid_weights(trace.times) * trace.l2_f_u**2))
    return math.sqrt(M_eps**2 * T1 * integral)


def write_modal_csv(path: str | Path, coeffs: ModalCoeffs, extra: dict[str, ModalCoeffs] | None = None) -> None:
    """Write ``k, lambda_k, c_k`` (plus optional further coefficient columns)."""
    extra = extra or {}
    header = ["k", "lambda_k", "c_k", *extra]
    rows = [",".join(header)]
    for i in range(coeffs.K):
        vals = [coeffs.lambdas[i], coeffs.coeffs[i], *(e.coeffs[i] for e in extra.values())]
        rows.append(",".join([str(i + 1)] + [format(float(v), ".17g") for v in vals]))
    Path(path).write_text("\n".join(rows) + "\n")


def parseval_gap(field: ScalarField, coeffs: ModalCoeffs) -> float:
    """``||field||^2 - sum c_k^2`` (nonnegative by Bessel's inequality)."""
    return l2_norm(field) ** 2 - float(np.sum(coeffs.coeffs**2))
