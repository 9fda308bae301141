"""
Heat flow with a constant reaction rate, checked against the sine basis
=====================================================================

The finite-difference stepper and the modal solution should agree to
O(dt + h^2). Run with ``python3 demos/01_heat_and_oracle.py``.
"""

# %%
import math

import numpy as np

from mulcontrol import ControlSchedule, Nonlinearity, ProblemSpec, ScalarField, l2_norm, make_grid, solve
from mulcontrol import spectral

# %% one run: sin(pi x) decays like exp(-pi^2 t)
grid = make_grid(1, 199, 1.0)
u0 = ScalarField.from_function(grid, lambda x: np.sin(np.pi * x))
trace = solve(ProblemSpec(grid, Nonlinearity.zero(), u0, 0.1), ControlSchedule.constant(grid, 0.0, 0.1), 1e-4)
print(f"||u(0.1)|| = {trace.l2_u[-1]:.6f}   exact {math.exp(-math.pi**2 / 10) * math.sqrt(0.5):.6f}")


# %% discrepancy against the modal oracle for a less trivial initial state
def discrepancy(n, dt, v=-2.0, T=0.1):
    g = make_grid(1, n, 1.0)
    u = ScalarField.from_function(g, lambda x: 4 * x * (1 - x) * (1 + np.cos(3 * np.pi * x)))
    tr = solve(ProblemSpec(g, Nonlinearity.zero(), u, T), ControlSchedule.constant(g, v, T), dt)
    return l2_norm(tr.final - spectral.oracle_state(u, v, T))


def orders(errs):
    d = np.diff(errs)
    return [math.log2(d[i] / d[i + 1]) for i in range(len(d) - 1)]


dts = [4e-4, 2e-4, 1e-4, 5e-5]
e_dt = [discrepancy(199, dt) for dt in dts]
ns = [24, 49, 99, 199]
e_h = [discrepancy(n, 1e-4) for n in ns]

print("\n   dt        discrepancy")
for dt, e in zip(dts, e_dt):
    print(f"{dt:8.1e}   {e:.3e}")
print("orders in dt:", ", ".join(f"{p:.3f}" for p in orders(e_dt)))

print("\n   n     discrepancy")
for n, e in zip(ns, e_h):
    print(f"{n:5d}   {e:.3e}")
print("orders in h: ", ", ".join(f"{p:.3f}" for p in orders(e_h)))

# %% the nonlinear part: Duhamel term and its a-priori size
f = Nonlinearity.scaled_sine(0.5)
tr = solve(ProblemSpec(grid, f, 4.0 * u0, 0.1), ControlSchedule.constant(grid, 1.0, 0.1), 1e-4)
F = spectral.f_term(tr, 1.0, 0.1)
print(f"\n||F|| = {l2_norm(F):.4e} <= bound {spectral.f_term_bound(tr, math.exp(0.1), 0.1):.4e}")
