"""
Steering with one static coefficient
====================================

When ``0 < u*/u0 <= 1`` the coefficient ``v = ln(u*/u0) / T`` moves ``u0``
towards ``u*``; the error shrinks with ``T`` like ``sqrt(T)`` at worst.
"""

# %%
import math

import numpy as np

from mulcontrol import ControlSchedule, Nonlinearity, ProblemSpec, ScalarField, l2_norm, make_grid, solve
from mulcontrol.estimates import static_error_bound
from mulcontrol.synthesis import static_log_ratio_control

grid = make_grid(1, 199, 1.0)
u0 = ScalarField.from_function(grid, lambda x: np.sin(np.pi * x))
ustar = 0.5 * u0

# %% error against the bound for shrinking horizons, linear and nonlinear
for f in (Nonlinearity.zero(), Nonlinearity.scaled_sine(0.1)):
    print(f"\nf = {f.kind}, L = {f.L}")
    print("    T      error     bound    exact(f=0)")
    for T in (0.1, 0.05, 0.02, 0.01):
        v = static_log_ratio_control(u0, ustar, T)
        tr = solve(ProblemSpec(grid, f, u0, T), ControlSchedule.static(v, T), 1e-5)
        err = l2_norm(tr.final - ustar)
        exact = 0.5 * (1 - math.exp(-math.pi**2 * T)) * math.sqrt(0.5)
        print(f"{T:6.2f}  {err:8.5f}  {static_error_bound(u0, v * T, f.L, T):8.5f}  {exact:8.5f}")

# %% without diffusion the target is hit exactly
v = static_log_ratio_control(u0, ustar, 0.01)
tr = solve(ProblemSpec(grid, Nonlinearity.zero(), u0, 0.01), ControlSchedule.static(v, 0.01), 1e-3,
           reaction_only=True)
print("\nreaction only: max|u(T) - u*| =", np.max(np.abs(tr.final.values - ustar.values)))
