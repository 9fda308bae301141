"""
Energy estimates on random cases
================================

Ten random cases with a smooth nonpositive coefficient, nonnegative sine
mixes and a Lipschitz nonlinearity. Every bound must hold, and a trace
inflated by hand must be caught.
"""

# %%
import numpy as np

from mulcontrol import ControlSchedule, ProblemSpec, solve
from mulcontrol.estimates import verify_growth_bound
from mulcontrol.suite import random_suite

suite = random_suite(seed=0, cases=10)
print(f"{'case':>4}  {'f':>12}  {'L':>5}  {'T':>6}  name              lhs        rhs       pass")
for i, (case, reports) in enumerate(suite):
    for r in reports:
        print(f"{i:4d}  {case.f.kind:>12}  {case.f.L:5.2f}  {case.T:6.3f}  {r.name:<16} {r.lhs:9.3e}  {r.rhs:9.3e}  {r.passed}")

# %% falsification: scale every stored state after t = 0 by 10
case, _ = suite[0]
sched = ControlSchedule.static(case.v, case.T)
tr = solve(ProblemSpec(case.v.grid, case.f, case.u0_a, case.T), sched, case.T / case.nsteps)
fake = tr.with_states(np.concatenate([tr.states[:1], 10 * tr.states[1:]]))
print("\ngenuine:", verify_growth_bound(tr, case.f.L).passed, "  inflated:", verify_growth_bound(fake, case.f.L).passed)
