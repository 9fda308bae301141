import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mulcontrol.dynamics import ControlSchedule, Nonlinearity, ProblemSpec, solve
from mulcontrol.estimates import (BoundReport, budget_ledger, c_constant, closure_check, static_error_bound,
                                  verify_contraction, verify_nonneg, verify_energy_bounds, verify_growth_bound)
from mulcontrol.field_core import ScalarField, h10_norm, make_grid
from mulcontrol.suite import random_suite


def _run(grid, f, u0, v, T, dt, reaction_only=False):
    return solve(ProblemSpec(grid, f, u0, T), ControlSchedule.static(v, T), dt, reaction_only=reaction_only)


def test_c_constant():
    g = make_grid(1, 31, 1.0)
    v = ScalarField.constant(g, -3.0)
    assert c_constant(0.0, 0.7, v) == pytest.approx(1.0)
    assert c_constant(0.1, 0.25, v) == pytest.approx(math.sqrt(1.005))
    bumpy = ScalarField.from_function(g, lambda x: -x**2)
    assert c_constant(0.1, 0.25, 2 * bumpy) > c_constant(0.1, 0.25, bumpy)


def test_energy_bounds_decay_case(grid199, sine199):
    tr = _run(grid199, Nonlinearity.zero(), sine199, ScalarField.zeros(grid199), 0.1, 1e-3)
    a, b, c = verify_energy_bounds(tr, 0.0, ScalarField.zeros(grid199))
    assert a.lhs == pytest.approx(math.sqrt(0.5)) and a.rhs == pytest.approx(1.0)
    assert a.passed and b.passed and c.passed


def test_energy_bounds_scaled_sine(grid199, sine199):
    v = ScalarField.constant(grid199, -1.0)
    reps = verify_energy_bounds(_run(grid199, Nonlinearity.scaled_sine(0.1), sine199, v, 0.25, 1e-3), 0.1, v)
    assert all(r.passed and r.hypothesis_ok for r in reps)


def test_energy_bounds_flags_positive_control(grid199, sine199):
    v = ScalarField.constant(grid199, 1.0)
    reps = verify_energy_bounds(_run(grid199, Nonlinearity.zero(), sine199, v, 0.1, 1e-3), 0.0, v)
    assert all(not r.hypothesis_ok for r in reps)
    assert "positive" in reps[0].note


def test_growth_bound_attained_with_pure_reaction(grid199, sine199):
    f = Nonlinearity.linear(0.3)
    v = ScalarField.constant(grid199, 2.0)
    tr = _run(grid199, f, sine199, v, 0.5, 0.05, reaction_only=True)
    r = verify_growth_bound(tr, 0.3)
    assert r.lhs / r.rhs == pytest.approx(1.0, abs=1e-9)


def test_growth_bound_amplification(grid199, sine199):
    g = grid199
    tr = solve(ProblemSpec(g, Nonlinearity.zero(), sine199, 0.01), ControlSchedule.constant(g, 69.3147, 0.01), 1e-4)
    r = verify_growth_bound(tr, 0.0)
    assert r.rhs == pytest.approx(2 * math.sqrt(0.5), rel=1e-5)
    assert r.passed and r.lhs < r.rhs


def test_fabricated_trace_fails(grid199, sine199):
    tr = _run(grid199, Nonlinearity.zero(), sine199, ScalarField.zeros(grid199), 0.1, 1e-3)
    states = np.array(tr.states)
    states[1:] *= 10
    assert not verify_growth_bound(tr.with_states(states), 0.0).passed


def test_contraction(grid199, sine199):
    zero = ScalarField.zeros(grid199)
    ta = _run(grid199, Nonlinearity.zero(), sine199, zero, 0.1, 1e-3)
    assert verify_contraction(ta, ta, 0.0).lhs == 0.0
    tb = _run(grid199, Nonlinearity.zero(), 0.3 * sine199, zero, 0.1, 1e-3)
    r = verify_contraction(ta, tb, 0.0)
    assert r.passed and r.rhs == pytest.approx(0.7 * math.sqrt(0.5))


def test_nonneg_reports(grid199, sine199):
    zero = ScalarField.zeros(grid199)
    assert verify_nonneg(_run(grid199, Nonlinearity.zero(), zero, zero, 0.1, 1e-2)).passed
    neg = _run(grid199, Nonlinearity.zero(), -1.0 * sine199, zero, 0.1, 1e-2)
    r = verify_nonneg(neg)
    assert not r.hypothesis_ok and not r.passed


def test_log_ratio_bound_examples(grid199, sine199):
    v0 = ScalarField.constant(grid199, math.log(0.5))
    # sqrt(0.02) * sqrt(1/2 + pi^2/2) = 0.3296908 in the continuum
    assert static_error_bound(sine199, v0, 0.0, 0.01) == pytest.approx(0.3296908, rel=1e-4)
    assert static_error_bound(sine199, v0, 0.0, 0.125) == pytest.approx(0.5 * h10_norm(sine199))
    ratio = static_error_bound(sine199, v0, 0.0, 0.0025) / static_error_bound(sine199, v0, 0.0, 0.01)
    assert ratio == pytest.approx(0.5)


def test_bound_report_dict():
    d = BoundReport("x", 1.0, 2.0).to_dict()
    assert d["slack"] == 1.0 and d["pass"] is True and d["tol"] == 1e-3


def test_ledger_half_budgets_pass():
    eps, L, M = 0.05, 0.1, 1.3
    full = budget_ledger(eps, L, M, {})
    assert len(full.missing) == 9
    half = {name: 0.0 for name in full.missing}
    budgets = {e.name: e.budget for e in budget_ledger(eps, L, M, half).entries}
    led = budget_ledger(eps, L, M, {k: b / 2 for k, b in budgets.items()} | {"T1": 0.01})
    assert led.passed and led.closure.passed
    assert led["delta0"].budget == pytest.approx(0.1767767 * eps, rel=1e-6)
    worse = budget_ledger(eps, L, M, {"final": eps})
    assert not worse.passed


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(0, 10), st.floats(1.0001, 1e3), st.floats(1e-6, 1.0))
def test_closure_identity(eps, L, M, T1):
    r = closure_check(eps, L, M, T1)
    assert r.passed and r.lhs <= eps / 8 * (1 + 1e-12)


def test_closure_rejects_bad_inputs():
    assert not closure_check(0.1, 0.0, 1.0, 0.5).hypothesis_ok
    assert not closure_check(0.1, 0.0, 2.0, 1.5).hypothesis_ok


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1), st.floats(0, 2), st.floats(0, 3))
def test_log_ratio_bound_monotone(T, L, s):
    g = make_grid(1, 31, 1.0)
    u0 = ScalarField.from_function(g, lambda x: np.sin(np.pi * x))
    v = ScalarField.from_function(g, lambda x: -s * x**2)
    base = static_error_bound(u0, v, L, T)
    assert static_error_bound(u0, v, L, 1.5 * T) >= base
    assert static_error_bound(u0, v, L + 0.1, T) >= base
    assert static_error_bound(u0, 2 * v, L, T) >= base
    assert static_error_bound(2 * u0, v, L, T) >= base


def test_random_suite_passes_and_is_pure():
    first = random_suite(seed=0, cases=3)
    again = random_suite(seed=0, cases=3)
    for (_, a), (_, b) in zip(first, again):
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
        assert all(r.passed and r.hypothesis_ok for r in a)
