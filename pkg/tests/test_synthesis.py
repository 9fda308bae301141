import math

import numpy as np
import pytest

from mulcontrol.dynamics import ControlSchedule, Nonlinearity, ProblemSpec, control_at, solve
from mulcontrol.field_core import ScalarField, l2_norm, linf_norm
from mulcontrol.synthesis import (ApproximantPair, PreconditionError, SynthesisError, SynthesisPlan,
                                  build_approximants, calibrated_rate, check_ratio_condition, choose_eta, cutoff_targets,
                                  find_T1, phase1_control, refine_iterate, static_log_ratio_control, steer,
                                  two_phase_schedule)


def test_ratio_condition(sine199):
    assert check_ratio_condition(sine199, 0.5 * sine199) == (True, pytest.approx(0.5))
    assert check_ratio_condition(sine199, sine199) == (True, pytest.approx(1.0))
    assert not check_ratio_condition(sine199, 1.2 * sine199)[0]


def test_static_control(sine199):
    assert linf_norm(static_log_ratio_control(sine199, sine199, 0.3)) == 0.0
    v = static_log_ratio_control(sine199, 0.5 * sine199, 0.1)
    np.testing.assert_allclose(v.values, -6.931471805599453, rtol=1e-12)
    with pytest.raises(PreconditionError):
        static_log_ratio_control(sine199, 1.2 * sine199, 0.1)


def test_static_control_is_nonpositive(grid199):
    rng = np.random.default_rng(3)
    u0 = ScalarField(grid199, rng.uniform(0.1, 2.0, grid199.shape))
    ustar = u0 * ScalarField(grid199, rng.uniform(0.05, 1.0, grid199.shape))
    assert static_log_ratio_control(u0, ustar, 0.2).max() <= 0.0


def test_reaction_only_reaches_target_exactly(grid199):
    u0 = ScalarField.from_function(grid199, lambda x: np.sin(np.pi * x) * (1.2 + np.cos(2 * np.pi * x)))
    ustar = u0 * ScalarField.from_function(grid199, lambda x: 0.3 + 0.5 * x * (1 - x))
    v = static_log_ratio_control(u0, ustar, 0.05)
    tr = solve(ProblemSpec(grid199, Nonlinearity.zero(), u0, 0.05), ControlSchedule.static(v, 0.05), 1e-3,
               reaction_only=True)
    assert np.max(np.abs(tr.final.values - ustar.values)) < 1e-10


def test_approximants_identity_pair(sine199):
    # small sigma and floor: budgets met on the first try
    pair = build_approximants(sine199, sine199, 0.8, 0.0, sigma=0.005, delta_floor=0.01)
    assert pair.iterations == 1
    assert 1.0 < pair.M_eps <= 1.05 * 1.001
    assert pair.u0_eps.min() > 0


def test_approximants_zero_plateau(grid199, sine199):
    ustar = ScalarField.from_function(grid199, lambda x: np.where(np.abs(x - 0.5) < 0.2, 1.0, 0.0))
    pair = build_approximants(sine199, ustar, 0.1, 0.1)
    assert pair.ustar_eps.min() > 0
    assert math.isfinite(pair.M_eps)
    assert l2_norm(pair.ustar_eps - ustar) < 0.1 / 4


def test_approximants_reject_zero(grid199, sine199):
    with pytest.raises(PreconditionError):
        build_approximants(ScalarField.zeros(grid199), sine199, 0.1, 0.0)
    with pytest.raises(PreconditionError):
        build_approximants(-1.0 * sine199, sine199, 0.1, 0.0)


def test_choose_eta(grid199, sine199):
    assert choose_eta(ScalarField.zeros(grid199), 0.1) == 0.25
    assert choose_eta(sine199, 1e6) == 0.25
    eta = choose_eta(sine199, 0.05)
    assert eta < 0.25


def test_cutoff_targets_vanish_where_matched(sine199):
    pair = ApproximantPair(sine199, 2.0 * sine199, 2.0, 0.0, 0.0)
    u_eta, v0 = cutoff_targets(pair, 0.1)
    assert np.max(np.abs(v0.values)) < 1e-12
    assert u_eta.max() <= 2.0 + 1e-12


def test_phase1_control():
    assert phase1_control(2.0, 0.01) == pytest.approx(69.31471805599453)
    assert phase1_control(math.e, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        phase1_control(1.0, 0.1)


def test_find_T1_linear_eigenmode(grid199, sine199):
    pair = ApproximantPair(sine199, sine199, 2.0, 0.0, 0.0)
    prob = ProblemSpec(grid199, Nonlinearity.zero(), sine199, 0.5)
    T1 = find_T1(prob, pair, 0.8)
    # exact error 2 (1 - e^{-pi^2 T1}) sqrt(1/2) <= 0.1 needs T1 <= 0.00716
    assert T1 <= 0.00716
    assert find_T1(prob, pair, 1e6) == 0.01


def test_find_T1_fails_when_far(grid199, sine199):
    pair = ApproximantPair(2.0 * sine199, sine199, 2.0, 0.0, 0.0)
    prob = ProblemSpec(grid199, Nonlinearity.zero(), sine199, 0.5)
    with pytest.raises(SynthesisError):
        find_T1(prob, pair, 0.1, max_halvings=5)


def _plan(grid, v0):
    u = ScalarField.constant(grid, 1.0)
    pair = ApproximantPair(u, u, 2.0, 0.0, 0.0)
    return SynthesisPlan(pair, 0.1, u, v0, phase1_control(2.0, 0.01), 0.01, 1e-4)


def test_two_phase_schedule(grid199):
    v0 = ScalarField.from_function(grid199, lambda x: -x * (1 - x))
    s = two_phase_schedule(_plan(grid199, v0), 0.5)
    np.testing.assert_allclose(control_at(s, 0.005).values, phase1_control(2.0, 0.01))
    np.testing.assert_allclose(control_at(s, 0.255).values, v0.values / 0.49)
    free = two_phase_schedule(_plan(grid199, ScalarField.zeros(grid199)), 0.5)
    assert linf_norm(free.steps[1]) == 0.0


def test_refine_iterate_on_target_is_zero(sine199):
    s = refine_iterate(sine199, sine199, 0.2, 0.5, 4)
    assert s.m == 4 and s.start == 0.2 and s.T == 0.5
    # diffusion lowers the state between re-syntheses, but clamping keeps v <= 0
    assert linf_norm(s.steps[0]) < 1e-9
    assert all(v.max() <= 0 for v in s.steps)


def test_refine_single_step_matches_static(sine199):
    s = refine_iterate(sine199, 0.5 * sine199, 0.0, 0.1, 1)
    np.testing.assert_allclose(s.steps[0].values, static_log_ratio_control(sine199, 0.5 * sine199, 0.1).values,
                               atol=1e-9)


def _refine_errors(grid, u0, target, clamp, ns=(1, 2, 4, 8, 16), T=0.05):
    errs = []
    for n in ns:
        s = refine_iterate(u0, target, 0.0, T, n, clamp=clamp)
        tr = solve(ProblemSpec(grid, Nonlinearity.zero(), u0, T), s)
        errs.append(l2_norm(tr.final - target))
    return errs


def test_unclamped_refine_error_decreases_with_n(grid199, sine199):
    errs = _refine_errors(grid199, sine199, 0.5 * sine199, clamp=False)
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # only the last subinterval's decay deficit remains
    for n, err in zip((2, 4, 8, 16), errs[1:]):
        assert err == pytest.approx(0.5 * (1 - math.exp(-math.pi**2 * 0.05 / n)) * math.sqrt(0.5), rel=1e-3)


def test_clamped_refine_cannot_reamplify(grid199, sine199):
    # after the first step diffusion leaves the state below target; clamped logs are 0
    errs = _refine_errors(grid199, sine199, 0.5 * sine199, clamp=True)
    assert errs[-1] >= errs[0]


def test_steer_identity_pair(grid199, sine199):
    prob = ProblemSpec(grid199, Nonlinearity.zero(), sine199, 0.5)
    sched, rep = steer(prob, sine199, 0.1)
    assert rep.final_error < 0.1 and rep.ledger.passed
    assert rep.plan.M_eps == pytest.approx(1.05, rel=1e-3)
    assert sched.m == 2 + rep.plan.n_iter


def test_steer_half_amplitude_nonlinear(grid199, sine199):
    prob = ProblemSpec(grid199, Nonlinearity.scaled_sine(0.1), sine199, 0.5)
    sched, rep = steer(prob, 0.5 * sine199, 0.05)
    assert rep.success and rep.ledger.passed
    again = solve(prob, sched)
    assert l2_norm(again.final - 0.5 * sine199) == pytest.approx(rep.final_error, rel=1e-12)


def test_calibrated_rate_reproduces_factor(grid199):
    # backward Euler with the calibrated rate multiplies by exactly exp(log_factor)
    log_factor, duration, n = math.log(15893.0), 1e-3, 64
    v = float(calibrated_rate(log_factor, duration, n))
    assert (1 - v * duration / n) ** (-n) == pytest.approx(15893.0, rel=1e-12)
    assert v == pytest.approx(log_factor / duration, rel=0.1)
    assert calibrated_rate(0.0, 1.0, 8) == 0.0
    shrink = calibrated_rate(np.array([-1.0, -5.0]), 0.5, 16)
    assert np.all((1 - shrink * 0.5 / 16) ** (-16) == pytest.approx(np.exp([-1.0, -5.0]), rel=1e-12))


def test_steer_large_amplification(grid199, sine199):
    # u0 nearly vanishes at x = 1/3, so the amplification factor is ~1.6e4
    u0 = ScalarField.from_function(grid199, lambda x: x * (1 - x) * (1 + np.cos(3 * np.pi * x)))
    prob = ProblemSpec(grid199, Nonlinearity.scaled_sine(0.1), u0, 0.5)
    sched, rep = steer(prob, 0.5 * sine199, 0.05)
    assert rep.plan.M_eps > 1e4
    assert rep.success and rep.ledger.passed
    assert l2_norm(solve(prob, sched).final - 0.5 * sine199) < 0.05


def test_steer_rejects_zero(grid199, sine199):
    with pytest.raises(PreconditionError):
        steer(ProblemSpec(grid199, Nonlinearity.zero(), ScalarField.zeros(grid199), 0.5), sine199, 0.1)
