import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosbudget.integrators import (
    SCHEMES,
    DivergenceError,
    TrajectoryConfig,
    get_scheme,
    n_steps,
    run_batch,
    run_trajectory,
    step,
)
from chaosbudget.systems import linear_decay_system, lorenz_system

L = lorenz_system()
DECAY = linear_decay_system()


def _order_conditions(s):
    A, b, c = s.A, s.b, s.c
    conds = {1: [b.sum() - 1]}
    conds[2] = [b @ c - 1 / 2]
    conds[3] = [b @ c**2 - 1 / 3, b @ A @ c - 1 / 6]
    conds[4] = [b @ c**3 - 1 / 4, b @ (c * (A @ c)) - 1 / 8, b @ A @ c**2 - 1 / 12, b @ A @ A @ c - 1 / 24]
    return conds


@pytest.mark.parametrize("sid", sorted(SCHEMES))
def test_tableau_order_conditions(sid):
    s = get_scheme(sid)
    conds = _order_conditions(s)
    for k in range(1, s.order + 1):
        np.testing.assert_allclose(conds[k], 0.0, atol=1e-15)
    if s.order < 4:
        # the next order is not satisfied, so the nominal order is exact
        assert np.max(np.abs(conds[s.order + 1])) > 1e-3
    np.testing.assert_allclose(s.A.sum(axis=1), s.c, atol=1e-15)
    assert s.rhs_evals_per_step == len(s.b)


def test_get_scheme_case_and_errors():
    assert get_scheme("RK4") is SCHEMES["rk4"]
    assert get_scheme(SCHEMES["fe"]) is SCHEMES["fe"]
    with pytest.raises(ValueError):
        get_scheme("rk5")


def test_forward_euler_lorenz_step():
    u = step("fe", L, [1.0, 1.0, 1.0], 0.01)
    np.testing.assert_allclose(u, [1.0, 1.26, 1.0 + 0.01 * (1.0 - 8.0 / 3.0)], rtol=0, atol=1e-15)


@pytest.mark.parametrize("sid", sorted(SCHEMES))
@pytest.mark.parametrize("dt", [0.1, 0.37])
def test_linear_step_is_stability_polynomial(sid, dt):
    p = get_scheme(sid).order
    R = sum((-dt) ** k / math.factorial(k) for k in range(p + 1))
    np.testing.assert_allclose(step(sid, DECAY, [2.0], dt), [2.0 * R], rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-4, 0.5), st.sampled_from(sorted(SCHEMES)))
def test_linear_system_step_is_linear(u, a, dt, sid):
    S = linear_decay_system(2.0, 1)
    left = step(sid, S, [a * u], dt)
    right = a * step(sid, S, [u], dt)
    np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("sid", sorted(SCHEMES))
def test_global_order_on_lorenz(sid):
    s = get_scheme(sid)
    u0 = np.array([1.0, 1.0, 20.0])
    T = 0.5

    def final(dt):
        return run_trajectory(s, L, TrajectoryConfig(dt, 0.0, T), u0).final_state

    ref = final(1e-5 if s.order > 1 else 1e-6)
    base = {"fe": 1e-3, "rk3": 1e-2, "rk4": 1e-2}[sid]
    errs = [np.abs(final(base / 2**k) - ref).max() for k in range(3)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(rates, s.order, atol=0.25)


@pytest.mark.parametrize("sid", sorted(SCHEMES))
def test_time_average_quadrature_converges(sid):
    # J over [0, 1] of u' = -u from u = 1 is 1 - exp(-1).
    s = get_scheme(sid)
    exact = 1.0 - math.exp(-1.0)
    errs = []
    for dt in (0.05, 0.025):
        J = run_trajectory(s, DECAY, TrajectoryConfig(dt, 0.0, 1.0), [1.0]).J_That
        errs.append(abs(J - exact))
    assert errs[1] < errs[0]
    np.testing.assert_allclose(math.log2(errs[0] / errs[1]), s.order, atol=0.2)


def test_rk4_time_average_exact_to_roundoff():
    J = run_trajectory("rk4", DECAY, TrajectoryConfig(1e-3, 0.0, 1.0), [1.0]).J_That
    assert abs(J - (1.0 - math.exp(-1.0))) < 1e-12


def test_spinup_is_not_averaged():
    cfg = TrajectoryConfig(1e-3, 2.0, 1.0)
    J = run_trajectory("rk4", DECAY, cfg, [1.0]).J_That
    assert J == pytest.approx(math.exp(-2.0) * (1 - math.exp(-1.0)), rel=1e-10)


def test_record_window_and_outputs():
    cfg = TrajectoryConfig(1e-2, 1.0, 2.0)
    r = run_trajectory("rk4", L, cfg, [1.0, 1.0, 1.0], record=True)
    assert r.sampled_states.shape == (cfg.n_sampling + 1, 3)
    assert r.sampled_outputs[0, 0] == pytest.approx(1.0)
    assert r.sampled_outputs[-1, 0] == pytest.approx(3.0)
    np.testing.assert_array_equal(r.sampled_outputs[:, 1], r.sampled_states[:, 2])
    np.testing.assert_array_equal(r.sampled_states[-1], r.final_state)
    r5 = run_trajectory("rk4", L, cfg, [1.0, 1.0, 1.0], record=True, record_every=5)
    np.testing.assert_array_equal(r5.sampled_states, r.sampled_states[::5])


def test_recording_does_not_change_average():
    cfg = TrajectoryConfig(5e-3, 1.0, 5.0)
    a = run_trajectory("rk3", L, cfg, [1.0, 2.0, 3.0])
    b = run_trajectory("rk3", L, cfg, [1.0, 2.0, 3.0], record=True)
    assert a.J_That == b.J_That


def test_divergence_raises_with_step_index():
    S = linear_decay_system(rate=100.0)
    with pytest.raises(DivergenceError) as exc:
        run_trajectory("fe", S, TrajectoryConfig(1.0, 0.0, 1000.0), [1.0])
    assert 100 < exc.value.step_index < 1000


def test_batch_matches_single_trajectories():
    rng = np.random.default_rng(1)
    ics = rng.normal(1, 5, (6, 3))
    cfg = TrajectoryConfig(1e-2, 1.0, 3.0)
    res = run_batch("rk4", L, ics, cfg.dt, cfg.n_spinup, cfg.n_sampling)
    assert res.ok.all()
    for i, ic in enumerate(ics):
        r = run_trajectory("rk4", L, cfg, ic)
        assert res.J[i] == r.J_That
        np.testing.assert_array_equal(res.final_states[i], r.final_state)


def test_batch_reports_failures_individually():
    S = linear_decay_system(rate=100.0)
    res = run_batch("fe", S, np.array([[1.0], [0.0]]), 1.0, 0, 1000)
    assert not res.ok[0] and res.ok[1]
    assert res.J[1] == 0.0


def test_step_rejects_bad_input():
    with pytest.raises(ValueError):
        step("rk4", L, [np.nan, 0, 0], 0.1)
    with pytest.raises(ValueError):
        step("rk4", L, [0, 0, 0], 0.0)


def test_n_steps_and_config_validation():
    assert n_steps(1.0, 0.1) == 10
    assert n_steps(100.0, 5e-3) == 20000
    with pytest.raises(ValueError):
        TrajectoryConfig(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(0.1, -1.0, 1.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(0.1, 0.0, 0.01)
