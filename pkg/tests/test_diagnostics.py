import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosbudget.diagnostics import (
    LTESeries,
    compute_c_lt,
    compute_spectrum,
    derivative_norms,
    estimate_gmax,
    estimate_lte,
    fit_power_law,
    hann_window,
    lte_at_state,
    unitary_dft,
)
from chaosbudget.integrators import get_scheme, n_steps
from chaosbudget.systems import linear_decay_system, lorenz_system

DECAY = linear_decay_system()


def _R(p, z):
    return sum(z**k / math.factorial(k) for k in range(p + 1))


def _linear_lte(sid, dt, u=1.0, substeps=10):
    p = get_scheme(sid).order
    return abs(_R(p, -dt) - _R(4, -dt / substeps) ** substeps) * abs(u)


@pytest.mark.parametrize("sid", ["fe", "rk3", "rk4"])
@pytest.mark.parametrize("dt", [0.02, 0.1])
def test_lte_at_state_linear_oracle(sid, dt):
    got = lte_at_state(sid, DECAY, [3.0], dt)
    assert abs(got[0]) == pytest.approx(_linear_lte(sid, dt, 3.0), rel=1e-9)


@pytest.mark.parametrize("sid", ["fe", "rk3", "rk4"])
def test_estimate_lte_linear_oracle(sid):
    p = get_scheme(sid).order
    dts = [0.05, 0.1, 0.2]
    s = estimate_lte(sid, DECAY, dts, Ts=2.0, t0=1.0)
    # largest error sits on the first sampled state
    expected = [_linear_lte(sid, dt, _R(p, -dt) ** n_steps(1.0, dt)) for dt in dts]
    np.testing.assert_allclose(s.max_lte_norms, expected, rtol=1e-6)
    assert s.rate == pytest.approx(p + 1, abs=0.25)


def test_linear_c_lt_is_one():
    # For u' = -u the leading LTE term is |u|/(p+1)!, so the constant is exactly one.
    for sid in ("fe", "rk3", "rk4"):
        p = get_scheme(sid).order
        dts = np.geomspace(1e-3, 4e-3, 3) if p < 4 else np.geomspace(2e-2, 4e-2, 3)
        s = estimate_lte(sid, DECAY, dts, Ts=1.0, t0=0.0)
        c = compute_c_lt(s, DECAY, t0=0.0, Ts=1.0)
        assert c == pytest.approx(1.0, rel=0.02), sid


@pytest.mark.parametrize("sid", ["fe", "rk3", "rk4"])
def test_lte_rate_at_lorenz_state(sid):
    p = get_scheme(sid).order
    dts = np.array([2e-3, 4e-3, 8e-3]) * (1 if p == 1 else 5)
    errs = [np.abs(lte_at_state(sid, lorenz_system(), [-5.0, 3.0, 20.0], dt)).max() for dt in dts]
    assert fit_power_law(dts, errs)[0] == pytest.approx(p + 1, abs=0.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.floats(1e-3, 1e3))
def test_fit_power_law_exact(k, c):
    x = np.geomspace(0.01, 10, 7)
    kk, cc = fit_power_law(x, c * x**k)
    assert kk == pytest.approx(k, abs=1e-9)
    assert cc == pytest.approx(c, rel=1e-9)


def test_fit_power_law_needs_two_points():
    with pytest.raises(ValueError):
        fit_power_law([1.0], [1.0])


def test_derivative_norms_linear():
    S = linear_decay_system(rate=0.7, dimension=2)
    dt, t0 = 1e-3, 0.5
    got = derivative_norms(S, 4, dt=dt, Ts=1.0, t0=t0)
    u_start = _R(4, -0.7 * dt) ** n_steps(t0, dt)
    np.testing.assert_allclose(got, [0.7**k * u_start for k in range(1, 5)], rtol=1e-12)


def test_derivative_norms_lorenz_positive_and_growing():
    d = derivative_norms(lorenz_system(), 5, dt=1e-3, Ts=5.0, t0=5.0)
    assert np.all(d > 0) and np.all(np.diff(d) > 0)


def test_c_lt_with_given_norm():
    s = LTESeries("rk3", 3, np.array([0.1, 0.2]), np.array([1.0, 2.0]), c_p=2.5, rate=4.0)
    assert compute_c_lt(s, DECAY, derivative_norm=10.0) == pytest.approx(2.5 * 24 / 10.0)
    with pytest.raises(ValueError):
        compute_c_lt(s, DECAY, derivative_norm=0.0)


def test_gmax_hand_value():
    lte = LTESeries("fe", 1, np.array([1e-3, 1e-2]), np.array([1.0, 1.0]), c_p=0.5, rate=2.0)
    fit = SimpleNamespace(Cq=2.0, q=2.0)
    scales = SimpleNamespace(T_d=0.01)
    # ratio = 4 dt / T_d, largest at the top of the window
    assert estimate_gmax(lte, fit, scales, dt_window=(1e-3, 5e-3)) == pytest.approx(2.0, rel=1e-12)
    assert estimate_gmax(lte, fit, scales) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        estimate_gmax(lte, fit, scales, dt_window=(0.0, 1.0))


def test_hann_window():
    w = hann_window(9)
    assert w[0] == 0.0 and w[-1] == pytest.approx(0.0, abs=1e-15) and w[4] == 1.0
    np.testing.assert_allclose(w, w[::-1], atol=1e-15)
    np.testing.assert_allclose(hann_window(64), np.hanning(64), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 300), st.integers(0, 2**31))
def test_unitary_dft_parseval(n, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    X = unitary_dft(x)
    assert np.sum(np.abs(X) ** 2) == pytest.approx(np.sum(x**2), rel=1e-10)


def test_sinusoid_peak():
    n, dt = 4096, 0.01
    f0 = 100 / (n * dt)
    t = np.arange(n) * dt
    res = compute_spectrum(3.0 * np.sin(2 * np.pi * f0 * t), dt, f_window=(1.0, 10.0))
    k = int(np.argmax(res.amplitudes[:, 0]))
    assert res.freqs[k] == pytest.approx(f0, rel=1e-12)
    assert res.amplitudes[k, 0] == pytest.approx(3.0, rel=1e-2)


@pytest.mark.parametrize("a", [0.3, 0.8])
def test_exponential_spectrum_recovered(a):
    # Poisson kernel: Fourier coefficients r^k, so the amplitude decays as exp(-a f).
    n, dt = 4096, 0.01
    L = n * dt
    r = math.exp(-a / L)
    theta = 2 * np.pi * np.arange(n) / n - np.pi  # peak mid-window
    x = (1 - r * r) / (1 - 2 * r * np.cos(theta) + r * r)
    res = compute_spectrum(x, dt, f_window=(1.0, 20.0))
    assert res.a == pytest.approx(a, rel=1e-4)
    assert res.a_components[0] == pytest.approx(res.a)


def test_spectrum_components_and_auto_window():
    from chaosbudget.integrators import TrajectoryConfig, run_trajectory

    dt = 1e-2
    rec = run_trajectory("rk4", lorenz_system(), TrajectoryConfig(dt, 10.0, 40.96 - dt), [1.0, 1.0, 1.0], record=True)
    res = compute_spectrum(rec.sampled_states, dt)
    assert res.amplitudes.shape[1] == 3
    assert res.window[0] == 1.0 and 1.0 < res.window[1] < res.freqs[-1]
    assert res.plateau_log_amp is not None
    assert res.a > 0


def test_spectrum_rejects_short_trace():
    with pytest.raises(ValueError):
        compute_spectrum(np.zeros(10), 0.1)
