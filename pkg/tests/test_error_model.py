import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosbudget.ensemble import ErrorSamples
from chaosbudget.error_model import (
    FIT_WINDOWS,
    ErrorModelParams,
    NonDimScales,
    UnidentifiableError,
    a0_from_scales,
    derive_scales,
    eval_error_model,
    fit_error_model,
    load_params,
    save_params,
)

TRUE = ErrorModelParams(A0=1.0, r=0.5, Cq=100.0, q=3.0)


def synthetic(params, noise=0.0, seed=0, dts=None, Tss=None):
    dts = np.geomspace(0.05, 1.0, 6) if dts is None else dts
    Tss = np.geomspace(1.0, 1e4, 5) if Tss is None else Tss
    D, T = (a.ravel() for a in np.meshgrid(dts, Tss, indexing="ij"))
    E = eval_error_model(params, D, T)
    if noise:
        E = E * (1.0 + noise * np.random.default_rng(seed).standard_normal(E.size))
    return ErrorSamples.from_arrays(D, T, E)


def _rel(p, q):
    return max(abs(getattr(p, k) / getattr(q, k) - 1) for k in ("A0", "r", "Cq", "q"))


def test_eval_rk3_table_point():
    p = ErrorModelParams(A0=0.978, r=0.553, Cq=2740.0, q=2.96)
    assert p(8.52e-3, 3370.0) == pytest.approx(0.01300, abs=1e-4)


def test_eval_limits_and_vectorization():
    assert eval_error_model(TRUE, 1e-12, 25.0) == pytest.approx(0.2, rel=1e-12)
    assert eval_error_model(TRUE, 0.1, 1e300) == pytest.approx(0.1, rel=1e-12)
    out = eval_error_model(TRUE, np.array([0.1, 0.2]), np.array([4.0, 4.0]))
    np.testing.assert_allclose(out, [0.1 + 0.5, 0.8 + 0.5])
    with pytest.raises(ValueError):
        eval_error_model(TRUE, 0.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(1.0, 1e5), st.floats(1.01, 3.0))
def test_model_monotone_in_dt_and_Ts(dt, Ts, f):
    assert TRUE(dt * f, Ts) > TRUE(dt, Ts)
    assert TRUE(dt, Ts * f) < TRUE(dt, Ts)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        ErrorModelParams(A0=1.0, r=0.0, Cq=1.0, q=1.0)


def test_exact_recovery():
    p = fit_error_model(synthetic(TRUE), order=3)
    assert _rel(p, TRUE) < 1e-6
    assert p.residual < 1e-20


@pytest.mark.parametrize("seed", range(20))
def test_noisy_recovery_within_ten_percent(seed):
    p = fit_error_model(synthetic(TRUE, noise=0.05, seed=seed), order=3)
    assert _rel(p, TRUE) < 0.10


def test_recovery_without_order_hint():
    truth = ErrorModelParams(A0=2.0, r=0.7, Cq=5e3, q=1.4)
    p = fit_error_model(synthetic(truth, dts=np.geomspace(1e-3, 5e-2, 6), Tss=np.geomspace(1, 1e4, 5)))
    assert _rel(p, truth) < 1e-6


def test_window_excludes_samples():
    s = synthetic(TRUE)
    s.E_abs_err[s.dt > 0.5] *= 100.0  # corrupted outside the window
    p = fit_error_model(s, window=(0.5, 1.0), order=3)
    assert _rel(p, TRUE) < 1e-6
    assert p.dt_max == 0.5 and p.Ts_min == 1.0


def test_invalid_points_are_skipped():
    s = synthetic(TRUE)
    s.excluded_fraction[0] = 0.5
    s.E_abs_err[0] = 1e9
    assert _rel(fit_error_model(s, order=3), TRUE) < 1e-6


def test_single_Ts_is_unidentifiable():
    s = synthetic(TRUE, Tss=np.array([100.0]), dts=np.geomspace(0.05, 1, 10))
    with pytest.raises(UnidentifiableError) as exc:
        fit_error_model(s, order=3)
    assert exc.value.missing_regime == "sampling"


def test_pure_sampling_data_is_unidentifiable():
    # discretization is negligible everywhere
    s = synthetic(ErrorModelParams(1.0, 0.5, 1e-9, 3.0), dts=np.geomspace(1e-3, 1e-2, 4), Tss=np.geomspace(1, 1e4, 4))
    with pytest.raises(UnidentifiableError) as exc:
        fit_error_model(s, order=3)
    assert exc.value.missing_regime == "discretization"


def test_too_few_samples():
    s = synthetic(TRUE, dts=np.array([0.1, 0.2]), Tss=np.array([1.0, 10.0]))
    with pytest.raises(UnidentifiableError):
        fit_error_model(s)


def test_fit_windows():
    assert FIT_WINDOWS == {"fe": (5e-3, 1.0), "rk3": (5e-2, 1.0), "rk4": (9e-2, 1.0)}


def test_derive_scales_and_a0():
    s = derive_scales(var_of_J=1.1692e-4, Ts_ref=6646.9, sigma_g_hat=math.sqrt(74.34804))
    assert s.T_d == pytest.approx(1.1692e-4 * 6646.9 / 74.34804, rel=1e-12)
    assert a0_from_scales(s) == pytest.approx(math.sqrt(2 / math.pi) * s.sigma_g * math.sqrt(s.T_d))
    with pytest.raises(ValueError):
        derive_scales(0.0, 1.0, 1.0)


def test_clt_rate_copy():
    s = NonDimScales(8.6225, 1.0170e-2)
    p = TRUE.with_clt_rate(s)
    assert p.r == 0.5 and p.A0 == pytest.approx(a0_from_scales(s))
    assert p.Cq == TRUE.Cq and p.q == TRUE.q


def test_sampling_term_matches_halfnormal_mean():
    # E|N(0, var)| with var = T_d sigma^2 / Ts is A0 Ts^-1/2
    s = NonDimScales(3.0, 0.2)
    Ts = 50.0
    var = s.T_d * s.sigma_g**2 / Ts
    x = np.random.default_rng(0).normal(0, math.sqrt(var), 400000)
    assert np.abs(x).mean() == pytest.approx(a0_from_scales(s) / math.sqrt(Ts), rel=5e-3)


def test_params_roundtrip(tmp_path):
    p = ErrorModelParams(1.5, 0.6, 700.0, 1.3, dt_max=5e-3, Ts_min=1.0, residual=0.2, scheme="fe",
                         provenance={"note": "x"})
    path = tmp_path / "fit.json"
    save_params(p, path)
    doc = json.loads(path.read_text())
    assert doc["schema_version"] == 1
    back = load_params(path)
    assert back == p


def test_params_infinite_window_roundtrip(tmp_path):
    path = tmp_path / "fit.json"
    save_params(TRUE, path)
    assert load_params(path).dt_max == math.inf


def test_load_params_names_missing_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"A0": 1.0}')
    with pytest.raises(KeyError, match="r, Cq, q"):
        load_params(path)


def test_fixed_sampling_term_recovers_discretization():
    truth = ErrorModelParams(A0=0.8, r=0.5, Cq=700.0, q=1.4)
    s = synthetic(truth, dts=np.array([5e-3, 2.5e-3, 1.25e-3]), Tss=np.array([100.0]))
    p = fit_error_model(s, sampling=(0.8, 0.5), order=1)
    assert p.A0 == 0.8 and p.r == 0.5
    assert p.q == pytest.approx(1.4, rel=1e-8) and p.Cq == pytest.approx(700.0, rel=1e-8)


def test_fixed_sampling_term_needs_two_dt():
    s = synthetic(TRUE, dts=np.array([0.1]), Tss=np.array([1.0, 10.0, 100.0]))
    with pytest.raises(UnidentifiableError):
        fit_error_model(s, sampling=(1.0, 0.5))
