"""The attractor error model ``e = C_q dt^q + A_0 Ts^-r`` and its scales.

Fits are done on absolute errors (units of ``g``) with residuals in log
space, since expected errors span several decades over a typical grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "ErrorModelParams",
    "NonDimScales",
    "UnidentifiableError",
    "eval_error_model",
    "fit_error_model",
    "derive_scales",
    "a0_from_scales",
    "save_params",
    "load_params",
    "FIT_WINDOWS",
    "PARAMS_SCHEMA_VERSION",
]

PARAMS_SCHEMA_VERSION = 1

# (dt_max, Ts_min) of the asymptotic region used for fitting.
FIT_WINDOWS = {"fe": (5.0e-3, 1.0), "rk3": (5.0e-2, 1.0), "rk4": (9.0e-2, 1.0)}


class UnidentifiableError(ValueError):
    """The samples cannot pin down one of the two error regimes."""

    def __init__(self, message: str, missing_regime: str):
        super().__init__(message)
        self.missing_regime = missing_regime


@dataclass
class ErrorModelParams:
    A0: float
    r: float
    Cq: float
    q: float
    dt_max: float = math.inf
    Ts_min: float = 0.0
    residual: float = 0.0
    scheme: Optional[str] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("A0", "r", "Cq", "q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def __call__(self, dt, Ts):
        return eval_error_model(self, dt, Ts)

    def with_clt_rate(self, scales: "NonDimScales") -> "ErrorModelParams":
        """Copy with ``r = 1/2`` and ``A_0`` implied by ``scales``."""
        return ErrorModelParams(
            a0_from_scales(scales), 0.5, self.Cq, self.q, self.dt_max, self.Ts_min,
            self.residual, self.scheme, dict(self.provenance),
        )


@dataclass(frozen=True)
class NonDimScales:
    sigma_g: float
    T_d: float

    def __post_init__(self):
        if not self.T_d > 0:
            raise ValueError("T_d must be positive")
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be nonnegative")


def eval_error_model(p: ErrorModelParams, dt, Ts):
    dt = np.asarray(dt, dtype=np.float64)
    Ts = np.asarray(Ts, dtype=np.float64)
    if np.any(dt <= 0) or np.any(Ts <= 0):
        raise ValueError("dt and Ts must be positive")
    out = p.Cq * dt ** p.q + p.A0 * Ts ** (-p.r)
    return float(out) if out.ndim == 0 else out


def derive_scales(var_of_J: float, Ts_ref: float, sigma_g_hat: float) -> NonDimScales:
    """Decorrelation time from ``Var[J_T] = (T_d / Ts) sigma_g^2``.

    ``sigma_g_hat`` is the standard deviation of the instantaneous output.
    """
    if not (var_of_J > 0 and Ts_ref > 0 and sigma_g_hat > 0):
        raise ValueError("inputs must be positive")
    T_d = var_of_J * Ts_ref / sigma_g_hat ** 2
    return NonDimScales(float(sigma_g_hat), float(T_d))


def a0_from_scales(s: NonDimScales) -> float:
    return math.sqrt(2.0 / math.pi) * s.sigma_g * math.sqrt(s.T_d)


# --- fitting ----------------------------------------------------------------


def _as_arrays(samples):
    dt = np.asarray(samples.dt, dtype=np.float64)
    Ts = np.asarray(samples.Ts, dtype=np.float64)
    E = np.asarray(samples.E_abs_err, dtype=np.float64)
    valid = getattr(samples, "valid", None)
    valid = np.ones(dt.shape, bool) if valid is None else np.asarray(valid, bool)
    return dt, Ts, E, valid


def _initial_guesses(ldt, lTs, lE, order):
    # Sampling amplitude from the finest-dt half, discretization amplitude
    # from the longest-Ts half, each a log-log regression with fixed slope.
    fine = ldt <= np.median(ldt)
    long_ = lTs >= np.median(lTs)
    coarse = ldt >= np.median(ldt)
    r0 = 0.5
    logA0 = float(np.min(lE[fine] + r0 * lTs[fine]))
    if order is None:
        order = max(1.0, float(np.polyfit(ldt[long_ & coarse], lE[long_ & coarse], 1)[0])) if np.unique(ldt[long_ & coarse]).size > 1 else 2.0
    starts = []
    for q0 in (order - 1.0, float(order), order + 1.0):
        if q0 <= 0:
            q0 = 0.5
        sel = long_ & coarse
        logCq = float(np.max(lE[sel] - q0 * ldt[sel]))
        starts.append(np.array([logA0, math.log(r0), logCq, math.log(q0)]))
    return starts


def _residuals(theta, ldt, lTs, lE):
    logA0, logr, logCq, logq = theta
    disc = logCq + math.exp(logq) * ldt
    samp = logA0 - math.exp(logr) * lTs
    return np.logaddexp(disc, samp) - lE


def _fit_discretization_only(ldt, lTs, lE, A0, r, order):
    samp = math.log(A0) - r * lTs

    def res(theta):
        return np.logaddexp(theta[0] + math.exp(theta[1]) * ldt, samp) - lE

    best = None
    q_starts = (0.5, 1.0, 2.0, 4.0) if order is None else (max(order - 1.0, 0.5), float(order), order + 1.0)
    for q0 in q_starts:
        x0 = np.array([float(np.max(lE - q0 * ldt)), math.log(q0)])
        sol = least_squares(res, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        if np.all(np.isfinite(sol.x)) and (best is None or sol.cost < best.cost):
            best = sol
    return best


def fit_error_model(
    samples,
    window=None,
    order: Optional[int] = None,
    min_per_regime: int = 2,
    sampling: Optional[tuple] = None,
) -> ErrorModelParams:
    """Nonlinear least squares fit of the attractor error model.

    Only samples with ``dt <= dt_max`` and ``Ts >= Ts_min`` (and flagged
    valid) enter the fit. Minimizes the squared log residual from several
    starting points (``q`` near ``order - 1, order, order + 1``).

    ``sampling=(A0, r)`` fixes the sampling term (for instance to the CLT law
    from a reference ensemble) and fits only ``Cq`` and ``q``; then three
    samples at two or more distinct ``dt`` suffice.

    Raises
    ------
    UnidentifiableError
        When the in-window data cannot constrain the discretization or the
        sampling regime.
    """
    dt, Ts, E, valid = _as_arrays(samples)
    if window is None:
        window = (math.inf, 0.0)
    dt_max, Ts_min = float(window[0]), float(window[1])
    sel = valid & (dt <= dt_max) & (Ts >= Ts_min) & (E > 0)
    n = int(sel.sum())
    if sampling is not None:
        return _fit_with_fixed_sampling(dt[sel], Ts[sel], E[sel], sampling, order, dt_max, Ts_min, min_per_regime)
    if n < 8:
        raise UnidentifiableError(f"need at least 8 valid in-window samples, got {n}", "both")
    ldt, lTs, lE = np.log(dt[sel]), np.log(Ts[sel]), np.log(E[sel])
    if np.unique(lTs).size < 2:
        raise UnidentifiableError("all samples share one Ts; the sampling regime is unidentifiable", "sampling")
    if np.unique(ldt).size < 2:
        raise UnidentifiableError("all samples share one dt; the discretization regime is unidentifiable", "discretization")

    best = None
    for x0 in _initial_guesses(ldt, lTs, lE, order):
        try:
            sol = least_squares(_residuals, x0, args=(ldt, lTs, lE), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        except (ValueError, FloatingPointError):
            continue
        if not np.all(np.isfinite(sol.x)):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise RuntimeError("error-model fit failed from every start")

    logA0, logr, logCq, logq = best.x
    params = ErrorModelParams(
        A0=math.exp(logA0), r=math.exp(logr), Cq=math.exp(logCq), q=math.exp(logq),
        dt_max=dt_max, Ts_min=Ts_min, residual=float(2.0 * best.cost),
    )
    disc = params.Cq * dt[sel] ** params.q
    samp = params.A0 * Ts[sel] ** (-params.r)
    n_disc = int(np.sum(disc > samp))
    n_samp = n - n_disc
    if n_disc < min_per_regime:
        raise UnidentifiableError(f"only {n_disc} discretization-dominated samples in window", "discretization")
    if n_samp < min_per_regime:
        raise UnidentifiableError(f"only {n_samp} sampling-dominated samples in window", "sampling")
    return params


def _fit_with_fixed_sampling(dt, Ts, E, sampling, order, dt_max, Ts_min, min_per_regime):
    A0, r = (float(v) for v in sampling)
    if not (A0 > 0 and r > 0):
        raise ValueError("fixed sampling term needs A0 > 0 and r > 0")
    if dt.size < 3:
        raise UnidentifiableError(f"need at least 3 valid in-window samples, got {dt.size}", "both")
    if np.unique(dt).size < 2:
        raise UnidentifiableError("all samples share one dt; the discretization regime is unidentifiable", "discretization")
    best = _fit_discretization_only(np.log(dt), np.log(Ts), np.log(E), A0, r, order)
    if best is None:
        raise RuntimeError("error-model fit failed from every start")
    params = ErrorModelParams(A0=A0, r=r, Cq=math.exp(best.x[0]), q=math.exp(best.x[1]), dt_max=dt_max,
                              Ts_min=Ts_min, residual=float(2.0 * best.cost))
    n_disc = int(np.sum(params.Cq * dt ** params.q > A0 * Ts ** (-r)))
    if n_disc < min_per_regime:
        raise UnidentifiableError(f"only {n_disc} discretization-dominated samples in window", "discretization")
    return params


# --- persistence ------------------------------------------------------------


def save_params(params: ErrorModelParams, path) -> None:
    doc = {
        "schema_version": PARAMS_SCHEMA_VERSION,
        "scheme": params.scheme,
        "A0": params.A0,
        "r": params.r,
        "Cq": params.Cq,
        "q": params.q,
        "dt_max": params.dt_max if math.isfinite(params.dt_max) else None,
        "Ts_min": params.Ts_min,
        "residual": params.residual,
        "provenance": params.provenance,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path) -> ErrorModelParams:
    with open(path) as fh:
        doc = json.load(fh)
    missing = [k for k in ("A0", "r", "Cq", "q") if k not in doc]
    if missing:
        raise KeyError(f"parameter file {path} lacks keys: {', '.join(missing)}")
    dt_max = doc.get("dt_max")
    return ErrorModelParams(
        A0=float(doc["A0"]), r=float(doc["r"]), Cq=float(doc["Cq"]), q=float(doc["q"]),
        dt_max=math.inf if dt_max is None else float(dt_max),
        Ts_min=float(doc.get("Ts_min", 0.0)), residual=float(doc.get("residual", 0.0)),
        scheme=doc.get("scheme"), provenance=doc.get("provenance", {}),
    )
