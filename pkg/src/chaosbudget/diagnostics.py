"""Local truncation error, bounding constants and spectra of trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba as nb
import numpy as np

from .integrators import SCHEMES, DivergenceError, TrajectoryConfig, get_scheme, kernels, n_steps, run_trajectory
from .systems import SystemDef

__all__ = [
    "LTESeries",
    "SpectrumResult",
    "fit_power_law",
    "estimate_lte",
    "lte_at_state",
    "estimate_gmax",
    "derivative_norms",
    "compute_c_lt",
    "hann_window",
    "compute_spectrum",
    "DEFAULT_DT_WINDOW",
]

# Largest dt of the asymptotic (fit) region per scheme.
DEFAULT_DT_WINDOW = {"fe": 5.0e-3, "rk3": 5.0e-2, "rk4": 9.0e-2}


@dataclass
class LTESeries:
    scheme: str
    order: int
    dt_values: np.ndarray
    max_lte_norms: np.ndarray
    c_p: float
    rate: float
    rate_intercept: float = 0.0

    def __post_init__(self):
        if len(self.dt_values) != len(self.max_lte_norms):
            raise ValueError("dt_values and max_lte_norms must have equal length")


def fit_power_law(x, y) -> tuple[float, float]:
    """Least-squares fit of ``log y = k log x + log c``; returns ``(k, c)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two points")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (k, logc), *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(k), float(math.exp(logc))


_LTE_KERNELS: dict = {}


def _lte_kernel(system: SystemDef):
    key = (system.rhs_kernel, system.output_kernel)
    if key in _LTE_KERNELS:
        return _LTE_KERNELS[key]
    ks = kernels(system)
    rk_step, finite = ks["rk_step"], ks["finite"]

    @nb.njit
    def max_lte(A, b, Aref, bref, p, u0, dt, n0, ns, nsub):
        d = u0.shape[0]
        u = u0.copy()
        k = np.empty((b.shape[0], d))
        kref = np.empty((bref.shape[0], d))
        tmp = np.empty(d)
        ref = np.empty(d)
        for n in range(n0):
            rk_step(A, b, p, u, dt, k, tmp, False)
            if not finite(u):
                return -1.0, n
        h = dt / nsub
        worst = 0.0
        for n in range(ns):
            for j in range(d):
                ref[j] = u[j]
            for _ in range(nsub):
                rk_step(Aref, bref, p, ref, h, kref, tmp, False)
            rk_step(A, b, p, u, dt, k, tmp, False)
            if not finite(u):
                return -1.0, n0 + n
            for j in range(d):
                e = abs(u[j] - ref[j])
                if e > worst:
                    worst = e
        return worst, -1

    _LTE_KERNELS[key] = max_lte
    return max_lte


def lte_at_state(scheme, system: SystemDef, state, dt: float, substeps: int = 10) -> np.ndarray:
    """One-step error of ``scheme`` from ``state`` against an RK4 sub-stepped surrogate."""
    from .integrators import step

    sch = get_scheme(scheme)
    u1 = step(sch, system, state, dt)
    ref = np.asarray(state, dtype=np.float64)
    for _ in range(substeps):
        ref = step("rk4", system, ref, dt / substeps)
    return u1 - ref


def estimate_lte(
    scheme,
    system: SystemDef,
    dt_values: Sequence[float],
    Ts: float = 100.0,
    t0: float = 100.0,
    ic=None,
    substeps: int = 10,
) -> LTESeries:
    """Max-norm local truncation error along the scheme's own trajectory.

    At every sampling step the scheme's step is compared with RK4 using
    ``substeps`` sub-steps from the same state. The observed rate is a free
    log-log slope; ``c_p`` is the coefficient of ``dt^(p+1)``.
    """
    sch = get_scheme(scheme)
    ref = SCHEMES["rk4"]
    dts = np.sort(np.asarray(dt_values, dtype=np.float64))
    if ic is None:
        ic = np.ones(system.dimension)
    u0 = np.asarray(ic, dtype=np.float64)
    kern = _lte_kernel(system)
    out = np.empty(dts.size)
    for i, dt in enumerate(dts):
        worst, fail = kern(sch.A, sch.b, ref.A, ref.b, system.params, u0, float(dt), n_steps(t0, dt), n_steps(Ts, dt), int(substeps))
        if fail >= 0:
            raise DivergenceError(f"LTE trajectory diverged at step {fail} (dt={dt})", step_index=int(fail))
        out[i] = worst
    rate, intercept = fit_power_law(dts, out)
    c_p = float(np.exp(np.mean(np.log(out) - (sch.order + 1) * np.log(dts))))
    return LTESeries(sch.id, sch.order, dts, out, c_p, rate, intercept)


_DERIV_KERNELS: dict = {}


def _deriv_kernel(system: SystemDef):
    key = (system.rhs_kernel, system.output_kernel, system.derivative_kernel)
    if key in _DERIV_KERNELS:
        return _DERIV_KERNELS[key]
    ks = kernels(system)
    rk_step, finite = ks["rk_step"], ks["finite"]
    deriv = system.derivative_kernel

    @nb.njit
    def max_norms(A, b, p, u0, dt, n0, ns, kmax):
        d = u0.shape[0]
        u = u0.copy()
        k = np.empty((b.shape[0], d))
        tmp = np.empty(d)
        D = np.empty((kmax, d))
        best = np.zeros(kmax)
        for n in range(n0):
            rk_step(A, b, p, u, dt, k, tmp, False)
            if not finite(u):
                return best, n
        for n in range(ns + 1):
            deriv(u, p, kmax, D)
            for i in range(kmax):
                for j in range(d):
                    v = abs(D[i, j])
                    if v > best[i]:
                        best[i] = v
            if n < ns:
                rk_step(A, b, p, u, dt, k, tmp, False)
                if not finite(u):
                    return best, n0 + n
        return best, -1

    _DERIV_KERNELS[key] = max_norms
    return max_norms


def derivative_norms(
    system: SystemDef,
    max_order: int,
    dt: float = 1e-4,
    Ts: float = 1000.0,
    t0: float = 100.0,
    ic=None,
) -> np.ndarray:
    """``max_t ||d^k u/dt^k||_inf`` for ``k = 1..max_order`` along an RK4 trajectory."""
    if system.derivative_kernel is None:
        raise NotImplementedError(f"system {system.name!r} has no derivative oracle")
    if not 1 <= max_order <= system.max_derivative_order:
        raise ValueError(f"max_order must be in [1, {system.max_derivative_order}]")
    rk4 = SCHEMES["rk4"]
    u0 = np.ones(system.dimension) if ic is None else np.asarray(ic, dtype=np.float64)
    best, fail = _deriv_kernel(system)(rk4.A, rk4.b, system.params, u0, float(dt), n_steps(t0, dt), n_steps(Ts, dt), int(max_order))
    if fail >= 0:
        raise DivergenceError(f"reference trajectory diverged at step {fail}", step_index=int(fail))
    return best


def compute_c_lt(
    lte: LTESeries,
    system: SystemDef,
    p: Optional[int] = None,
    derivative_norm: Optional[float] = None,
    **trajectory_kwargs,
) -> float:
    """Classical truncation constant ``c_p (p+1)! / ||d^(p+1)u/dt^(p+1)||_inf``.

    The norm is the maximum over an attractor trajectory of the state's
    inf-norm (see :func:`derivative_norms`) unless ``derivative_norm`` is given.
    """
    p = lte.order if p is None else int(p)
    if derivative_norm is None:
        if system.derivative_kernel is None:
            raise NotImplementedError(f"system {system.name!r} has no derivative oracle")
        derivative_norm = float(derivative_norms(system, p + 1, **trajectory_kwargs)[p])
    if not derivative_norm > 0:
        raise ValueError("derivative norm must be positive")
    return lte.c_p * math.factorial(p + 1) / derivative_norm


def estimate_gmax(lte: LTESeries, fit, scales, dt_window=None, n_points: int = 200) -> float:
    """Lower bound on the local-to-global error propagation constant.

    Evaluates ``C_q dt^q / (c_p dt^(p+1)) * dt / T_d`` over ``dt_window``
    and returns its maximum. ``fit`` supplies ``Cq`` and ``q``; ``scales``
    supplies ``T_d``.
    """
    if dt_window is None:
        hi = DEFAULT_DT_WINDOW.get(lte.scheme, float(np.max(lte.dt_values)))
        dt_window = (float(np.min(lte.dt_values)), hi)
    lo, hi = float(dt_window[0]), float(dt_window[1])
    if not (0 < lo <= hi):
        raise ValueError(f"empty dt window {dt_window!r}")
    dts = np.geomspace(lo, hi, n_points) if hi > lo else np.array([lo])
    ratio = fit.Cq * dts ** fit.q / (lte.c_p * dts ** (lte.order + 1)) * dts / scales.T_d
    return float(np.max(ratio))


# --- spectra ----------------------------------------------------------------


@dataclass
class SpectrumResult:
    freqs: np.ndarray
    amplitudes: np.ndarray  # (n_freq, n_components)
    a: float
    b: float
    a_components: np.ndarray
    b_components: np.ndarray
    window: tuple
    mean_removed: bool = True
    plateau_log_amp: Optional[float] = None


def hann_window(n: int) -> np.ndarray:
    """``w_n = 0.5 (1 - cos(2 pi n / (N - 1)))``; zero at both ends."""
    if n < 2:
        return np.ones(n)
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def unitary_dft(x) -> np.ndarray:
    """Unitary forward DFT (energy preserving)."""
    return np.fft.fft(np.asarray(x, dtype=np.float64), axis=0, norm="ortho")


def _plateau_onset(freqs, log_amp, f_lo, margin, smooth_bins):
    # Round-off floor: median log-amplitude over the upper half of the band.
    upper = freqs >= 0.5 * freqs[-1]
    floor = float(np.median(log_amp[upper]))
    kernel = np.ones(smooth_bins) / smooth_bins
    smooth = np.convolve(log_amp, kernel, mode="same")
    above = (freqs >= f_lo) & (smooth < floor + margin)
    if not np.any(above):
        return float(freqs[-1]), floor
    return float(freqs[np.argmax(above)]), floor


def compute_spectrum(
    trace,
    dt: float,
    f_window=(1.0, None),
    remove_mean: bool = True,
    plateau_margin: float = math.log(1e4),
    smooth_width: float = 0.5,
) -> SpectrumResult:
    """Hann-windowed single-sided amplitude spectrum with an exponential-decay fit.

    Amplitude per bin is ``2 |X_k| / sum(w)`` for the windowed signal. The decay
    ``|u(f)| ~ exp(-a f + b)`` is fitted to the log-amplitude between
    ``f_window[0]`` and ``f_window[1]``; an upper bound of ``None`` stops the fit
    where the spectrum comes within ``plateau_margin`` (natural log units) of
    the round-off plateau.
    """
    X = np.asarray(trace, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 64:
        raise ValueError(f"need at least 64 samples, got {n}")
    if remove_mean:
        X = X - X.mean(axis=0)
    w = hann_window(n)
    F = np.abs(np.fft.rfft(w[:, None] * X, axis=0)) * (2.0 / w.sum())
    freqs = np.fft.rfftfreq(n, dt)

    f_lo, f_hi = f_window
    tiny = np.finfo(float).tiny
    logF = np.log(np.maximum(F, tiny))
    floor = None
    if f_hi is None:
        bins = max(1, int(round(smooth_width / (freqs[1] - freqs[0]))))
        pooled = logF.mean(axis=1)
        f_hi, floor = _plateau_onset(freqs, pooled, f_lo, plateau_margin, bins)
    sel = (freqs >= f_lo) & (freqs <= f_hi)
    if sel.sum() < 2:
        raise ValueError(f"fit window ({f_lo}, {f_hi}) holds fewer than two bins")
    a_c = np.empty(X.shape[1])
    b_c = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        slope, icpt = np.polyfit(freqs[sel], logF[sel, j], 1)
        a_c[j], b_c[j] = -slope, icpt
    fs = np.tile(freqs[sel], X.shape[1])
    slope, icpt = np.polyfit(fs, logF[sel].T.ravel(), 1)
    return SpectrumResult(freqs, F, float(-slope), float(icpt), a_c, b_c, (float(f_lo), float(f_hi)), remove_mean, floor)
