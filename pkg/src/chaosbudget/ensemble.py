"""Seeded Monte Carlo ensembles of trajectories.

Instance ``i`` of a run with ``base_seed`` draws its initial condition from
``SeedSequence(base_seed, spawn_key=(i,))``, so draws depend only on the seed
and the instance index, never on scheduling or worker count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numba
import numpy as np

from .integrators import DivergenceError, SchemeSpec, TrajectoryConfig, get_scheme, run_batch, run_trajectory
from .systems import ICDistribution, SystemDef

__all__ = [
    "EnsembleConfig",
    "EnsembleResult",
    "ReferenceResult",
    "ErrorSamples",
    "ReferenceAccuracyError",
    "instance_rng",
    "draw_ics",
    "run_ensemble",
    "compute_reference",
    "expected_abs_error_sweep",
    "ensemble_mean_estimate",
    "monte_carlo_error",
    "transient_traces",
    "write_sweep_csv",
    "read_sweep_csv",
    "SWEEP_CSV_COLUMNS",
    "J_REF_LORENZ",
    "SIGMA_G_SQ_LORENZ",
]

# Reference values for Lorenz (alpha = 10, 28, 8/3), g = u2.
J_REF_LORENZ = 23.549916
SIGMA_G_SQ_LORENZ = 74.34804

SWEEP_CSV_COLUMNS = (
    "scheme", "dt", "Ts", "M", "E_abs_err", "E_rel_err_pct", "stderr", "excluded_fraction", "base_seed",
)
SWEEP_SCHEMA_VERSION = 1

# Grid points with more divergent instances than this are flagged invalid.
MAX_EXCLUDED_FRACTION = 0.01


class ReferenceAccuracyError(ValueError):
    """The reference value is too noisy for the requested error sweep."""

    def __init__(self, message, samples=None):
        super().__init__(message)
        self.samples = samples


@dataclass(frozen=True)
class EnsembleConfig:
    system: SystemDef
    scheme: SchemeSpec
    traj: TrajectoryConfig
    M: int
    ic_dist: Optional[ICDistribution] = None
    base_seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        object.__setattr__(self, "scheme", get_scheme(self.scheme))
        if self.ic_dist is None:
            object.__setattr__(self, "ic_dist", ICDistribution.isotropic(self.system.dimension))

    def with_(self, **changes) -> "EnsembleConfig":
        return replace(self, **changes)


@dataclass
class EnsembleResult:
    J_values: np.ndarray
    mean: float
    var_of_J: float
    stderr_of_mean: float
    sigma_g_sq: float
    failed: np.ndarray  # indices of divergent instances
    config: EnsembleConfig

    @property
    def M(self) -> int:
        return len(self.J_values)


@dataclass(frozen=True)
class ReferenceResult:
    J_ref: float
    ci95: float
    var_of_J: float
    sigma_g_hat: float
    M: int
    Ts: float


@dataclass
class ErrorSamples:
    scheme: str
    dt: np.ndarray
    Ts: np.ndarray
    E_abs_err: np.ndarray
    stderr: np.ndarray
    M: np.ndarray
    excluded_fraction: np.ndarray
    J_ref: float
    base_seed: int
    seeds: np.ndarray = field(default=None)

    @property
    def E_rel_err_pct(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):  # J_ref = 0 gives inf
            return 100.0 * self.E_abs_err / abs(self.J_ref)

    @property
    def valid(self) -> np.ndarray:
        return self.excluded_fraction <= MAX_EXCLUDED_FRACTION

    @classmethod
    def from_arrays(cls, dt, Ts, E_abs_err, J_ref=1.0, scheme="", M=1):
        dt = np.asarray(dt, dtype=np.float64)
        n = dt.size
        return cls(scheme, dt, np.asarray(Ts, dtype=np.float64), np.asarray(E_abs_err, dtype=np.float64),
                   np.zeros(n), np.full(n, M), np.zeros(n), float(J_ref), 0)


def instance_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=(int(index),)))


def draw_ics(ic_dist: ICDistribution, base_seed: int, indices) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    return np.array([ic_dist.sample(instance_rng(base_seed, i)) for i in indices]).reshape(len(indices), -1)


def _set_threads(threads):
    if threads is not None:
        numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))


def _pooled_variance(means, m2s, n):
    # Chan et al. merge, reduced in instance order.
    mean, M2, count = 0.0, 0.0, 0
    for mu, m2 in zip(means, m2s):
        tot = count + n
        delta = mu - mean
        mean += delta * n / tot
        M2 += m2 + delta * delta * count * n / tot
        count = tot
    return M2 / (count - 1) if count > 1 else math.nan


def run_ensemble(cfg: EnsembleConfig, threads: Optional[int] = None, first_index: int = 0) -> EnsembleResult:
    """Run ``cfg.M`` seeded instances; divergent instances are reported, not averaged."""
    _set_threads(threads)
    idx = np.arange(first_index, first_index + cfg.M)
    ics = draw_ics(cfg.ic_dist, cfg.base_seed, idx)
    out = run_batch(cfg.scheme, cfg.system, ics, cfg.traj.dt, cfg.traj.n_spinup, cfg.traj.n_sampling)
    ok = out.ok
    J = out.J[ok]
    mean = float(np.mean(J)) if J.size else math.nan
    var = float(np.var(J, ddof=1)) if J.size > 1 else math.nan
    stderr = math.sqrt(var / J.size) if J.size > 1 else math.nan
    sig2 = _pooled_variance(out.g_mean[ok], out.g_m2[ok], out.n_sampling)
    return EnsembleResult(out.J.copy(), mean, var, stderr, sig2, idx[~ok], cfg)


def compute_reference(cfg: EnsembleConfig, threads: Optional[int] = None) -> ReferenceResult:
    """Ensemble-mean reference value with a 95% confidence half-width.

    ``sigma_g_hat`` is the pooled standard deviation of the instantaneous
    output over all sampling windows.
    """
    if cfg.M < 2:
        raise ValueError("a reference needs M >= 2 instances for a confidence interval")
    res = run_ensemble(cfg, threads)
    if res.failed.size:
        raise DivergenceError(f"{res.failed.size} reference instances diverged", instances=res.failed)
    ci95 = 1.96 * math.sqrt(res.var_of_J / cfg.M)
    return ReferenceResult(res.mean, ci95, res.var_of_J, math.sqrt(res.sigma_g_sq), cfg.M, cfg.traj.Ts)


def expected_abs_error_sweep(
    cfg: EnsembleConfig,
    grid: Sequence[tuple],
    J_ref: float,
    ref_ci95: Optional[float] = None,
    threads: Optional[int] = None,
) -> ErrorSamples:
    """Monte Carlo estimate of ``E|J_{T,hp} - J_ref|`` at each ``(dt, Ts)``.

    Grid point ``k`` uses base seed ``SeedSequence(cfg.base_seed, (k,))``-derived
    instance streams, independent of the other points. Divergent instances
    are excluded and their fraction reported.

    Raises
    ------
    ReferenceAccuracyError
        If ``ref_ci95`` is given and some measured error is below five times it.
    """
    _set_threads(threads)
    n = len(grid)
    dts = np.empty(n)
    Tss = np.empty(n)
    E = np.empty(n)
    se = np.empty(n)
    Ms = np.empty(n, dtype=np.int64)
    excl = np.empty(n)
    seeds = np.empty(n, dtype=np.uint64)
    for k, (dt, Ts) in enumerate(grid):
        point_seed = int(np.random.SeedSequence(int(cfg.base_seed), spawn_key=(k,)).generate_state(1, np.uint64)[0])
        pc = cfg.with_(traj=TrajectoryConfig(float(dt), cfg.traj.t0, float(Ts)), base_seed=point_seed)
        res = run_ensemble(pc)
        ok = np.ones(pc.M, bool)
        ok[res.failed] = False
        dev = np.abs(res.J_values[ok] - J_ref)
        dts[k], Tss[k], Ms[k], seeds[k] = dt, Ts, pc.M, point_seed
        excl[k] = res.failed.size / pc.M
        E[k] = float(np.mean(dev)) if dev.size else math.nan
        se[k] = float(np.std(dev, ddof=1) / math.sqrt(dev.size)) if dev.size > 1 else math.nan
    samples = ErrorSamples(cfg.scheme.id, dts, Tss, E, se, Ms, excl, float(J_ref), int(cfg.base_seed), seeds)
    if ref_ci95 is not None:
        bad = samples.valid & (E < 5.0 * ref_ci95)
        if np.any(bad):
            raise ReferenceAccuracyError(
                f"{int(bad.sum())} grid points have E_abs_err below 5x the reference ci95 ({ref_ci95:.3g})", samples
            )
    return samples


def ensemble_mean_estimate(cfg: EnsembleConfig, J_ref: Optional[float] = None, first_index: int = 0):
    """``J_MC``, the mean over ``cfg.M`` members, and ``|J_MC - J_ref|``."""
    res = run_ensemble(cfg, first_index=first_index)
    if res.failed.size:
        raise DivergenceError(f"{res.failed.size} ensemble members diverged", instances=res.failed)
    J_mc = float(np.mean(res.J_values))
    return J_mc, (abs(J_mc - J_ref) if J_ref is not None else math.nan)


def monte_carlo_error(
    cfg: EnsembleConfig,
    M_ens: int,
    repetitions: int,
    J_ref: float,
    threads: Optional[int] = None,
):
    """Measured ``E|J_MC - J_ref|`` over independent ensembles of ``M_ens`` members.

    Member ``m`` of repetition ``k`` is instance ``k * M_ens + m``. Returns
    ``(mean abs error, its standard error, array of J_MC)``.
    """
    _set_threads(threads)
    whole = cfg.with_(M=M_ens * repetitions)
    res = run_ensemble(whole)
    if res.failed.size:
        raise DivergenceError(f"{res.failed.size} ensemble members diverged", instances=res.failed)
    J_mc = res.J_values.reshape(repetitions, M_ens).mean(axis=1)
    dev = np.abs(J_mc - J_ref)
    stderr = float(np.std(dev, ddof=1) / math.sqrt(repetitions)) if repetitions > 1 else math.nan
    return float(dev.mean()), stderr, J_mc


def transient_traces(cfg: EnsembleConfig, record_every: int = 1):
    """Output traces ``(t, g)`` from ``t = 0`` for each instance (no spin-up)."""
    cfg = cfg.with_(traj=replace(cfg.traj, t0=0.0))
    traces = []
    for i in range(cfg.M):
        ic = cfg.ic_dist.sample(instance_rng(cfg.base_seed, i))
        r = run_trajectory(cfg.scheme, cfg.system, cfg.traj, ic, record=True, record_every=record_every)
        traces.append(r.sampled_outputs)
    return traces


# --- CSV --------------------------------------------------------------------


def write_sweep_csv(samples: ErrorSamples, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version: {SWEEP_SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(SWEEP_CSV_COLUMNS)
        for k in range(samples.dt.size):
            w.writerow([
                samples.scheme, repr(float(samples.dt[k])), repr(float(samples.Ts[k])), int(samples.M[k]),
                repr(float(samples.E_abs_err[k])), repr(float(samples.E_rel_err_pct[k])),
                repr(float(samples.stderr[k])), repr(float(samples.excluded_fraction[k])), samples.base_seed,
            ])


def read_sweep_csv(path, J_ref: Optional[float] = None) -> ErrorSamples:
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    if tuple(reader.fieldnames or ()) != SWEEP_CSV_COLUMNS:
        raise ValueError(f"unexpected sweep CSV header: {reader.fieldnames}")
    recs = list(reader)
    if not recs:
        raise ValueError(f"sweep CSV {path} has no rows")
    col = lambda name, t=float: np.array([t(r[name]) for r in recs])
    E = col("E_abs_err")
    rel = col("E_rel_err_pct")
    if J_ref is None:
        ok = np.isfinite(rel) & (rel > 0)
        J_ref = float(np.median(100.0 * E[ok] / rel[ok])) if ok.any() else 1.0
    return ErrorSamples(recs[0]["scheme"], col("dt"), col("Ts"), E, col("stderr"), col("M", int),
                        col("excluded_fraction"), float(J_ref), int(recs[0]["base_seed"]))
