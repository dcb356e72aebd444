"""Cost-optimal simulation plans under a budget of right-hand-side evaluations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .error_model import ErrorModelParams, NonDimScales, a0_from_scales
from .integrators import SchemeSpec, get_scheme

__all__ = [
    "BudgetSpec",
    "OptimalPlan",
    "TransientParams",
    "InfeasibleError",
    "TotalErrorScan",
    "convergence_rate",
    "attractor_optimum",
    "ensemble_optimum",
    "eval_total_error",
    "optimal_t0",
    "optimize_total",
    "scan_total_error",
    "cost_scaling_curve",
    "plan_to_dict",
    "save_transient",
    "load_transient",
    "DEFAULT_TRANSIENT_BOUNDS",
]


class InfeasibleError(ValueError):
    """The budget leaves no sampling time."""


@dataclass(frozen=True)
class TransientParams:
    """Spin-up decay ``delta g(t) = A_lambda exp(-t / T_lambda)`` around ``J_inf``."""

    A_lambda: float
    T_lambda: float
    J_inf: float = math.nan
    sigma_g: float = math.nan

    def __post_init__(self):
        if not self.T_lambda > 0:
            raise ValueError("T_lambda must be positive")
        if not (math.isnan(self.sigma_g) or self.sigma_g > 0):
            raise ValueError("sigma_g must be positive")


# Conservative Lorenz bounds (mean + 2 std of per-trace MAP fits).
DEFAULT_TRANSIENT_BOUNDS = TransientParams(A_lambda=38.7, T_lambda=4.03)


@dataclass(frozen=True)
class BudgetSpec:
    U: int
    M_ens: int = 1
    scheme: SchemeSpec = "rk4"

    def __post_init__(self):
        object.__setattr__(self, "scheme", get_scheme(self.scheme))
        if self.M_ens < 1:
            raise ValueError("M_ens must be >= 1")
        if self.U < self.scheme.rhs_evals_per_step:
            raise ValueError("budget U does not cover a single step")

    @property
    def N(self) -> int:
        """Steps per processor."""
        return int(self.U) // self.scheme.rhs_evals_per_step


@dataclass
class OptimalPlan:
    dt_opt: float
    t0_opt: float
    Ts_opt: float
    e_model_opt: float
    n_spinup: int = 0
    n_sampling: int = 0
    scheme: Optional[str] = None
    M_ens: int = 1
    U: Optional[int] = None
    nondim: dict = field(default_factory=dict)

    def rhs_evals(self, scheme=None) -> int:
        sch = get_scheme(scheme or self.scheme)
        return sch.rhs_evals_per_step * (self.n_spinup + self.n_sampling)


def convergence_rate(q):
    """Cost exponent ``q / (2q + 1)`` of the optimal attractor error; exact for integer ``q``."""
    if isinstance(q, (int, Fraction)) and not isinstance(q, bool):
        return Fraction(q, 2 * q + 1)
    return q / (2.0 * q + 1.0)


def _nondim_echo(plan: OptimalPlan, scales: Optional[NonDimScales]):
    if scales is None:
        return {}
    out = {
        "dt_over_Td": plan.dt_opt / scales.T_d,
        "t0_over_Td": plan.t0_opt / scales.T_d,
        "Ts_over_Td": plan.Ts_opt / scales.T_d,
    }
    if scales.sigma_g > 0:
        out["e_over_sigma_g"] = plan.e_model_opt / scales.sigma_g
    return out


def ensemble_optimum(params: ErrorModelParams, scales: NonDimScales, Ns: int, M_ens: int = 1) -> OptimalPlan:
    """Closed-form optimum of ``C_q dt^q + sqrt(2/pi) sigma_g (T_d / (M_ens Ts))^(1/2)`` with ``Ts = Ns dt``.

    The sampling rate is taken at its CLT value ``r = 1/2`` with ``A_0`` implied
    by ``scales``; ``params.A0`` and ``params.r`` are not used.
    """
    if Ns < 1 or M_ens < 1:
        raise ValueError("Ns and M_ens must be >= 1")
    q = params.q
    if not q > 0:
        raise ValueError("q must be positive")
    sg, Td = scales.sigma_g, scales.T_d
    K = q * params.Cq * Td ** q / sg
    x = 2 * q + 1
    base = (1.0 / (2.0 * math.pi))
    dt_nd = base ** (1 / x) * K ** (-2 / x) * M_ens ** (-1 / x) * Ns ** (-1 / x)
    Ts_nd = base ** (1 / x) * K ** (-2 / x) * M_ens ** (-1 / x) * Ns ** (2 * q / x)
    e_nd = base ** (q / x) * (2 + 1 / q) * K ** (1 / x) * M_ens ** (-q / x) * Ns ** (-q / x)
    plan = OptimalPlan(dt_nd * Td, 0.0, Ts_nd * Td, e_nd * sg, 0, int(Ns), None, int(M_ens))
    plan.nondim = _nondim_echo(plan, scales)
    return plan


def attractor_optimum(params: ErrorModelParams, scales: NonDimScales, Ns: int) -> OptimalPlan:
    """Optimal ``(dt, Ts)`` for ``Ns`` sampling steps on the attractor (no spin-up)."""
    return ensemble_optimum(params, scales, Ns, 1)


# --- transient-inclusive model ----------------------------------------------


def _sampling_terms(params, budget, scales, mode):
    if mode == "fitted":
        return params.A0, params.r
    if mode == "clt":
        if scales is None:
            raise ValueError("mode 'clt' needs NonDimScales")
        return a0_from_scales(scales), 0.5
    raise ValueError(f"unknown mode {mode!r}; expected 'fitted' or 'clt'")


def eval_total_error(
    params: ErrorModelParams,
    trans: TransientParams,
    budget: BudgetSpec,
    dt,
    t0,
    mode: str = "fitted",
    scales: Optional[NonDimScales] = None,
):
    """Spin-up + discretization + ensemble sampling error at ``(dt, t0)``.

    ``Ts = N dt - t0`` with ``N`` the steps per processor. In ``"fitted"`` mode
    the sampling term is ``A_0 / sqrt(M_ens) Ts^-r``; ``"clt"`` mode uses
    ``r = 1/2`` and ``A_0`` from ``scales``.
    """
    A0, r = _sampling_terms(params, budget, scales, mode)
    dt = np.asarray(dt, dtype=np.float64)
    t0 = np.asarray(t0, dtype=np.float64)
    Ts = budget.N * dt - t0
    if np.any(Ts <= 0) or np.any(dt <= 0) or np.any(t0 < 0):
        raise InfeasibleError("spin-up consumes the whole budget (t0 >= N dt) or inputs invalid")
    e = (
        abs(trans.A_lambda) * trans.T_lambda / Ts * np.exp(-t0 / trans.T_lambda)
        + params.Cq * dt ** params.q
        + A0 / math.sqrt(budget.M_ens) * Ts ** (-r)
    )
    return float(e) if e.ndim == 0 else e


def optimal_t0(params, trans, budget, dt: float, mode="fitted", scales=None) -> tuple[float, float]:
    """Best spin-up time for a fixed ``dt``; returns ``(t0, e)``."""
    span = budget.N * dt
    f = lambda t0: eval_total_error(params, trans, budget, dt, t0, mode, scales)
    e_zero = f(0.0)
    if trans.A_lambda == 0:
        return 0.0, e_zero
    hi = span * (1.0 - 1e-9)
    # The transient term's own optimum bounds the search; beyond it only Ts shrinks.
    sol = minimize_scalar(f, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-10 * max(span, 1.0)})
    if sol.fun < e_zero:
        return float(sol.x), float(sol.fun)
    return 0.0, e_zero


def _plan_from(params, trans, budget, dt, t0, e, mode, scales):
    N = budget.N
    n0 = min(int(round(t0 / dt)), N - 1)
    plan = OptimalPlan(
        dt_opt=float(dt), t0_opt=float(t0), Ts_opt=float(N * dt - t0), e_model_opt=float(e),
        n_spinup=n0, n_sampling=N - n0, scheme=budget.scheme.id, M_ens=budget.M_ens, U=int(budget.U),
    )
    plan.nondim = _nondim_echo(plan, scales)
    return plan


def optimize_total(
    params: ErrorModelParams,
    trans: TransientParams,
    budget: BudgetSpec,
    mode: str = "fitted",
    scales: Optional[NonDimScales] = None,
    dt_bounds=(1e-8, 10.0),
    n_grid: int = 161,
) -> OptimalPlan:
    """Minimize the transient-inclusive error over ``(dt, t0)``.

    Nested search: for every ``dt`` the spin-up time is optimized in 1-D, and
    the outer problem in ``log dt`` is bracketed on a log grid then refined by
    bounded Brent iteration.
    """
    inner = lambda ldt: optimal_t0(params, trans, budget, math.exp(ldt), mode, scales)[1]
    grid = np.linspace(math.log(dt_bounds[0]), math.log(dt_bounds[1]), n_grid)
    vals = np.array([inner(g) for g in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    sol = minimize_scalar(inner, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    ldt = float(sol.x) if sol.fun <= vals[k] else float(grid[k])
    dt = math.exp(ldt)
    t0, e = optimal_t0(params, trans, budget, dt, mode, scales)
    return _plan_from(params, trans, budget, dt, t0, e, mode, scales)


@dataclass
class TotalErrorScan:
    dt_grid: np.ndarray
    t0_grid: np.ndarray
    e: np.ndarray  # (n_dt, n_t0); NaN where infeasible
    feasible: np.ndarray
    best_t0: np.ndarray  # optimal t0 for each dt
    best_e: np.ndarray


def scan_total_error(params, trans, budget, dt_grid, t0_grid, mode="fitted", scales=None) -> TotalErrorScan:
    """Dense evaluation over ``dt_grid x t0_grid``; infeasible cells are NaN and marked."""
    dt_grid = np.asarray(dt_grid, dtype=np.float64)
    t0_grid = np.asarray(t0_grid, dtype=np.float64)
    if np.any(dt_grid <= 0) or np.any(t0_grid < 0):
        raise ValueError("grids must be positive")
    if np.any(np.diff(dt_grid) <= 0) or np.any(np.diff(t0_grid) <= 0):
        raise ValueError("grids must be sorted ascending")
    D, T0 = np.meshgrid(dt_grid, t0_grid, indexing="ij")
    feasible = budget.N * D - T0 > 0
    e = np.full(D.shape, np.nan)
    e[feasible] = eval_total_error(params, trans, budget, D[feasible], T0[feasible], mode, scales)
    best = np.array([optimal_t0(params, trans, budget, d, mode, scales) for d in dt_grid])
    return TotalErrorScan(dt_grid, t0_grid, e, feasible, best[:, 0], best[:, 1])


def cost_scaling_curve(params, trans, scheme, U_values, M_ens: int = 1, mode="fitted", scales=None):
    """Optimal model error for each budget ``U`` (per processor)."""
    return np.array([
        optimize_total(params, trans, BudgetSpec(int(U), M_ens, scheme), mode, scales).e_model_opt for U in U_values
    ])


# --- persistence ------------------------------------------------------------


def plan_to_dict(plan: OptimalPlan) -> dict:
    return {
        "schema_version": 1,
        "scheme": plan.scheme,
        "U": plan.U,
        "M_ens": plan.M_ens,
        "dt_opt": plan.dt_opt,
        "t0_opt": plan.t0_opt,
        "Ts_opt": plan.Ts_opt,
        "e_model_opt": plan.e_model_opt,
        "n_spinup": plan.n_spinup,
        "n_sampling": plan.n_sampling,
        "nondim": plan.nondim,
    }


def save_transient(trans: TransientParams, path, log_post: Optional[float] = None, method: str = "map") -> None:
    doc = {
        "schema_version": 1,
        "A_lambda": trans.A_lambda,
        "T_lambda": trans.T_lambda,
        "J_inf": None if math.isnan(trans.J_inf) else trans.J_inf,
        "sigma_g": None if math.isnan(trans.sigma_g) else trans.sigma_g,
        "log_post": log_post,
        "method": method,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_transient(path) -> TransientParams:
    with open(path) as fh:
        doc = json.load(fh)
    missing = [k for k in ("A_lambda", "T_lambda") if k not in doc]
    if missing:
        raise KeyError(f"transient file {path} lacks keys: {', '.join(missing)}")
    nan = lambda v: math.nan if v is None else float(v)
    return TransientParams(float(doc["A_lambda"]), float(doc["T_lambda"]), nan(doc.get("J_inf")), nan(doc.get("sigma_g")))
