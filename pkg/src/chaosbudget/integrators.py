"""Fixed-step explicit Runge-Kutta integration with augmented output quadrature.

The time average of ``g`` is accumulated by integrating the augmented system
``(u, q)`` with ``q' = g(u)`` using the same tableau as the state, so the
quadrature carries the scheme's order. Hot loops are numba kernels generated
per system and cached on the system's kernel functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from .systems import SystemDef

__all__ = [
    "SchemeSpec",
    "SCHEMES",
    "get_scheme",
    "TrajectoryConfig",
    "TrajectoryResult",
    "DivergenceError",
    "step",
    "run_trajectory",
    "run_batch",
    "n_steps",
]


class DivergenceError(RuntimeError):
    """A trajectory produced a non-finite state."""

    def __init__(self, message: str, step_index: int = -1, instances=None):
        super().__init__(message)
        self.step_index = step_index
        self.instances = instances


@dataclass(frozen=True, eq=False)
class SchemeSpec:
    """An explicit Runge-Kutta method given by its Butcher tableau."""

    id: str
    order: int
    rhs_evals_per_step: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __eq__(self, other):
        return isinstance(other, SchemeSpec) and other.id == self.id

    def __hash__(self):
        return hash(self.id)


def _scheme(id, order, A, b, c):
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    c = np.array(c, dtype=np.float64)
    for arr in (A, b, c):
        arr.setflags(write=False)
    return SchemeSpec(id, order, len(b), A, b, c)


SCHEMES = {
    "fe": _scheme("fe", 1, [[0.0]], [1.0], [0.0]),
    # Kutta's third-order method
    "rk3": _scheme(
        "rk3",
        3,
        [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [-1.0, 2.0, 0.0]],
        [1 / 6, 2 / 3, 1 / 6],
        [0.0, 0.5, 1.0],
    ),
    "rk4": _scheme(
        "rk4",
        4,
        [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1.0, 0]],
        [1 / 6, 1 / 3, 1 / 3, 1 / 6],
        [0.0, 0.5, 0.5, 1.0],
    ),
}


def get_scheme(scheme) -> SchemeSpec:
    if isinstance(scheme, SchemeSpec):
        return scheme
    key = str(scheme).lower()
    if key not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    return SCHEMES[key]


def n_steps(duration: float, dt: float) -> int:
    """Whole steps covering ``duration`` (round to nearest)."""
    return int(round(duration / dt))


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    t0: float
    Ts: float
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if self.t0 < 0:
            raise ValueError("t0 must be nonnegative")
        if self.n_sampling < 1:
            raise ValueError("Ts/dt must round to at least one step")

    @property
    def n_spinup(self) -> int:
        return n_steps(self.t0, self.dt)

    @property
    def n_sampling(self) -> int:
        return n_steps(self.Ts, self.dt)


@dataclass
class TrajectoryResult:
    J_That: float
    final_state: np.ndarray
    n_steps_total: int
    sampled_outputs: Optional[np.ndarray] = None  # (n, 2) columns t, g
    sampled_states: Optional[np.ndarray] = None  # (n, d)


# --- kernel factory ---------------------------------------------------------

_KERNELS: dict = {}


def _make_kernels(rhs, g):
    @nb.njit
    def rk_step(A, b, p, u, dt, k, tmp, want_g):
        # Advances u in place; returns sum_i b_i g(U_i) over the stage states.
        s = b.shape[0]
        d = u.shape[0]
        gsum = 0.0
        for i in range(s):
            for j in range(d):
                v = u[j]
                for l in range(i):
                    a = A[i, l]
                    if a != 0.0:
                        v += dt * a * k[l, j]
                tmp[j] = v
            rhs(tmp, p, k[i])
            if want_g:
                gsum += b[i] * g(tmp, p)
        for j in range(d):
            v = 0.0
            for i in range(s):
                v += b[i] * k[i, j]
            u[j] += dt * v
        return gsum

    @nb.njit
    def finite(u):
        acc = 0.0
        for j in range(u.shape[0]):
            acc += u[j]
        return math.isfinite(acc)

    @nb.njit
    def one_step(A, b, p, u0, dt):
        u = u0.copy()
        k = np.empty((b.shape[0], u.shape[0]))
        tmp = np.empty(u.shape[0])
        gq = rk_step(A, b, p, u, dt, k, tmp, True)
        return u, gq

    @nb.njit
    def integrate(A, b, p, u, dt, n0, ns, k, tmp):
        # Returns (q, sum g, sum g^2 about running mean via Welford, fail index).
        for n in range(n0):
            rk_step(A, b, p, u, dt, k, tmp, False)
            if not finite(u):
                return 0.0, 0.0, 0.0, n
        q = 0.0
        mean = 0.0
        m2 = 0.0
        for n in range(ns):
            # instantaneous output statistics at step points t0 + n dt
            gv = g(u, p)
            delta = gv - mean
            mean += delta / (n + 1)
            m2 += delta * (gv - mean)
            q += dt * rk_step(A, b, p, u, dt, k, tmp, True)
            if not finite(u):
                return 0.0, 0.0, 0.0, n0 + n
        return q, mean, m2, -1

    @nb.njit(parallel=True)
    def batch(A, b, p, ics, dt, n0, ns):
        M, d = ics.shape
        s = b.shape[0]
        J = np.empty(M)
        gmean = np.empty(M)
        gm2 = np.empty(M)
        fail = np.empty(M, dtype=np.int64)
        finals = np.empty((M, d))
        for m in nb.prange(M):
            u = ics[m].copy()
            k = np.empty((s, d))
            tmp = np.empty(d)
            q, mean, m2, f = integrate(A, b, p, u, dt, n0, ns, k, tmp)
            J[m] = q / (ns * dt)
            gmean[m] = mean
            gm2[m] = m2
            fail[m] = f
            for j in range(d):
                finals[m, j] = u[j]
        return J, gmean, gm2, fail, finals

    @nb.njit
    def trajectory(A, b, p, u0, dt, n0, ns, stride, record):
        d = u0.shape[0]
        u = u0.copy()
        k = np.empty((b.shape[0], d))
        tmp = np.empty(d)
        nrec = ns // stride + 1 if record else 0
        rec = np.empty((nrec, d))
        for n in range(n0):
            rk_step(A, b, p, u, dt, k, tmp, False)
            if not finite(u):
                return 0.0, u, rec, n
        q = 0.0
        r = 0
        for n in range(ns):
            if record and n % stride == 0:
                rec[r] = u
                r += 1
            q += dt * rk_step(A, b, p, u, dt, k, tmp, True)
            if not finite(u):
                return 0.0, u, rec, n0 + n
        if record and ns % stride == 0:
            rec[r] = u
            r += 1
        return q, u, rec[:r], -1

    return {
        "rk_step": rk_step,
        "finite": finite,
        "one_step": one_step,
        "batch": batch,
        "trajectory": trajectory,
    }


def kernels(system: SystemDef) -> dict:
    key = (system.rhs_kernel, system.output_kernel)
    if key not in _KERNELS:
        _KERNELS[key] = _make_kernels(system.rhs_kernel, system.output_kernel)
    return _KERNELS[key]


def _check_state(system: SystemDef, state) -> np.ndarray:
    u = np.array(state, dtype=np.float64).reshape(system.dimension)
    if not np.all(np.isfinite(u)):
        raise ValueError("state must be finite")
    return u


# --- public API -------------------------------------------------------------


def step(scheme, system: SystemDef, state, dt: float) -> np.ndarray:
    """Advance ``state`` by one explicit step of size ``dt``.

    A non-finite result is returned as-is; the caller decides whether that is
    a divergence.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    sch = get_scheme(scheme)
    u, _ = kernels(system)["one_step"](sch.A, sch.b, system.params, _check_state(system, state), float(dt))
    return u


def run_trajectory(
    scheme,
    system: SystemDef,
    cfg: TrajectoryConfig,
    ic,
    record: bool = False,
    record_every: int = 1,
) -> TrajectoryResult:
    """Spin up for ``t0`` then accumulate the time average of ``g`` over ``Ts``.

    With ``record`` set, the state at every ``record_every``-th sampling step
    (from ``t0`` through ``t0 + Ts``) is kept.

    Raises
    ------
    DivergenceError
        If the state becomes non-finite; ``step_index`` gives the failing step.
    """
    sch = get_scheme(scheme)
    u0 = _check_state(system, ic)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    n0, ns = cfg.n_spinup, cfg.n_sampling
    q, u, rec, fail = kernels(system)["trajectory"](
        sch.A, sch.b, system.params, u0, float(cfg.dt), n0, ns, int(record_every), bool(record)
    )
    if fail >= 0:
        raise DivergenceError(f"trajectory diverged at step {fail}", step_index=int(fail))
    result = TrajectoryResult(J_That=q / (ns * cfg.dt), final_state=u, n_steps_total=n0 + ns)
    if record:
        t = cfg.n_spinup * cfg.dt + cfg.dt * record_every * np.arange(len(rec))
        gk = system.output_kernel
        gvals = np.array([gk(row, system.params) for row in rec]) if system.output_index is None else rec[:, system.output_index].copy()
        result.sampled_states = rec
        result.sampled_outputs = np.column_stack([t, gvals])
    return result


@dataclass
class BatchResult:
    J: np.ndarray
    g_mean: np.ndarray
    g_m2: np.ndarray
    fail_step: np.ndarray  # -1 where the instance completed
    final_states: np.ndarray
    n_sampling: int

    @property
    def ok(self) -> np.ndarray:
        return self.fail_step < 0


def run_batch(scheme, system: SystemDef, ics, dt: float, n_spinup: int, n_sampling: int) -> BatchResult:
    """Integrate many independent trajectories in parallel.

    Every instance is computed independently of the others, so results do
    not depend on the worker count.
    """
    sch = get_scheme(scheme)
    ics = np.ascontiguousarray(np.atleast_2d(np.asarray(ics, dtype=np.float64)))
    if ics.shape[1] != system.dimension:
        raise ValueError("ics must have shape (M, dimension)")
    if n_sampling < 1:
        raise ValueError("n_sampling must be >= 1")
    J, gmean, gm2, fail, finals = kernels(system)["batch"](
        sch.A, sch.b, system.params, ics, float(dt), int(n_spinup), int(n_sampling)
    )
    return BatchResult(J, gmean, gm2, fail, finals, int(n_sampling))
