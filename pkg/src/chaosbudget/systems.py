"""Autonomous ODE systems and the Lorenz-63 model.

A :class:`SystemDef` bundles numba-compiled kernels so the integrators can
drive them from inside compiled loops. Kernel conventions:

``rhs_kernel(u, params, out)``
    writes ``f(u)`` into ``out``.
``output_kernel(u, params) -> float``
    the scalar output ``g(u)``.
``derivative_kernel(u, params, kmax, out)``
    fills ``out[k - 1]`` with ``d^k u / dt^k`` for ``k = 1..kmax``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numba as nb
import numpy as np

__all__ = [
    "SystemDef",
    "ICDistribution",
    "lorenz_system",
    "lorenz_derivative",
    "linear_decay_system",
    "LORENZ_ALPHA",
    "MAX_LORENZ_DERIVATIVE_ORDER",
]

LORENZ_ALPHA = (10.0, 28.0, 8.0 / 3.0)
MAX_LORENZ_DERIVATIVE_ORDER = 5


@dataclass(frozen=True, eq=False)
class SystemDef:
    """An autonomous ODE ``u' = f(u)`` with scalar output ``g(u)``."""

    name: str
    dimension: int
    rhs_kernel: Callable
    output_kernel: Callable
    params: np.ndarray
    derivative_kernel: Optional[Callable] = None
    max_derivative_order: int = 0
    output_index: Optional[int] = field(default=None)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        params = np.array(self.params, dtype=np.float64)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def _state(self, state) -> np.ndarray:
        u = np.asarray(state, dtype=np.float64)
        if u.shape != (self.dimension,):
            raise ValueError(f"state must have shape ({self.dimension},), got {u.shape}")
        return u

    def rhs(self, state) -> np.ndarray:
        out = np.empty(self.dimension)
        self.rhs_kernel(self._state(state), self.params, out)
        return out

    def output(self, state) -> float:
        return float(self.output_kernel(self._state(state), self.params))

    def derivative(self, state, order: int) -> np.ndarray:
        """Return ``d^order u / dt^order`` at ``state``."""
        if self.derivative_kernel is None:
            raise NotImplementedError(f"system {self.name!r} has no derivative oracle")
        if not 1 <= order <= self.max_derivative_order:
            raise ValueError(
                f"order must be in [1, {self.max_derivative_order}], got {order}"
            )
        out = np.empty((order, self.dimension))
        self.derivative_kernel(self._state(state), self.params, order, out)
        return out[order - 1].copy()


@dataclass(frozen=True, eq=False)
class ICDistribution:
    """Independent normal initial conditions, one ``(mean, std)`` per component."""

    means: np.ndarray
    std_devs: np.ndarray

    def __post_init__(self):
        means = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        stds = np.broadcast_to(
            np.asarray(self.std_devs, dtype=np.float64), means.shape
        ).copy()
        if not np.all(stds > 0):
            raise ValueError("std_devs must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "std_devs", stds)

    @classmethod
    def isotropic(cls, dimension: int, mean: float = 1.0, std: float = 5.0):
        return cls(np.full(dimension, mean), np.full(dimension, std))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.means, self.std_devs)


# --- Lorenz -----------------------------------------------------------------


@nb.njit(cache=True)
def _lorenz_rhs(u, a, out):
    out[0] = a[0] * (u[1] - u[0])
    out[1] = u[0] * (a[1] - u[2]) - u[1]
    out[2] = u[0] * u[1] - a[2] * u[2]


@nb.njit(cache=True)
def _lorenz_output(u, a):
    return u[2]


@nb.njit(cache=True)
def _binomial(n, k):
    c = 1.0
    for i in range(k):
        c = c * (n - i) / (i + 1)
    return c


@nb.njit(cache=True)
def _lorenz_derivatives(u, a, kmax, out):
    # Leibniz rule on the quadratic terms: d^k(xy) = sum_j C(k,j) x^(j) y^(k-j).
    # out[k-1] holds u^(k); u^(0) is the state itself.
    for k in range(1, kmax + 1):
        m = k - 1  # differentiate f(u) m times
        if m == 0:
            x0, x1, x2 = u[0], u[1], u[2]
        else:
            x0, x1, x2 = out[m - 1, 0], out[m - 1, 1], out[m - 1, 2]
        s02 = 0.0
        s01 = 0.0
        for j in range(m + 1):
            c = _binomial(m, j)
            if j == 0:
                p0 = u[0]
            else:
                p0 = out[j - 1, 0]
            if m - j == 0:
                q1, q2 = u[1], u[2]
            else:
                q1, q2 = out[m - j - 1, 1], out[m - j - 1, 2]
            s02 += c * p0 * q2
            s01 += c * p0 * q1
        out[k - 1, 0] = a[0] * (x1 - x0)
        out[k - 1, 1] = a[1] * x0 - s02 - x1
        out[k - 1, 2] = s01 - a[2] * x2


def lorenz_system(alpha=LORENZ_ALPHA) -> SystemDef:
    """Lorenz-63 with output ``g(u) = u[2]``.

    ``alpha`` is ``(sigma, rho, beta)``; the classic chaotic choice
    ``(10, 28, 8/3)`` is the default.
    """
    alpha = tuple(float(a) for a in alpha)
    if len(alpha) != 3:
        raise ValueError("alpha must have three entries")
    return SystemDef(
        name="lorenz",
        dimension=3,
        rhs_kernel=_lorenz_rhs,
        output_kernel=_lorenz_output,
        params=np.array(alpha),
        derivative_kernel=_lorenz_derivatives,
        max_derivative_order=MAX_LORENZ_DERIVATIVE_ORDER,
        output_index=2,
    )


def lorenz_derivative(state, order: int, alpha=LORENZ_ALPHA) -> np.ndarray:
    """Exact ``d^order u / dt^order`` of the Lorenz flow through ``state``, ``order`` in 1..5."""
    if not 1 <= order <= MAX_LORENZ_DERIVATIVE_ORDER:
        raise ValueError(f"order must be in [1, {MAX_LORENZ_DERIVATIVE_ORDER}], got {order}")
    return lorenz_system(alpha).derivative(state, order)


# --- linear test problem ----------------------------------------------------


@nb.njit(cache=True)
def _decay_rhs(u, a, out):
    for i in range(u.shape[0]):
        out[i] = -a[0] * u[i]


@nb.njit(cache=True)
def _decay_output(u, a):
    return u[0]


@nb.njit(cache=True)
def _decay_derivatives(u, a, kmax, out):
    fac = 1.0
    for k in range(1, kmax + 1):
        fac *= -a[0]
        for i in range(u.shape[0]):
            out[k - 1, i] = fac * u[i]


def linear_decay_system(rate: float = 1.0, dimension: int = 1) -> SystemDef:
    """``u' = -rate * u`` with ``g(u) = u[0]``: a non-chaotic verification problem."""
    return SystemDef(
        name="linear_decay",
        dimension=dimension,
        rhs_kernel=_decay_rhs,
        output_kernel=_decay_output,
        params=np.array([float(rate)]),
        derivative_kernel=_decay_derivatives,
        max_derivative_order=16,
        output_index=0,
    )
