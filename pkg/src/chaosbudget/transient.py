"""Bayesian identification of the spin-up transient of an output trace.

Observations are modelled as ``g_n ~ N(J + A exp(-t_n / T), sigma^2)``.
Positive parameters ``T`` and ``sigma`` are handled in log coordinates. The
MAP estimate maximizes the posterior density in the original parameters (no
Jacobian term); the HMC sampler targets the same posterior expressed in
log coordinates, which does include the Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .planner import TransientParams

__all__ = [
    "TraceObservation",
    "PriorSpec",
    "PosteriorResult",
    "TransientBounds",
    "gamma_from_moments",
    "log_posterior",
    "log_posterior_grad",
    "fit_map",
    "sample_hmc",
    "ensemble_transient_bounds",
]

_LOG2PI = math.log(2.0 * math.pi)


@dataclass
class TraceObservation:
    times: np.ndarray
    values: np.ndarray
    discard_before: float = 0.0
    n_samples: Optional[int] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_trace(cls, t, g, discard_before: float = 5.0, n_samples: int = 10000) -> "TraceObservation":
        """Drop ``t < discard_before`` then keep ``n_samples`` equispaced points.

        If fewer points remain than requested, all of them are kept.
        """
        t = np.asarray(t, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        keep = t >= discard_before
        t, g = t[keep], g[keep]
        if t.size > n_samples:
            idx = np.unique(np.round(np.linspace(0, t.size - 1, n_samples)).astype(np.int64))
            t, g = t[idx], g[idx]
        return cls(t, g, discard_before, n_samples)

    def __len__(self):
        return self.values.size


def gamma_from_moments(mu: float, sigma: float) -> tuple[float, float]:
    """Shape/rate ``(alpha, beta)`` of the gamma law with mean ``mu`` and std ``sigma``."""
    if not (mu > 0 and sigma > 0):
        raise ValueError("mu and sigma must be positive")
    return (mu / sigma) ** 2, mu / sigma ** 2


@dataclass(frozen=True)
class PriorSpec:
    J_mean: float
    J_std: float
    sigma_alpha: float
    sigma_beta: float
    A_std: float
    T_alpha: float
    T_beta: float

    @classmethod
    def from_observation(cls, obs: TraceObservation, T_mean: float = 10.0, T_std: float = 10.0, sigma_rel_std: float = 0.1) -> "PriorSpec":
        """Priors centred on naive moments of the trace.

        ``A_lambda`` gets a zero-mean normal whose standard deviation is the
        trace's range ``max(g) - min(g)``.
        """
        g = obs.values
        J = float(np.mean(g))
        floor = 1e-9 * max(1.0, abs(J))
        s = max(float(np.std(g, ddof=1)) if g.size > 1 else 0.0, floor)
        rng_ = max(float(np.max(g) - np.min(g)), floor)
        a_s, b_s = gamma_from_moments(s, sigma_rel_std * s)
        a_t, b_t = gamma_from_moments(T_mean, T_std)
        return cls(J, s, a_s, b_s, rng_, a_t, b_t)

    def shifted(self, c: float) -> "PriorSpec":
        return PriorSpec(self.J_mean + c, self.J_std, self.sigma_alpha, self.sigma_beta, self.A_std, self.T_alpha, self.T_beta)

    def mode(self) -> np.ndarray:
        """Prior mode as ``(A, T, J, sigma)``."""
        s = (self.sigma_alpha - 1) / self.sigma_beta if self.sigma_alpha > 1 else self.sigma_alpha / self.sigma_beta
        T = (self.T_alpha - 1) / self.T_beta if self.T_alpha > 1 else self.T_alpha / self.T_beta
        return np.array([0.0, T, self.J_mean, s])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([
            rng.normal(0.0, self.A_std),
            rng.gamma(self.T_alpha, 1.0 / self.T_beta),
            rng.normal(self.J_mean, self.J_std),
            rng.gamma(self.sigma_alpha, 1.0 / self.sigma_beta),
        ])


@dataclass
class PosteriorResult:
    map_estimate: TransientParams
    log_post_map: float
    samples: Optional[np.ndarray] = None  # (n, 4) columns A, T, J, sigma
    acceptance_rate: float = math.nan
    step_size: float = math.nan
    transient_detected: bool = True
    diagnostics: dict = field(default_factory=dict)


def _vec(params) -> np.ndarray:
    if isinstance(params, TransientParams):
        return np.array([params.A_lambda, params.T_lambda, params.J_inf, params.sigma_g])
    return np.asarray(params, dtype=np.float64)


def _lp_grad(theta, t, g, pr: PriorSpec):
    A, T, J, s = theta
    if not (T > 0 and s > 1e-150) or not np.all(np.isfinite(theta)):
        return -math.inf, np.full(4, np.nan)
    with np.errstate(all="ignore"):
        return _lp_grad_core(A, T, J, s, t, g, pr)


def _lp_grad_core(A, T, J, s, t, g, pr):
    e = np.exp(-t / T)
    res = g - J - A * e
    n = g.size
    ss = float(res @ res)
    s2 = s * s
    lp = -n * math.log(s) - 0.5 * n * _LOG2PI - 0.5 * ss / s2
    dA = float(res @ e) / s2
    et = float(res @ (e * t))
    dT = 0.0 if et == 0.0 else A * et / T / T / s2
    dJ = float(res.sum()) / s2
    ds = -n / s + ss / (s2 * s)
    # priors
    zJ = (J - pr.J_mean) / pr.J_std
    lp += -0.5 * zJ * zJ - math.log(pr.J_std) - 0.5 * _LOG2PI
    dJ += -zJ / pr.J_std
    zA = A / pr.A_std
    lp += -0.5 * zA * zA - math.log(pr.A_std) - 0.5 * _LOG2PI
    dA += -zA / pr.A_std
    lp += pr.sigma_alpha * math.log(pr.sigma_beta) - gammaln(pr.sigma_alpha) + (pr.sigma_alpha - 1) * math.log(s) - pr.sigma_beta * s
    ds += (pr.sigma_alpha - 1) / s - pr.sigma_beta
    lp += pr.T_alpha * math.log(pr.T_beta) - gammaln(pr.T_alpha) + (pr.T_alpha - 1) * math.log(T) - pr.T_beta * T
    dT += (pr.T_alpha - 1) / T - pr.T_beta
    if not math.isfinite(lp):
        return -math.inf, np.full(4, np.nan)
    return lp, np.array([dA, dT, dJ, ds])


def log_posterior(params, obs: TraceObservation, priors: PriorSpec) -> float:
    """Log posterior density; ``-inf`` outside ``T_lambda > 0, sigma_g > 0``."""
    return _lp_grad(_vec(params), obs.times, obs.values, priors)[0]


def log_posterior_grad(params, obs: TraceObservation, priors: PriorSpec) -> np.ndarray:
    """Analytic gradient of :func:`log_posterior` w.r.t. ``(A, T, J, sigma)``."""
    return _lp_grad(_vec(params), obs.times, obs.values, priors)[1]


# Unconstrained coordinates phi = (A, log T, J, log sigma).


def _to_theta(phi):
    return np.array([phi[0], math.exp(phi[1]), phi[2], math.exp(phi[3])])


def _to_phi(theta):
    return np.array([theta[0], math.log(theta[1]), theta[2], math.log(theta[3])])


def _phi_lp_grad(phi, t, g, pr, jacobian):
    if abs(phi[1]) > 700 or abs(phi[3]) > 700:
        return -math.inf, np.zeros(4)
    theta = _to_theta(phi)
    lp, gr = _lp_grad(theta, t, g, pr)
    gphi = np.array([gr[0], gr[1] * theta[1], gr[2], gr[3] * theta[3]])
    if jacobian:
        lp += phi[1] + phi[3]
        gphi[1] += 1.0
        gphi[3] += 1.0
    return lp, gphi


_LOG_T_BOUNDS = (-50.0, 50.0)


def _log_sigma_bounds(pr: PriorSpec):
    # A perfectly fitted trace drives sigma to zero; stop at a tiny floor.
    return (math.log(1e-6 * pr.J_std), 50.0 + math.log(pr.J_std))


def _maximize(phi0, t, g, pr):
    def f(phi):
        lp, gr = _phi_lp_grad(phi, t, g, pr, False)
        if not math.isfinite(lp):
            return 1e300, np.zeros(4)
        return -lp, -gr

    bounds = [(None, None), _LOG_T_BOUNDS, (None, None), _log_sigma_bounds(pr)]
    phi0 = np.array([np.clip(v, *(b if b[0] is not None else (-np.inf, np.inf))) for v, b in zip(phi0, bounds)])
    sol = minimize(f, phi0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-9})
    return sol.x, -float(sol.fun)


def _data_start(obs: TraceObservation, pr: PriorSpec):
    g, t = obs.values, obs.times
    n = g.size
    J = float(np.mean(g[n // 2:]))
    head = float(np.mean(g[: max(1, n // 50)]))
    T = max(float(t[min(n - 1, n // 20)] - t[0]), 1e-3)
    A = (head - J) * math.exp(min(t[0] / T, 50.0))
    A = float(np.clip(A, -3 * pr.A_std, 3 * pr.A_std))
    s = max(float(np.std(g[n // 2:])), 1e-12 * max(1.0, abs(J)))
    return np.array([A, T, J, s])


def _null_fit(obs: TraceObservation, pr: PriorSpec):
    """Best posterior value with no transient (``A = 0``)."""
    if pr.T_alpha > 1:
        T = (pr.T_alpha - 1) / pr.T_beta
    elif pr.T_alpha == 1:
        T = 1e-12 / pr.T_beta
    else:
        T = pr.T_alpha / pr.T_beta
    t, g = obs.times, obs.values

    def f(x):
        lp, gr = _phi_lp_grad(np.array([0.0, math.log(T), x[0], x[1]]), t, g, pr, False)
        if not math.isfinite(lp):
            return 1e300, np.zeros(2)
        return -lp, -gr[2:]

    lo, hi = _log_sigma_bounds(pr)
    x0 = np.array([pr.J_mean, float(np.clip(math.log(pr.J_std), lo, hi))])
    sol = minimize(f, x0, jac=True, method="L-BFGS-B", bounds=[(None, None), (lo, hi)],
                   options={"ftol": 1e-15, "gtol": 1e-10})
    return np.array([0.0, T, sol.x[0], math.exp(sol.x[1])]), -float(sol.fun)


def fit_map(obs: TraceObservation, priors: Optional[PriorSpec] = None, n_starts: int = 8, seed: int = 0) -> PosteriorResult:
    """Multi-start maximum a posteriori estimate of ``(A_lambda, T_lambda, J_inf, sigma_g)``.

    Starts are the prior mode, a data-informed guess, and ``n_starts`` draws
    from the priors. The result is flagged ``transient_detected=False`` when
    no start improves on the best transient-free fit (``A = 0`` with ``T`` at
    its prior mode), in which case that fit is returned.
    """
    if len(obs) < 10:
        raise ValueError("need at least 10 observations")
    pr = PriorSpec.from_observation(obs) if priors is None else priors
    t, g = obs.times, obs.values
    rng = np.random.default_rng(seed)
    mode = pr.mode()
    starts = [mode.copy(), _data_start(obs, pr)]
    # The gradient in T vanishes at A = 0, so nudge the prior-mode start.
    starts[0][0] = 1e-3 * pr.A_std
    starts += [pr.sample(rng) for _ in range(n_starts)]
    null_theta, lp_null = _null_fit(obs, pr)
    starts.append(null_theta.copy())
    starts[-1][0] = 1e-3 * pr.A_std
    best_phi, best_lp = None, -math.inf
    for th in starts:
        th = th.copy()
        th[1] = max(th[1], 1e-6)
        th[3] = max(th[3], 1e-12)
        phi, lp = _maximize(_to_phi(th), t, g, pr)
        if math.isfinite(lp) and lp > best_lp:
            best_phi, best_lp = phi, lp
    diag = {"log_post_null": lp_null, "n_starts": len(starts)}
    if best_phi is None or not best_lp > lp_null + 1e-6 * max(1.0, abs(lp_null)):
        th, lp = (null_theta, lp_null) if best_phi is None or lp_null >= best_lp else (_to_theta(best_phi), best_lp)
        return PosteriorResult(TransientParams(*map(float, th)), float(lp), transient_detected=False, diagnostics=diag)
    th = _to_theta(best_phi)
    return PosteriorResult(TransientParams(*map(float, th)), float(best_lp), transient_detected=True, diagnostics=diag)


# --- HMC --------------------------------------------------------------------


def _hessian(phi, t, g, pr, h=1e-5):
    H = np.empty((4, 4))
    for i in range(4):
        d = np.zeros(4)
        d[i] = h * max(1.0, abs(phi[i]))
        gp = _phi_lp_grad(phi + d, t, g, pr, True)[1]
        gm = _phi_lp_grad(phi - d, t, g, pr, True)[1]
        H[:, i] = -(gp - gm) / (2 * d[i])
    return 0.5 * (H + H.T)


def _metric(phi, t, g, pr):
    # Inverse metric = Laplace covariance at the starting point, with the
    # curvature spectrum made positive and capped at a 1e8 condition number.
    H = _hessian(phi, t, g, pr)
    if not np.all(np.isfinite(H)):
        return np.eye(4)
    lam, V = np.linalg.eigh(H)
    lam = np.abs(lam)
    lam = np.maximum(lam, 1e-8 * lam.max() if lam.max() > 0 else 1.0)
    return (V / lam) @ V.T


def sample_hmc(
    obs: TraceObservation,
    priors: Optional[PriorSpec] = None,
    n_draws: int = 2000,
    n_warmup: int = 500,
    n_leapfrog: int = 10,
    step_size: Optional[float] = None,
    target_accept: float = 0.8,
    seed: int = 0,
    map_result: Optional[PosteriorResult] = None,
) -> PosteriorResult:
    """Hamiltonian Monte Carlo over ``(A, log T, J, log sigma)``.

    The chain starts at the MAP estimate with a dense mass matrix from the
    local curvature there. During warm-up the step size is tuned by dual
    averaging towards ``target_accept``; a fixed ``step_size`` skips tuning.
    Draws are returned in the original parameters.
    """
    pr = PriorSpec.from_observation(obs) if priors is None else priors
    t, g = obs.times, obs.values
    rng = np.random.default_rng(seed)
    if map_result is None:
        map_result = fit_map(obs, pr, seed=seed)
    phi = _to_phi(_vec(map_result.map_estimate))
    if not map_result.transient_detected:
        # T is unidentified; start where its log-coordinate prior peaks.
        phi[1] = math.log(pr.T_alpha / pr.T_beta)
    cov = _metric(phi, t, g, pr)
    Lp = np.linalg.cholesky(np.linalg.inv(cov))  # momentum ~ N(0, cov^-1)

    def U(x):
        lp, gr = _phi_lp_grad(x, t, g, pr, True)
        return lp, gr

    def kinetic(p):
        return 0.5 * float(p @ cov @ p)

    def leapfrog(x, p, eps, lp, gr):
        p = p + 0.5 * eps * gr
        for i in range(n_leapfrog):
            x = x + eps * (cov @ p)
            lp, gr = U(x)
            if not math.isfinite(lp):
                return x, p, lp, gr
            if i < n_leapfrog - 1:
                p = p + eps * gr
        p = p + 0.5 * eps * gr
        return x, p, lp, gr

    lp, gr = U(phi)
    if not math.isfinite(lp):
        raise ValueError("MAP estimate has non-finite log posterior")

    def accept_prob(eps, x, lp, gr):
        p0 = Lp @ rng.standard_normal(4)
        x1, p1, lp1, gr1 = leapfrog(x, p0, eps, lp, gr)
        with np.errstate(over="ignore", invalid="ignore"):
            dH = (lp1 - kinetic(p1)) - (lp - kinetic(p0))
        if not math.isfinite(dH):
            return 0.0, x1, lp1, gr1
        return min(1.0, math.exp(min(0.0, dH))), x1, lp1, gr1

    tune = step_size is None
    eps = 0.5 / math.sqrt(n_leapfrog) if tune else float(step_size)
    if tune:
        # Reasonable initial step: halve/double until acceptance crosses 1/2.
        a, *_ = accept_prob(eps, phi, lp, gr)
        direction = 1.0 if a > 0.5 else -1.0
        for _ in range(30):
            a, *_ = accept_prob(eps, phi, lp, gr)
            if (a > 0.5) != (direction > 0):
                break
            eps *= 2.0 ** direction
    mu = math.log(10 * eps)
    Hbar, log_eps_bar = 0.0, 0.0
    gamma_, t0_, kappa = 0.05, 10.0, 0.75

    draws = np.empty((n_draws, 4))
    accepts = []
    for it in range(n_warmup + n_draws):
        a, x1, lp1, gr1 = accept_prob(eps, phi, lp, gr)
        if rng.random() < a:
            phi, lp, gr = x1, lp1, gr1
        if it < n_warmup:
            if tune:
                m = it + 1
                Hbar = (1 - 1 / (m + t0_)) * Hbar + (target_accept - a) / (m + t0_)
                log_eps = mu - math.sqrt(m) / gamma_ * Hbar
                w = m ** (-kappa)
                log_eps_bar = w * log_eps + (1 - w) * log_eps_bar
                eps = math.exp(log_eps)
                if it == n_warmup - 1:
                    eps = math.exp(log_eps_bar)
        else:
            accepts.append(a)
            draws[it - n_warmup] = _to_theta(phi)

    acc = float(np.mean(accepts)) if accepts else math.nan
    # Keep the MAP consistent with the chain: polish from any better draw.
    lps = np.array([log_posterior(d, obs, pr) for d in draws])
    best = map_result
    if lps.size and lps.max() > map_result.log_post_map:
        phi_b, lp_b = _maximize(_to_phi(draws[int(np.argmax(lps))]), t, g, pr)
        th = _to_theta(phi_b)
        best = PosteriorResult(TransientParams(*map(float, th)), lp_b, transient_detected=map_result.transient_detected)
    return PosteriorResult(
        best.map_estimate, best.log_post_map, draws, acc, eps, best.transient_detected,
        diagnostics={"ok": bool(acc >= 0.2), "n_warmup": n_warmup, "n_leapfrog": n_leapfrog},
    )


# --- ensembles --------------------------------------------------------------


@dataclass
class TransientBounds:
    T_lambda_bound: float
    A_lambda_bound: float
    T_lambda_map: np.ndarray
    A_lambda_map: np.ndarray
    n_used: int
    n_excluded: int

    def as_params(self) -> TransientParams:
        return TransientParams(self.A_lambda_bound, self.T_lambda_bound)


def ensemble_transient_bounds(
    traces: Sequence[TraceObservation],
    priors: Optional[PriorSpec] = None,
    n_starts: int = 4,
    seed: int = 0,
    min_traces: int = 30,
) -> TransientBounds:
    """Conservative ``(T_lambda, |A_lambda|)`` bounds: mean + 2 std of per-trace MAP values.

    Per-trace priors are built from each trace unless ``priors`` is given.
    Traces without a detected transient are excluded and counted.
    """
    if len(traces) < min_traces:
        raise ValueError(f"need at least {min_traces} traces, got {len(traces)}")
    T_vals, A_vals, excluded = [], [], 0
    for i, obs in enumerate(traces):
        res = fit_map(obs, priors, n_starts=n_starts, seed=seed + i)
        if not res.transient_detected:
            excluded += 1
            continue
        T_vals.append(res.map_estimate.T_lambda)
        A_vals.append(abs(res.map_estimate.A_lambda))
    if not T_vals:
        raise ValueError("no trace showed a transient")
    T_vals = np.array(T_vals)
    A_vals = np.array(A_vals)
    T_b = float(T_vals.mean() + 2 * T_vals.std())
    A_b = float(A_vals.mean() + 2 * A_vals.std())
    return TransientBounds(T_b, A_b, T_vals, A_vals, len(T_vals), excluded)
