"""
Measuring the error of a time average
=====================================

The planner needs an error model. Here we measure one for RK4 on the Lorenz
system from scratch. A reference ensemble gives the exact mean and its
scales; an error sweep over ``(dt, Ts)`` gives the data; a log-space fit
gives ``(A0, r, Cq, q)``. The result then drives a budget plan, and a fresh
Monte Carlo run checks the plan. Runtime is about a minute on one core.
"""

import numpy as np

from chaosbudget import (
    BudgetSpec,
    EnsembleConfig,
    TrajectoryConfig,
    compute_reference,
    derive_scales,
    expected_abs_error_sweep,
    fit_error_model,
    lorenz_system,
    monte_carlo_error,
    optimize_total,
)
from chaosbudget.ensemble import J_REF_LORENZ
from chaosbudget.error_model import FIT_WINDOWS
from chaosbudget.planner import DEFAULT_TRANSIENT_BOUNDS

L = lorenz_system()

# %%
# A reference ensemble
# --------------------
# 64 RK4 trajectories from random initial conditions, averaged over 500 time
# units after 100 units of spin-up. The spread of their averages fixes the
# decorrelation time ``T_d`` through ``Var[J_T] = T_d sigma_g^2 / T_s``.

ref_cfg = EnsembleConfig(L, "rk4", TrajectoryConfig(5e-3, 100.0, 500.0), 64, base_seed=1)
ref = compute_reference(ref_cfg)
scales = derive_scales(ref.var_of_J, ref.Ts, ref.sigma_g_hat)
print(f"J_ref = {ref.J_ref:.4f} +/- {ref.ci95:.4f}   (high-precision value {J_REF_LORENZ})")
print(f"sigma_g = {scales.sigma_g:.3f}, T_d = {scales.T_d:.4f}")

# %%
# An error sweep
# --------------
# Fixing the number of sampling steps ``Ns = Ts / dt`` at 1e5 ties the two
# error terms together so both regimes show up in a single line of points.
# Each grid point gets its own seed stream, so points are independent.

dts = np.geomspace(1e-3, 0.09, 10)
sweep_cfg = EnsembleConfig(L, "rk4", TrajectoryConfig(1e-2, 100.0, 10.0), 200, base_seed=11)
samples = expected_abs_error_sweep(sweep_cfg, [(d, 1e5 * d) for d in dts], J_REF_LORENZ)
for d, Ts, E, se in zip(samples.dt, samples.Ts, samples.E_abs_err, samples.stderr):
    print(f"dt = {d:8.2e}  Ts = {Ts:8.1f}  E|e| = {E:.3e} +/- {se:.1e}")

# %%
# Fitting the model
# -----------------
# Only points inside the asymptotic window (``dt <= 0.09``) enter the fit.

fit = fit_error_model(samples, window=FIT_WINDOWS["rk4"], order=4)
print(f"A0 = {fit.A0:.3g}, r = {fit.r:.3f}, Cq = {fit.Cq:.3g}, q = {fit.q:.3f}")

# %%
# Planning and checking
# ---------------------
# With ``U = 1.2e5`` evaluations the planner picks a step, a spin-up and a
# window. 100 fresh repetitions at that plan measure the actual error.

plan = optimize_total(fit, DEFAULT_TRANSIENT_BOUNDS, BudgetSpec(120_000, 1, "rk4"))
print(f"plan: dt = {plan.dt_opt:.4f}, t0 = {plan.t0_opt:.2f}, Ts = {plan.Ts_opt:.1f}, model e = {plan.e_model_opt:.4f}")
dt = plan.dt_opt
check = EnsembleConfig(L, "rk4", TrajectoryConfig(dt, plan.n_spinup * dt, plan.n_sampling * dt), 1, base_seed=99)
E, se, _ = monte_carlo_error(check, 1, 100, J_REF_LORENZ)
print(f"measured E|e| = {E:.4f} +/- {se:.4f}  (ratio to model {E / plan.e_model_opt:.2f})")
