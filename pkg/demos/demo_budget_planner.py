"""
Spending a fixed budget of RHS evaluations
==========================================

A long-time average of a chaotic simulation carries two errors. The time
step adds a bias that grows like ``dt**q``; the finite averaging window adds
a statistical error that shrinks like ``Ts**-r``. For a fixed number of
right-hand-side evaluations the two pull in opposite directions. This script
walks through the planner that picks the best split, starting from error
model fits of the Lorenz system.
"""

import numpy as np

from chaosbudget import BudgetSpec, ErrorModelParams, TransientParams, attractor_optimum, derive_scales, optimize_total
from chaosbudget.planner import DEFAULT_TRANSIENT_BOUNDS, convergence_rate, cost_scaling_curve, scan_total_error

# %%
# Fitted error models
# -------------------
# Error-model parameters for the three schemes, measured on the Lorenz
# output ``g = u2`` with long sampling windows.

fits = {
    "fe": ErrorModelParams(A0=1.52, r=0.693, Cq=714.6, q=1.273, scheme="fe"),
    "rk3": ErrorModelParams(A0=0.978, r=0.553, Cq=2740.0, q=2.96, scheme="rk3"),
    "rk4": ErrorModelParams(A0=0.918, r=0.538, Cq=165000.0, q=5.02, scheme="rk4"),
}
scales = derive_scales(var_of_J=1.1692e-4, Ts_ref=6646.9, sigma_g_hat=np.sqrt(74.34804))
print(f"decorrelation time T_d = {scales.T_d:.4g}, output std sigma_g = {scales.sigma_g:.4g}")

# %%
# On the attractor
# ----------------
# Ignoring spin-up, the optimum has a closed form. The optimal error falls
# like ``Ns**-(q / (2q + 1))`` in the number of sampling steps, which tends to
# the Monte Carlo rate 1/2 only as the order grows.

for q in range(1, 6):
    print(f"q = {q}: optimal error ~ Ns^-{convergence_rate(q)}")

for scheme, p in fits.items():
    plan = attractor_optimum(p, scales, 400_000)
    print(f"{scheme}: Ns = 4e5 -> dt = {plan.dt_opt:.3g}, Ts = {plan.Ts_opt:.4g}, e = {plan.e_model_opt:.3g}")

# %%
# Including spin-up
# -----------------
# Trajectories start off the attractor. A decaying transient
# ``A exp(-t / T)`` biases the average unless enough time is spent in
# spin-up first. The default transient bounds are conservative values for
# wide initial conditions.

print("transient bounds:", DEFAULT_TRANSIENT_BOUNDS)
for scheme, p in fits.items():
    plan = optimize_total(p, DEFAULT_TRANSIENT_BOUNDS, BudgetSpec(1_200_000, 1, scheme))
    print(f"{scheme}: dt = {plan.dt_opt:.3g}, t0 = {plan.t0_opt:.3g}, Ts = {plan.Ts_opt:.4g}, "
          f"e = {plan.e_model_opt:.3g} ({plan.n_spinup} + {plan.n_sampling} steps)")

# %%
# Without a transient the spin-up is pure waste and the optimizer drops it.

plan = optimize_total(fits["rk3"], TransientParams(0.0, 4.03), BudgetSpec(1_200_000, 1, "rk3"))
print(f"no transient: t0 = {plan.t0_opt}, e = {plan.e_model_opt:.3g}")

# %%
# The error landscape
# -------------------
# A coarse scan over ``(dt, t0)`` at fixed budget. Cells where the spin-up
# alone exhausts the budget are infeasible.

b = BudgetSpec(120_000, 1, "rk3")
dts = np.geomspace(2e-3, 0.1, 6)
t0s = np.linspace(0.0, 60.0, 7)
scan = scan_total_error(fits["rk3"], DEFAULT_TRANSIENT_BOUNDS, b, dts, t0s)
print("dt \\ t0  " + " ".join(f"{t:8.0f}" for t in t0s))
for i, dt in enumerate(dts):
    cells = " ".join("       -" if not scan.feasible[i, j] else f"{scan.e[i, j]:8.3g}" for j in range(t0s.size))
    print(f"{dt:8.3g}  {cells}")

# %%
# Returns on a larger budget
# --------------------------
# Higher-order schemes turn extra budget into accuracy faster.

U = [1.2e4, 1.2e5, 1.2e6, 1.2e7]
for scheme, p in fits.items():
    curve = cost_scaling_curve(p, DEFAULT_TRANSIENT_BOUNDS, scheme, U)
    print(scheme, " ".join(f"{e:.3g}" for e in curve))
