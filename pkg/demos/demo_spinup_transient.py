"""
How long to spin up
===================

A trajectory launched far from the attractor needs time to settle. We model
the output during that phase as ``J + A exp(-t / T)`` plus Gaussian noise of
size ``sigma``, fit it per trajectory by maximum a posteriori (MAP)
estimation, look at the uncertainty with Hamiltonian Monte Carlo, and turn
an ensemble of fits into conservative bounds for the planner.
"""

import numpy as np

from chaosbudget import (
    BudgetSpec,
    EnsembleConfig,
    ErrorModelParams,
    TraceObservation,
    TrajectoryConfig,
    ensemble_transient_bounds,
    fit_map,
    lorenz_system,
    optimize_total,
    sample_hmc,
)
from chaosbudget.ensemble import transient_traces
from chaosbudget.systems import ICDistribution

# %%
# Wide initial conditions
# -----------------------
# Forty RK4 runs whose initial states are drawn with standard deviation 100,
# far outside the attractor. Each trace is the output ``u2`` sampled every
# 0.01 time units for 100 units.

ens = EnsembleConfig(lorenz_system(), "rk4", TrajectoryConfig(1e-2, 0.0, 100.0), 40,
                     ic_dist=ICDistribution.isotropic(3, std=100.0), base_seed=7)
traces = [TraceObservation.from_trace(tr[:, 0], tr[:, 1]) for tr in transient_traces(ens)]
print(f"{len(traces)} traces of {len(traces[0])} points (t < 5 discarded)")

# %%
# One trace
# ---------
# The MAP search starts from the prior mode, from a data-based guess and
# from random prior draws. If none beats the best transient-free fit, the
# trace is flagged as showing no transient. Some wide starts land close to
# the attractor and decay before ``t = 5``, so we take the first trace that
# still shows a transient.

for k, obs in enumerate(traces):
    res = fit_map(obs)
    if res.transient_detected:
        break
m = res.map_estimate
print(f"trace {k}: A = {m.A_lambda:.2f}, T = {m.T_lambda:.3f}, J = {m.J_inf:.3f}, sigma = {m.sigma_g:.3f}")

# %%
# Posterior spread
# ----------------
# HMC in log coordinates for ``T`` and ``sigma``. A short chain is enough
# to see how loosely a single noisy trace pins down the decay.

chain = sample_hmc(obs, n_draws=500, n_warmup=300, seed=1, map_result=res)
lo, hi = np.quantile(chain.samples, [0.05, 0.95], axis=0)
print(f"acceptance {chain.acceptance_rate:.2f}")
for name, a, b in zip(("A", "T", "J", "sigma"), lo, hi):
    print(f"  90% interval for {name}: [{a:.3f}, {b:.3f}]")

# %%
# Ensemble bounds
# ---------------
# Mean plus two standard deviations of the per-trace MAP values. Traces
# without a detectable transient are left out and counted.

b = ensemble_transient_bounds(traces, n_starts=4)
print(f"bounds: T < {b.T_lambda_bound:.2f}, |A| < {b.A_lambda_bound:.1f} "
      f"({b.n_used} traces used, {b.n_excluded} without a transient)")

# %%
# Effect on the plan
# ------------------
# The bounds feed straight into the planner. A larger ``T`` buys a longer
# spin-up at the expense of the sampling window.

rk3 = ErrorModelParams(A0=0.978, r=0.553, Cq=2740.0, q=2.96, scheme="rk3")
plan = optimize_total(rk3, b.as_params(), BudgetSpec(1_200_000, 1, "rk3"))
print(f"plan: t0 = {plan.t0_opt:.1f}, Ts = {plan.Ts_opt:.0f}, e = {plan.e_model_opt:.4f}")
