"""Cost-optimal statistics of chaotic ODE simulations.

Integrate a chaotic system with explicit Runge-Kutta schemes, measure how the
error of a long-time average depends on the time step and the sampling
window, fit a two-term error model, and choose the step, spin-up and
sampling times that minimize error under a fixed budget of RHS evaluations.
"""

import warnings

# numba probes an old TBB on some hosts and falls back to another threading
# layer; the fallback is harmless.
warnings.filterwarnings("ignore", message="The TBB threading layer requires TBB", category=Warning)

__version__ = "0.1.0"

from .systems import ICDistribution, SystemDef, linear_decay_system, lorenz_derivative, lorenz_system  # noqa: E402
from .integrators import (  # noqa: E402
    SCHEMES,
    DivergenceError,
    SchemeSpec,
    TrajectoryConfig,
    get_scheme,
    run_trajectory,
    step,
)
from .ensemble import (  # noqa: E402
    EnsembleConfig,
    compute_reference,
    expected_abs_error_sweep,
    monte_carlo_error,
    run_ensemble,
)
from .error_model import (  # noqa: E402
    ErrorModelParams,
    NonDimScales,
    UnidentifiableError,
    derive_scales,
    eval_error_model,
    fit_error_model,
)
from .planner import (  # noqa: E402
    BudgetSpec,
    InfeasibleError,
    OptimalPlan,
    TransientParams,
    attractor_optimum,
    ensemble_optimum,
    eval_total_error,
    optimize_total,
)
from .transient import TraceObservation, fit_map, sample_hmc, ensemble_transient_bounds  # noqa: E402
