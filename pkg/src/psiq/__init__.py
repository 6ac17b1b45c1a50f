"""psiq: two-class processor-sharing queue with an impatient class.

Exact stationary solves on truncated lattices, event-driven simulation,
closed-form heavy-traffic asymptotics, and the closed-loop mobile-cell
model driven by the abandonment-feedback fixed point.
"""

__version__ = "0.1.0"

from .model import (
    DerivedConstants,
    ModelParams,
    StabilityError,
    State,
    derive_constants,
    load_config,
    params_from_dict,
    params_from_scale,
    total_outflow,
    transition_rates,
)
from .exact import (
    ConditionalDistribution,
    ConvergenceError,
    Moments,
    StationaryDistribution,
    TruncatedGrid,
    auto_grid,
    build_generator,
    conditional,
    generating_function,
    marginals,
    moments,
    permanent_ps_distribution,
    permanent_ps_log_pmf,
    quasi_stationary,
    solve_stationary,
    write_pmf_csv,
)
from .asymptotics import (
    AsymptoticPoint,
    GaussianLimit,
    asymptotic_point,
    decay_H,
    decay_K,
    gaussian_limit,
    gen_fun_asymptotic,
    laplace_expand,
    log_marginal_asymptotic,
    log_sharp_density,
    log_sharp_permanent,
    marginal_asymptotics,
    phi,
    prefactor_g,
    psi,
    sharp_density,
    sharp_permanent,
)
from .simulate import (
    DominanceReport,
    EmpiricalDistribution,
    PathAccumulator,
    SimConfig,
    coupled_dominance_run,
    estimate_stationary,
    simulate_path,
    total_variation,
)
from .mobile import (
    GrowthReport,
    MobileScenario,
    a_mob,
    mean_growth_check,
    rho_total,
    solve_fixed_point,
    throughput_asymptotics,
    throughputs,
)
