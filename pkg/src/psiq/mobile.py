"""Closed-loop mobile-cell model built on the two-class PS queue.

Impatient ("moving") customers that leave the cell re-enter the network
and, in a balanced cell, come back at the same average rate: the total
impatient arrival rate splits as beta = beta_ex + beta_net with the
feedback rate pinned by the balance condition

    theta * E[M] = beta_net,

a fixed-point equation since E[M] itself depends on beta_net.  It has a
unique solution iff the total exogenous load rho_tot = alpha/mu +
beta_ex/nu is below 1.  As rho_tot -> 1 the solved system enters the
heavy-traffic regime with effective scale

    A_mob = -log(1 - rho_tot) / H(0,0),      H(0,0) = 1 - log(1 - rho),

so mean occupancies grow only logarithmically in 1/(1 - rho_tot).
"""

import math
from dataclasses import dataclass

from .model import ModelParams, StabilityError
from .exact import (
    ConvergenceError,
    StationaryDistribution,
    auto_grid,
    moments,
    solve_stationary,
)


@dataclass
class MobileScenario:
    """A solved closed-loop parameterization.

    Holds the exogenous rates, the load rho_tot, the fixed-point feedback
    rate beta_net, the induced open-queue parameters (beta = beta_ex +
    beta_net) and the stationary solution used to verify the balance
    residual.
    """

    alpha: float
    beta_ex: float
    mu: float
    nu: float
    theta: float
    rho_tot: float
    beta_net: float
    solved_params: ModelParams
    dist: StationaryDistribution
    fp_residual: float
    fp_iterations: int

    @property
    def mean_n(self) -> float:
        return moments(self.dist).mean_n

    @property
    def mean_m(self) -> float:
        return moments(self.dist).mean_m

    @property
    def empty_probability(self) -> float:
        return float(self.dist.pmf[0, 0])


def rho_total(alpha: float, beta_ex: float, mu: float, nu: float) -> float:
    if mu <= 0 or nu <= 0:
        raise ValueError("mu and nu must be strictly positive")
    return alpha / mu + beta_ex / nu


def solve_fixed_point(
    alpha: float,
    beta_ex: float,
    mu: float,
    nu: float,
    theta: float,
    tol: float = 1e-8,
    damping: float = 0.5,
    beta_net0: float = 0.0,
    max_iter: int = 3000,
    solver_tol: float = 1e-11,
) -> MobileScenario:
    """Solve the balance fixed point by damped successive substitution.

    Iterates beta_net <- (1-damping)*beta_net + damping*theta*E[M], each
    step re-solving the stationary distribution exactly under beta =
    beta_ex + beta_net (the truncation grid is re-sized every iterate
    because the scale A moves with beta_net).  Convergence is declared on
    the balance residual |theta*E[M] - beta_net| <= tol.

    Raises ``StabilityError`` if rho_tot >= 1 (no solution exists) and
    ``ConvergenceError`` (with the residual history) on a exhausted
    iteration budget.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    rt = rho_total(alpha, beta_ex, mu, nu)
    if rt >= 1.0:
        raise StabilityError(f"rho_tot = {rt} >= 1: the fixed point has no solution")
    if alpha / mu >= 1.0:
        raise StabilityError(f"rho = {alpha / mu} >= 1")
    if beta_net0 < 0:
        raise ValueError("beta_net0 must be non-negative")

    beta_net = float(beta_net0)
    history = []
    dist = None
    for it in range(1, max_iter + 1):
        params = ModelParams(alpha=alpha, beta=beta_ex + beta_net, mu=mu, nu=nu, theta=theta)
        dist = solve_stationary(params, grid=auto_grid(params), tol=solver_tol)
        target = theta * moments(dist).mean_m
        residual = abs(target - beta_net)
        history.append(residual)
        if residual <= tol:
            return MobileScenario(
                alpha=alpha,
                beta_ex=beta_ex,
                mu=mu,
                nu=nu,
                theta=theta,
                rho_tot=rt,
                beta_net=beta_net,
                solved_params=params,
                dist=dist,
                fp_residual=residual,
                fp_iterations=it,
            )
        beta_net = (1.0 - damping) * beta_net + damping * target
    raise ConvergenceError(
        f"fixed point not converged after {max_iter} iterations "
        f"(last residual {history[-1]:.3e})",
        residuals=history,
    )


def a_mob(rho_tot: float, rho: float) -> float:
    """Heavy-traffic scale of the closed loop: -log(1-rho_tot)/(1 - log(1-rho))."""
    if not 0.0 <= rho_tot < 1.0:
        raise ValueError(f"rho_tot must lie in [0, 1), got {rho_tot}")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    h00 = 1.0 - math.log1p(-rho)
    return -math.log1p(-rho_tot) / h00


def throughputs(scenario: MobileScenario) -> tuple[float, float]:
    """Efficient per-class throughputs (gamma, Gamma) of the solved loop.

        gamma = rho / E[N]
        Gamma = (rho_tot - rho + beta_net/nu) / E[M] - theta/nu

    computed from the exact stationary means of the solved scenario.
    """
    rho = scenario.alpha / scenario.mu
    mom = moments(scenario.dist)
    if mom.mean_n <= 0.0 or mom.mean_m <= 0.0:
        raise ValueError("mean occupancy is zero: throughputs undefined for an empty system")
    gamma = rho / mom.mean_n
    big_gamma = (
        scenario.rho_tot - rho + scenario.beta_net / scenario.nu
    ) / mom.mean_m - scenario.theta / scenario.nu
    return gamma, big_gamma


def throughput_asymptotics(rho: float, rho_tot: float) -> tuple[float, float]:
    """Heavy-traffic limits of the throughputs as rho_tot -> 1:

        gamma ~ -(1 - log(1-rho)) * (1-rho)    / log(1-rho_tot)
        Gamma ~ -(1 - log(1-rho)) * (rho_tot-rho) / log(1-rho_tot)
    """
    if not 0.0 <= rho < 1.0 or not 0.0 <= rho_tot < 1.0:
        raise ValueError("rho and rho_tot must lie in [0, 1)")
    h00 = 1.0 - math.log1p(-rho)
    denom = math.log1p(-rho_tot)
    return -h00 * (1.0 - rho) / denom, -h00 * (rho_tot - rho) / denom


@dataclass
class GrowthRow:
    rho_tot: float
    a_mob: float
    beta_net: float
    mean_n: float
    mean_m: float
    ratio_n: float  # E[N] / (A_mob * x_star)
    ratio_m: float  # E[M] / A_mob


@dataclass
class GrowthReport:
    rows: list[GrowthRow]
    ratio_n_monotone_to_1: bool
    ratio_m_monotone_to_1: bool


def mean_growth_check(
    alpha: float,
    mu: float,
    nu: float,
    theta: float,
    rho_tot_list,
    **fixed_point_kwargs,
) -> GrowthReport:
    """Sweep rho_tot toward 1 at fixed rho and tabulate the occupancy ratios
    E[N]/(A_mob*x_star) and E[M]/A_mob.

    The exogenous impatient rate for each sweep point is beta_ex =
    nu*(rho_tot - rho).  Logarithmic growth shows up as both ratio columns
    drifting monotonically toward 1; the report carries per-column
    monotonicity flags (trend indicators, not a fixed tolerance).
    """
    rho = alpha / mu
    if not 0.0 < rho < 1.0:
        raise StabilityError(f"rho = {rho} must lie in (0, 1) for the sweep")
    x_star = rho / (1.0 - rho)
    rows = []
    for rt in rho_tot_list:
        if not rho < rt < 1.0:
            raise ValueError(f"sweep point rho_tot = {rt} must lie in (rho, 1)")
        beta_ex = nu * (rt - rho)
        scen = solve_fixed_point(alpha, beta_ex, mu, nu, theta, **fixed_point_kwargs)
        am = a_mob(rt, rho)
        rows.append(
            GrowthRow(
                rho_tot=rt,
                a_mob=am,
                beta_net=scen.beta_net,
                mean_n=scen.mean_n,
                mean_m=scen.mean_m,
                ratio_n=scen.mean_n / (am * x_star),
                ratio_m=scen.mean_m / am,
            )
        )

    def toward_1(vals):
        gaps = [abs(v - 1.0) for v in vals]
        return all(b < a for a, b in zip(gaps, gaps[1:]))

    ordered = sorted(rows, key=lambda r: r.rho_tot)
    return GrowthReport(
        rows=rows,
        ratio_n_monotone_to_1=toward_1([r.ratio_n for r in ordered]),
        ratio_m_monotone_to_1=toward_1([r.ratio_m for r in ordered]),
    )
