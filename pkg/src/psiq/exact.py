"""Exact stationary analysis of the truncated two-class PS queue.

The infinite balance equations are truncated to a rectangular lattice
``{0..n_max} x {0..m_max}`` with a reflecting boundary: transitions that
would leave the lattice are suppressed, which keeps the truncated chain a
proper CTMC with its own stationary law.  A boundary-mass diagnostic is
attached to every solution so under-truncation is visible.

The solver is iterative.  Plain power iteration on the uniformized chain
is retained (``method="power"``) but is hopeless at scale: the patient
class relaxes a factor ~A more slowly than the impatient one, so the
uniformized chain's subdominant eigenvalue approaches 1 like 1 - O(1/A^2).
The default ``method="iad"`` wraps Gauss-Seidel sweeps (sparse triangular
solves) with an aggregation/disaggregation correction: both coordinate
marginals are skip-free, so each aggregated chain is a birth-death chain
whose stationary law under the current conditional weights is an O(size)
product formula.  The correction removes exactly the slow marginal error
modes that stall sweep methods on this two-time-scale generator.
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import gammaln

from .model import (
    ModelParams,
    StabilityError,
    departure_rate_impatient,
    derive_constants,
    service_rate_patient,
)


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the residual history."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


@dataclass(frozen=True)
class TruncatedGrid:
    """Rectangular truncation bounds: states (n, m) with n <= n_max, m <= m_max."""

    n_max: int
    m_max: int

    def __post_init__(self):
        if self.n_max < 1 or self.m_max < 1:
            raise ValueError("grid bounds must be at least 1")

    @property
    def size(self) -> int:
        return (self.n_max + 1) * (self.m_max + 1)

    def doubled(self) -> "TruncatedGrid":
        return TruncatedGrid(2 * self.n_max, 2 * self.m_max)


def auto_grid(params: ModelParams, spread: float = 12.0, pad: int = 30) -> TruncatedGrid:
    """Size the lattice from the Gaussian widths of the heavy-traffic limit.

    The stationary mass concentrates at (A*x_star, A) with standard
    deviations sqrt(A*rho/(1-rho)^2) and sqrt(A); ``spread`` standard
    deviations plus ``pad`` states leave the truncated tail far below any
    practical tolerance (the impatient marginal is dominated by a
    Poisson(A) tail, so spread=12 puts it near 1e-30).
    """
    d = derive_constants(params)
    if not d.stable:
        raise StabilityError(f"rho = {d.rho} >= 1: stationary distribution does not exist")
    A, rho = d.A, d.rho
    n_max = math.ceil(A * d.x_star + spread * math.sqrt(A * rho / (1.0 - rho) ** 2) + pad)
    m_max = math.ceil(A + spread * math.sqrt(A) + pad)
    return TruncatedGrid(max(n_max, 1), max(m_max, 1))


def build_generator(params: ModelParams, grid: TruncatedGrid) -> sp.csr_matrix:
    """Sparse truncated generator Q (reflecting boundary).

    States are indexed lexicographically, ``idx = n*(m_max+1) + m``.  Row
    sums are zero except at the reflecting boundary, where the suppressed
    outflow simply never appears (equivalent to redirecting it into a
    self-loop).  The off-diagonal rates come from the same rate functions
    as :func:`psiq.model.transition_rates`.
    """
    N, M = grid.n_max + 1, grid.m_max + 1
    n = np.repeat(np.arange(N), M)
    m = np.tile(np.arange(M), N)
    idx = n * M + m
    srv_n = service_rate_patient(n, m, params)
    dep_m = departure_rate_impatient(n, m, params)

    rows, cols, vals = [], [], []

    def add(sel, shift, rates):
        rows.append(idx[sel])
        cols.append(idx[sel] + shift)
        vals.append(np.broadcast_to(rates, idx[sel].shape).astype(float))

    if params.alpha > 0:
        add(n < grid.n_max, M, params.alpha)
    if params.beta > 0:
        add(m < grid.m_max, 1, params.beta)
    add(n > 0, -M, srv_n[n > 0])
    add(m > 0, -1, dep_m[m > 0])

    Q = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N * M, N * M),
    ).tocsr()
    out = np.asarray(Q.sum(axis=1)).ravel()
    return (Q - sp.diags(out)).tocsr()


class Moments(NamedTuple):
    mean_n: float
    mean_m: float
    var_n: float
    var_m: float
    cov_nm: float


@dataclass
class StationaryDistribution:
    """Stationary pmf of the truncated chain plus solver diagnostics.

    ``pmf`` is indexed ``pmf[n, m]``; ``residual`` is the L1 norm of the
    balance equations at the returned (normalized) solution and
    ``boundary_mass`` the probability carried by the outermost row and
    column (the under-truncation indicator).
    """

    params: ModelParams
    grid: TruncatedGrid
    pmf: np.ndarray
    residual: float
    iterations: int
    boundary_mass: float
    method: str = "iad"

    def to_csv(self, path, threshold: float = 0.0):
        write_pmf_csv(self.pmf, path, threshold=threshold)

    def summary(self) -> dict:
        mom = moments(self)
        return {
            "params": vars(self.params) | {},
            "grid": {"n_max": self.grid.n_max, "m_max": self.grid.m_max},
            "residual": self.residual,
            "iterations": self.iterations,
            "boundary_mass": self.boundary_mass,
            "method": self.method,
            "moments": mom._asdict(),
        }

    def summary_json(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def write_pmf_csv(pmf: np.ndarray, path, threshold: float = 0.0):
    """Write a lattice pmf as ``n,m,probability`` rows (row-major order)."""
    with open(path, "w") as fh:
        fh.write("n,m,probability\n")
        for n in range(pmf.shape[0]):
            row = pmf[n]
            for m in range(pmf.shape[1]):
                p = float(row[m])
                if p > threshold or (threshold == 0.0 and p != 0.0):
                    fh.write(f"{n},{m},{p!r}\n")


def _product_guess(params: ModelParams, grid: TruncatedGrid) -> np.ndarray:
    """Initial iterate: negative-binomial marginal in n times Poisson(A) in m.

    This is the exact stationary law of the decoupled pair (PS queue with A
    permanent customers, M/M/inf queue), which the true solution approaches
    in heavy traffic; it is a good iterate at every scale and a valid
    positive pmf even in the degenerate alpha=0 / beta=0 cases.
    """
    d = derive_constants(params)
    A, rho = d.A, d.rho
    nn = np.arange(grid.n_max + 1, dtype=float)
    mm = np.arange(grid.m_max + 1, dtype=float)
    if A > 0:
        log_m = mm * math.log(A) - gammaln(mm + 1.0) - A
    else:
        log_m = np.where(mm == 0, 0.0, -np.inf)
    if rho > 0:
        r = max(A, 1.0)
        log_n = (
            gammaln(nn + r + 1.0)
            - gammaln(nn + 1.0)
            - gammaln(r + 1.0)
            + nn * math.log(rho)
            + (r + 1.0) * math.log1p(-rho)
        )
    else:
        log_n = np.where(nn == 0, 0.0, -np.inf)
    x = np.exp((log_n[:, None] + log_m[None, :]) - (log_n.max() + log_m.max()))
    x = x.ravel()
    return x / x.sum()


def _gs_operators(Q: sp.csr_matrix):
    """Forward/backward Gauss-Seidel splitting of the balance operator B = Q^T."""
    B = Q.T.tocsr()
    lower = sp.tril(B, k=0).tocsc()
    upper_strict = sp.triu(B, k=1).tocsr()
    upper = sp.triu(B, k=0).tocsc()
    lower_strict = sp.tril(B, k=-1).tocsr()
    lu_f = splu(lower, permc_spec="NATURAL", options=dict(SymmetricMode=False))
    lu_b = splu(upper, permc_spec="NATURAL", options=dict(SymmetricMode=False))
    return B, lu_f, upper_strict, lu_b, lower_strict


def _birth_death_rescale(P, up_rate, down, lo, hi, axis):
    """Replace the marginal along ``axis`` by the stationary law of its
    aggregated birth-death chain (up-rate constant, down-rates weighted by
    the current conditionals, clamped to their structural bounds)."""
    marg = P.sum(axis=1 - axis)
    down = np.clip(down, lo, hi)
    with np.errstate(divide="ignore"):
        steps = math.log(up_rate) - np.log(down[1:]) if up_rate > 0 else np.full(down.size - 1, -np.inf)
    logq = np.concatenate(([0.0], np.cumsum(steps)))
    logq -= logq.max()
    target = np.exp(logq)
    target /= target.sum()
    scale = target / np.maximum(marg, 1e-300)
    return P * (scale[:, None] if axis == 0 else scale[None, :])


def solve_stationary(
    params: ModelParams,
    grid: TruncatedGrid | None = None,
    tol: float = 1e-10,
    method: str = "iad",
    max_iter: int | None = None,
    init: np.ndarray | None = None,
    smoothing_sweeps: int = 2,
) -> StationaryDistribution:
    """Solve pi Q = 0, sum(pi) = 1 on the truncated lattice.

    Parameters
    ----------
    params, grid
        Model and truncation; ``grid=None`` auto-sizes via :func:`auto_grid`.
    tol
        Convergence threshold on the L1 residual ||pi Q||_1 of the balance
        equations (not on iterate differences).
    method
        ``"iad"`` (default): Gauss-Seidel sweeps + birth-death aggregation
        corrections.  ``"power"``: power iteration on the uniformized chain
        with uniformization constant max total outflow; only practical on
        small grids.
    init
        Optional starting pmf (flattened or lattice-shaped); defaults to
        the product negative-binomial x Poisson guess.

    Raises
    ------
    StabilityError
        If rho >= 1.
    ConvergenceError
        If the iteration budget is exhausted before reaching ``tol``; the
        exception carries the residual history.
    """
    d = derive_constants(params)
    if not d.stable:
        raise StabilityError(f"rho = {d.rho} >= 1: no stationary distribution")
    if grid is None:
        grid = auto_grid(params)
    N, M = grid.n_max + 1, grid.m_max + 1
    Q = build_generator(params, grid)

    if init is None:
        x = _product_guess(params, grid)
    else:
        x = np.asarray(init, dtype=float).ravel().copy()
        if x.size != N * M:
            raise ValueError(f"init has {x.size} entries, grid needs {N * M}")
        x = np.maximum(x, 0.0)
        x /= x.sum()

    if method == "power":
        x, res, iters, hist = _power_iteration(Q, x, tol, max_iter or 2_000_000)
    elif method == "iad":
        x, res, iters, hist = _iad_iteration(
            params, grid, Q, x, tol, max_iter or 20_000, smoothing_sweeps
        )
    else:
        raise ValueError(f"unknown method {method!r}")

    if res > tol:
        raise ConvergenceError(
            f"stationary solve did not reach tol={tol:g} after {iters} iterations "
            f"(last residual {res:.3e})",
            residuals=hist,
        )

    pmf = np.maximum(x, 0.0).reshape(N, M)
    pmf /= pmf.sum()
    boundary = pmf[-1, :].sum() + pmf[:, -1].sum() - pmf[-1, -1]
    if boundary > 1e-8:
        warnings.warn(
            f"boundary mass {boundary:.2e} exceeds 1e-8: grid {grid.n_max}x{grid.m_max} "
            "may be under-truncated",
            RuntimeWarning,
            stacklevel=2,
        )
    return StationaryDistribution(
        params=params,
        grid=grid,
        pmf=pmf,
        residual=res,
        iterations=iters,
        boundary_mass=float(boundary),
        method=method,
    )


def _power_iteration(Q, x, tol, max_iter, check_every=50):
    lam = float(-Q.diagonal().min())
    if lam <= 0:  # all-absorbing degenerate lattice
        return x, 0.0, 0, [0.0]
    P = (sp.eye(Q.shape[0], format="csr") + Q / lam).T.tocsr()
    B = Q.T.tocsr()
    hist = []
    for it in range(1, max_iter + 1):
        x = P @ x
        if it % check_every == 0:
            x = np.maximum(x, 0.0)
            x /= x.sum()
            res = float(np.abs(B @ x).sum())
            hist.append(res)
            if res <= tol:
                return x, res, it, hist
    x = np.maximum(x, 0.0)
    x /= x.sum()
    res = float(np.abs(B @ x).sum())
    hist.append(res)
    return x, res, max_iter, hist


def _iad_iteration(params, grid, Q, x, tol, max_outer, smoothing_sweeps):
    N, M = grid.n_max + 1, grid.m_max + 1
    B, lu_f, upper, lu_b, lower = _gs_operators(Q)

    n_idx = np.repeat(np.arange(N), M).reshape(N, M)
    m_idx = np.tile(np.arange(M), N).reshape(N, M)
    rate_down_n = service_rate_patient(n_idx, m_idx, params)
    rate_down_m = departure_rate_impatient(n_idx, m_idx, params)
    nn = np.arange(N, dtype=float)
    mm = np.arange(M, dtype=float)
    # structural bounds of the aggregated death rates, used to clamp levels
    # that currently carry (numerically) no mass
    lo_n = params.mu * nn / np.maximum(nn + grid.m_max, 1.0)
    hi_n = np.full(N, params.mu)
    hi_n[0] = lo_n[0] = 0.0
    lo_m = params.theta * mm
    hi_m = params.theta * mm + params.nu

    hist = []
    for it in range(1, max_outer + 1):
        for _ in range(smoothing_sweeps):
            x = lu_f.solve(-(upper @ x))
            x = lu_b.solve(-(lower @ x))
        x = np.maximum(x, 0.0)
        x /= x.sum()
        P = x.reshape(N, M)

        q = P.sum(axis=1)
        raw = (P * rate_down_n).sum(axis=1) / np.maximum(q, 1e-300)
        P = _birth_death_rescale(P, params.alpha, raw, lo_n, hi_n, axis=0)

        w = P.sum(axis=0)
        raw = (P * rate_down_m).sum(axis=0) / np.maximum(w, 1e-300)
        P = _birth_death_rescale(P, params.beta, raw, lo_m, hi_m, axis=1)

        x = P.ravel()
        x /= x.sum()
        res = float(np.abs(B @ x).sum())
        hist.append(res)
        if res <= tol:
            return x, res, it, hist
    return x, hist[-1], max_outer, hist


# -- distribution functionals --------------------------------------------------


def marginals(dist: StationaryDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Marginal pmfs of (N, M): row and column sums of the lattice pmf."""
    return dist.pmf.sum(axis=1), dist.pmf.sum(axis=0)


def moments(dist: StationaryDistribution) -> Moments:
    """Exact first and second moments of the truncated pmf."""
    pn, pm = marginals(dist)
    n = np.arange(pn.size, dtype=float)
    m = np.arange(pm.size, dtype=float)
    mean_n = float(pn @ n)
    mean_m = float(pm @ m)
    var_n = float(pn @ (n - mean_n) ** 2)
    var_m = float(pm @ (m - mean_m) ** 2)
    cov = float(n @ dist.pmf @ m - mean_n * mean_m)
    return Moments(mean_n, mean_m, var_n, var_m, cov)


@dataclass
class ConditionalDistribution:
    """Conditional law of M given N = n (exact or quasi-stationary)."""

    n: int
    pmf: np.ndarray
    source: str = "exact"


def conditional(dist: StationaryDistribution, n: int) -> ConditionalDistribution:
    """Exact conditional pmf of M given N = n."""
    if not 0 <= n <= dist.grid.n_max:
        raise ValueError(f"n={n} outside grid [0, {dist.grid.n_max}]")
    row = dist.pmf[n]
    total = row.sum()
    if total <= 0.0:
        raise ValueError(f"marginal mass at n={n} is zero; conditional undefined")
    return ConditionalDistribution(n=n, pmf=row / total, source="exact")


def quasi_stationary(params: ModelParams, n: int, m_max: int | None = None) -> ConditionalDistribution:
    """Conditional law of M with the patient count frozen at ``n``.

    With N pinned, M is a birth-death chain with birth rate beta and death
    rate m*(nu/(n+m) + theta); its stationary pmf is the normalized product
    prod_{k<=m} beta / (k*(nu/(n+k) + theta)), evaluated in log space.
    When ``nu`` is zero this is exactly Poisson(A) for every n.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    d = derive_constants(params)
    if m_max is None:
        m_max = math.ceil(d.A + 12.0 * math.sqrt(max(d.A, 1.0)) + 30)
        # extend until the last retained term is negligible relative to the peak
        while True:
            logw = _qs_log_weights(params, n, m_max)
            if logw[-1] - logw.max() < math.log(1e-16):
                break
            m_max *= 2
    else:
        logw = _qs_log_weights(params, n, m_max)
    w = np.exp(logw - logw.max())
    return ConditionalDistribution(n=n, pmf=w / w.sum(), source="quasi-stationary")


def _qs_log_weights(params: ModelParams, n: int, m_max: int) -> np.ndarray:
    k = np.arange(1, m_max + 1, dtype=float)
    if params.beta == 0:
        steps = np.full(m_max, -np.inf)
    else:
        steps = math.log(params.beta) - np.log(k) - np.log(params.nu / (n + k) + params.theta)
    return np.concatenate(([0.0], np.cumsum(steps)))


def generating_function(dist: StationaryDistribution, u: complex, v: complex) -> complex:
    """E[u^N v^M] as a finite double sum over the truncated pmf.

    Always defined for the truncated distribution; faithful to the infinite
    queue only where the series converges (|u| < 1/rho, any v).
    """
    u = complex(u)
    v = complex(v)
    upow = u ** np.arange(dist.pmf.shape[0])
    vpow = v ** np.arange(dist.pmf.shape[1])
    return complex(upow @ (dist.pmf @ vpow))


# -- PS queue with permanent customers ----------------------------------------


def permanent_ps_log_pmf(m: int, rho: float, n_max: int) -> np.ndarray:
    """log of the stationary pmf of the PS queue with ``m`` permanent customers.

    The chain with arrival rate alpha, service rate mu (rho = alpha/mu) and
    m permanent customers holding the server is reversible with

        pi_m(n) = rho^n * prod_{k=1..n} (1 + m/k) * (1 - rho)^(m+1).

    The log weights are accumulated so the detailed-balance recurrence
    ``alpha * pi_m(n) = mu*(n+1)/(n+1+m) * pi_m(n+1)`` holds to rounding
    and nothing overflows (the bare product is a binomial coefficient that
    overflows past m+n ~ 1000).
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if m < 0:
        raise ValueError("m must be non-negative")
    k = np.arange(1, n_max + 1, dtype=float)
    steps = math.log(rho) + np.log1p(m / k)
    logw = np.concatenate(([0.0], np.cumsum(steps)))
    return logw + (m + 1) * math.log1p(-rho)


def permanent_ps_auto_n_max(m: int, rho: float, tail: float = 1e-13) -> int:
    """Truncation index with negative-binomial tail mass below ``tail``."""
    from scipy.stats import nbinom

    n = int(nbinom.ppf(1.0 - tail, m + 1, 1.0 - rho)) + 10
    return max(n, 10)


def permanent_ps_distribution(m: int, rho: float, n_max: int | None = None) -> np.ndarray:
    """Stationary pmf over n of the PS queue with ``m`` permanent customers.

    With ``n_max=None`` the truncation point is sized so the omitted tail
    is below 1e-13 of the total mass.  The returned values are the exact
    closed-form probabilities (not renormalized); entries deep in the left
    tail can underflow to zero in linear space for large m, in which case
    :func:`permanent_ps_log_pmf` is the lossless interface.
    """
    if n_max is None:
        n_max = permanent_ps_auto_n_max(m, rho)
    return np.exp(permanent_ps_log_pmf(m, rho, n_max))
