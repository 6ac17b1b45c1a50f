"""Reproducible experiment runners with CSV + JSON-manifest output.

Every runner writes its data files plus a ``manifest.json`` capturing the
command, all resolved parameters, tolerances, seeds and the package
version: re-running with the manifest's settings reproduces the outputs
bit-exactly (floats are serialized with ``repr``, the shortest
round-trip representation).
"""

import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .model import ModelParams, derive_constants
from .asymptotics import (
    decay_H,
    log_marginal_asymptotic,
    log_sharp_density,
    phi,
    prefactor_g,
    psi,
    sharp_density,
)
from .exact import TruncatedGrid, auto_grid, moments, solve_stationary
from .mobile import a_mob, solve_fixed_point, throughput_asymptotics, throughputs
from .simulate import SimConfig, coupled_dominance_run, estimate_stationary


def _fmt(v) -> str:
    if isinstance(v, float):  # includes numpy scalars; repr(float) round-trips
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_manifest(out_dir, command: str, settings: dict):
    payload = {"command": command, "version": __version__, "settings": settings}
    Path(out_dir, "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
    )


def _params_dict(params: ModelParams) -> dict:
    return {k: getattr(params, k) for k in ("alpha", "beta", "mu", "nu", "theta")}


def _ensure_out(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_solve(params: ModelParams, out_dir, grid: TruncatedGrid | None = None,
              tol: float = 1e-10) -> dict:
    """Solve the stationary distribution; emit pmf.csv and summary.json."""
    out = _ensure_out(out_dir)
    dist = solve_stationary(params, grid=grid, tol=tol)
    dist.to_csv(out / "pmf.csv")
    dist.summary_json(out / "summary.json")
    write_manifest(out, "solve", {
        "params": _params_dict(params),
        "grid": {"n_max": dist.grid.n_max, "m_max": dist.grid.m_max},
        "tol": tol,
    })
    return dist.summary()


def run_simulate(params: ModelParams, config: SimConfig, out_dir) -> dict:
    """Estimate the stationary distribution by simulation; emit the
    empirical pmf in the exact-engine CSV schema for diffing."""
    out = _ensure_out(out_dir)
    emp = estimate_stationary(params, config)
    emp.to_csv(out / "empirical_pmf.csv")
    summary = {
        "events": emp.events,
        "mean_n": emp.mean_n,
        "mean_m": emp.mean_m,
        "rep_means": emp.rep_means,
        "total_time": emp.total_time,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "simulate", {
        "params": _params_dict(params),
        "seed": config.seed,
        "t_end": config.t_end,
        "burn_in": config.burn_in,
        "replications": config.replications,
    })
    return summary


def run_asymptotics(params: ModelParams, A: float, points, out_dir) -> list[dict]:
    """Evaluate the closed forms at probe points; emit asymptotics.csv."""
    out = _ensure_out(out_dir)
    d = derive_constants(params)
    rows = []
    for x, y in points:
        interior = x > 0 and y > 0
        rows.append({
            "x": x,
            "y": y,
            "phi": phi(x, d.rho),
            "psi": psi(y),
            "H": decay_H(x, y, d.rho),
            "g": prefactor_g(x, y, params) if interior else math.nan,
            "log_sharp_density": log_sharp_density(x, y, A, params) if interior else math.nan,
            "sharp_density": sharp_density(x, y, A, params) if interior else math.nan,
        })
    header = list(rows[0]) if rows else []
    write_csv(out / "asymptotics.csv", header, [tuple(r[h] for h in header) for r in rows])
    write_manifest(out, "asymptotics", {
        "params": _params_dict(params), "A": A, "points": [list(p) for p in points],
    })
    return rows


def run_convergence(
    params_base: ModelParams,
    A_list,
    probes,
    out_dir,
    tol: float = 1e-10,
) -> list[dict]:
    """Exact-vs-sharp comparison over a sweep of scales A.

    For each A the impatient arrival rate is re-pinned to beta = A*theta,
    the truncated system is solved exactly, and each interior probe (x, y)
    yields the exact probability at ([Ax], [Ay]), the sharp estimate,
    their ratio, and the decay estimate -log(exact)/A against H(x, y).
    Boundary probes (x or y = 0) are excluded: the sharp form does not
    cover the axes.  Emits convergence.csv.
    """
    out = _ensure_out(out_dir)
    d0 = derive_constants(params_base)
    rows = []
    skipped = [list(p) for p in probes if not (p[0] > 0 and p[1] > 0)]
    interior = [p for p in probes if p[0] > 0 and p[1] > 0]
    for A in A_list:
        params = ModelParams(
            alpha=params_base.alpha,
            beta=float(A) * params_base.theta,
            mu=params_base.mu,
            nu=params_base.nu,
            theta=params_base.theta,
        )
        dist = solve_stationary(params, tol=tol)
        for x, y in interior:
            n = int(math.floor(A * x + 1e-9))
            m = int(math.floor(A * y + 1e-9))
            exact = float(dist.pmf[n, m])
            sharp = sharp_density(x, y, A, params)
            rows.append({
                "A": float(A),
                "x": x,
                "y": y,
                "n": n,
                "m": m,
                "exact": exact,
                "sharp": sharp,
                "ratio": exact / sharp,
                "decay_estimate": -math.log(exact) / A if exact > 0 else math.inf,
                "H": decay_H(x, y, d0.rho),
            })
    header = list(rows[0]) if rows else []
    write_csv(out / "convergence.csv", header, [tuple(r[h] for h in header) for r in rows])
    write_manifest(out, "convergence", {
        "params_base": _params_dict(params_base),
        "A_list": [float(a) for a in A_list],
        "probes": [list(p) for p in probes],
        "skipped_boundary_probes": skipped,
        "tol": tol,
    })
    return rows


def run_figure_data(
    rho: float,
    out_dir,
    x_max: float = 4.0,
    y_max: float = 4.0,
    resolution: float = 0.05,
    params: ModelParams | None = None,
) -> Path:
    """Dense (x, y, H, g) grid for surface/level-curve plots.

    The grid includes the axes, where H is still defined by continuity but
    g is not; boundary rows carry ``nan`` in the g column.  ``params``
    fixes the service/impatience ratios entering g; by default mu = nu =
    theta = 1 with alpha = rho.
    """
    if params is None:
        params = ModelParams(alpha=rho, beta=1.0, mu=1.0, nu=1.0, theta=1.0)
    out = _ensure_out(out_dir)
    xs = np.linspace(0.0, x_max, int(round(x_max / resolution)) + 1)
    ys = np.linspace(0.0, y_max, int(round(y_max / resolution)) + 1)
    rows = []
    for x in xs:
        hx = phi(float(x), rho)
        for y in ys:
            h = hx + psi(float(y))
            g = prefactor_g(float(x), float(y), params) if x > 0 and y > 0 else math.nan
            rows.append((float(x), float(y), h, g))
    path = out / "figure_data.csv"
    write_csv(path, ["x", "y", "H", "g"], rows)
    write_manifest(out, "figure-data", {
        "rho": rho,
        "x_max": x_max,
        "y_max": y_max,
        "resolution": resolution,
        "params": _params_dict(params),
    })
    return path


def run_mobile_sweep(
    alpha: float,
    mu: float,
    nu: float,
    theta: float,
    rho_tot_list,
    out_dir,
    fp_tol: float = 1e-8,
    damping: float = 0.5,
) -> list[dict]:
    """Closed-loop sweep over rho_tot at fixed rho; emits sweep.csv
    (rho_tot, beta_net, mean_N, mean_M, gamma, Gamma, A_mob) plus
    mobile_metrics.csv with the exact-vs-asymptotic throughput comparison
    and the empty-system check P(0,0) vs 1 - rho_tot."""
    out = _ensure_out(out_dir)
    rho = alpha / mu
    sweep_rows = []
    metric_rows = []
    for rt in rho_tot_list:
        if not rt < 1.0:
            raise ValueError(f"rho_tot = {rt} >= 1 has no fixed point")
        beta_ex = nu * (rt - rho)
        if beta_ex < 0:
            raise ValueError(f"rho_tot = {rt} below rho = {rho}")
        scen = solve_fixed_point(alpha, beta_ex, mu, nu, theta, tol=fp_tol, damping=damping)
        gamma, big_gamma = throughputs(scen)
        gamma_asym, big_gamma_asym = throughput_asymptotics(rho, rt)
        am = a_mob(rt, rho)
        sweep_rows.append({
            "rho_tot": rt,
            "beta_net": scen.beta_net,
            "mean_N": scen.mean_n,
            "mean_M": scen.mean_m,
            "gamma": gamma,
            "Gamma": big_gamma,
            "A_mob": am,
        })
        metric_rows.append({
            "rho_tot": rt,
            "p_empty": scen.empty_probability,
            "expected_empty": 1.0 - rt,
            "gamma": gamma,
            "gamma_asym": gamma_asym,
            "gamma_ratio": gamma / gamma_asym,
            "Gamma": big_gamma,
            "Gamma_asym": big_gamma_asym,
            "Gamma_ratio": big_gamma / big_gamma_asym,
            "fp_residual": scen.fp_residual,
        })
    header = ["rho_tot", "beta_net", "mean_N", "mean_M", "gamma", "Gamma", "A_mob"]
    write_csv(out / "sweep.csv", header, [tuple(r[h] for h in header) for r in sweep_rows])
    mheader = list(metric_rows[0]) if metric_rows else []
    write_csv(out / "mobile_metrics.csv", mheader,
              [tuple(r[h] for h in mheader) for r in metric_rows])
    write_manifest(out, "mobile-sweep", {
        "alpha": alpha, "mu": mu, "nu": nu, "theta": theta,
        "rho_tot_list": [float(r) for r in rho_tot_list],
        "fp_tol": fp_tol, "damping": damping,
    })
    return sweep_rows


def run_dominance(params: ModelParams, config: SimConfig, out_dir,
                  max_events: int | None = None) -> dict:
    """Coupled dominance run; emits dominance.json."""
    out = _ensure_out(out_dir)
    report = coupled_dominance_run(params, config, max_events=max_events)
    report.to_json(out / "dominance.json")
    write_manifest(out, "dominance", {
        "params": _params_dict(params),
        "seed": config.seed,
        "t_end": config.t_end,
        "burn_in": config.burn_in,
        "max_events": max_events,
    })
    return report.summary()
