"""Command-line driver: one subcommand per experiment kind.

Parameters resolve in three layers: built-in defaults (mu = nu = theta =
1), then a --config file (flat ``key = value`` text or JSON), then
explicit flags.  The (--A, --rho) shortcut pins beta = A*theta and
alpha = rho*mu.  Every run writes a manifest.json sufficient to reproduce
its outputs bit-exactly.
"""

import argparse
import sys

from .model import ModelParams, load_config
from .exact import TruncatedGrid
from .simulate import SimConfig
from . import reporting


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key-value or JSON parameter file")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--alpha", type=float, help="patient arrival rate")
    p.add_argument("--beta", type=float, help="impatient arrival rate")
    p.add_argument("--mu", type=float, help="patient service rate")
    p.add_argument("--nu", type=float, help="impatient service rate")
    p.add_argument("--theta", type=float, help="impatience rate")
    p.add_argument("--A", type=float, help="scale beta/theta (sets beta = A*theta)")
    p.add_argument("--rho", type=float, help="patient load alpha/mu (sets alpha = rho*mu)")
    p.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")
    p.add_argument("--seed", type=int, default=20240817, help="master RNG seed")
    p.add_argument("--grid", help="explicit truncation 'n_max,m_max' (default: auto)")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]


def _points(text: str) -> list[tuple[float, float]]:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = chunk.split(",")
        pts.append((float(x), float(y)))
    return pts


def resolve_params(args, need_beta: bool = True) -> ModelParams:
    vals = {"alpha": None, "beta": None, "mu": 1.0, "nu": 1.0, "theta": 1.0}
    if args.config:
        cfg = load_config(args.config)
        for k in vals:
            if k in cfg:
                vals[k] = cfg[k]
    for k in ("alpha", "beta", "mu", "nu", "theta"):
        flag = getattr(args, k, None)
        if flag is not None:
            vals[k] = flag
    if getattr(args, "A", None) is not None:
        vals["beta"] = args.A * vals["theta"]
    if getattr(args, "rho", None) is not None:
        vals["alpha"] = args.rho * vals["mu"]
    if not need_beta and vals["beta"] is None:
        vals["beta"] = vals["theta"]  # placeholder A=1; the command re-pins beta itself
    missing = [k for k, v in vals.items() if v is None]
    if missing:
        raise SystemExit(
            f"missing parameters: {', '.join(missing)} "
            "(set via flags, --config, or the --A/--rho shortcut)"
        )
    return ModelParams(**vals)


def resolve_grid(args) -> TruncatedGrid | None:
    if not getattr(args, "grid", None):
        return None
    n_max, m_max = (int(v) for v in args.grid.split(","))
    return TruncatedGrid(n_max, m_max)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psiq",
        description="Two-class processor-sharing queue with impatience: "
        "exact solves, simulation, asymptotics and the closed-loop cell model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact stationary distribution on the truncated lattice")
    _add_common(p)

    p = sub.add_parser("simulate", help="empirical stationary estimate by simulation")
    _add_common(p)
    p.add_argument("--t-end", type=float, default=10000.0)
    p.add_argument("--burn-in", type=float, default=0.0)
    p.add_argument("--replications", type=int, default=1)

    p = sub.add_parser("asymptotics", help="closed-form evaluators at probe points")
    _add_common(p)
    p.add_argument("--points", default="1,1", help="semicolon-separated x,y pairs, e.g. '1,1;2,0.5'")

    p = sub.add_parser("convergence", help="exact vs sharp-asymptotic sweep over A")
    _add_common(p)
    p.add_argument("--A-list", default="40,80,160", help="comma-separated scales")
    p.add_argument("--probes", default="1,1", help="semicolon-separated x,y probe pairs")

    p = sub.add_parser("mobile-sweep", help="closed-loop fixed-point sweep over rho_tot")
    _add_common(p)
    p.add_argument("--rho-tot-list", default="0.9,0.95,0.99")
    p.add_argument("--fp-tol", type=float, default=1e-8)
    p.add_argument("--damping", type=float, default=0.5)

    p = sub.add_parser("dominance", help="coupled run checking M(t) <= M'(t)")
    _add_common(p)
    p.add_argument("--t-end", type=float, default=10000.0)
    p.add_argument("--max-events", type=int, default=None)

    p = sub.add_parser("figure-data", help="(x, y, H, g) grid for surface plots")
    _add_common(p)
    p.add_argument("--x-max", type=float, default=4.0)
    p.add_argument("--y-max", type=float, default=4.0)
    p.add_argument("--resolution", type=float, default=0.05)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "solve":
        summary = reporting.run_solve(resolve_params(args), args.out,
                                      grid=resolve_grid(args), tol=args.tol)
        print(f"solved: residual={summary['residual']:.3e} "
              f"iterations={summary['iterations']} -> {args.out}")

    elif args.command == "simulate":
        config = SimConfig(seed=args.seed, t_end=args.t_end,
                           burn_in=args.burn_in, replications=args.replications)
        summary = reporting.run_simulate(resolve_params(args), config, args.out)
        print(f"simulated: events={summary['events']} mean_n={summary['mean_n']:.4f} "
              f"mean_m={summary['mean_m']:.4f} -> {args.out}")

    elif args.command == "asymptotics":
        params = resolve_params(args)
        A = args.A if args.A is not None else params.beta / params.theta
        rows = reporting.run_asymptotics(params, A, _points(args.points), args.out)
        print(f"evaluated {len(rows)} points at A={A} -> {args.out}")

    elif args.command == "convergence":
        rows = reporting.run_convergence(resolve_params(args, need_beta=False),
                                         _floats(args.A_list),
                                         _points(args.probes), args.out, tol=args.tol)
        print(f"convergence table: {len(rows)} rows -> {args.out}")

    elif args.command == "mobile-sweep":
        if args.alpha is None and args.rho is None and not args.config:
            raise SystemExit("mobile-sweep needs --rho (or --alpha/--mu) plus --nu/--theta")
        params = resolve_params(args, need_beta=False)
        rows = reporting.run_mobile_sweep(
            params.alpha, params.mu, params.nu, params.theta,
            _floats(args.rho_tot_list), args.out,
            fp_tol=args.fp_tol, damping=args.damping,
        )
        print(f"mobile sweep: {len(rows)} points -> {args.out}")

    elif args.command == "dominance":
        config = SimConfig(seed=args.seed, t_end=args.t_end, replications=1)
        summary = reporting.run_dominance(resolve_params(args), config, args.out,
                                          max_events=args.max_events)
        print(f"dominance: events={summary['events']} violations={summary['violations']} "
              f"-> {args.out}")

    elif args.command == "figure-data":
        if args.rho is None:
            raise SystemExit("figure-data needs --rho")
        path = reporting.run_figure_data(args.rho, args.out, x_max=args.x_max,
                                         y_max=args.y_max, resolution=args.resolution)
        print(f"figure data -> {path}")

    return 0


if __name__ == "__main__":
    sys.exit(main())
