"""Command-line front end: ``qsdlab <command> --config plan.toml [overrides]``.

Exit codes: 0 success, 2 invalid plan or config, 3 when any point failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from . import __version__
from .errors import PlanInvalid, QsdLabError
from .experiments import ExperimentPlan, rows_to_csv, run_plan
from .maps import NoiseModel, builtin
from .montecarlo import SimConfig, killed_ensemble, simulate_histogram, write_histogram
from .observables import base_lyapunov, gap_time, lyapunov
from .operators import assemble_annealed, assemble_conditioned, grid_for
from .spectral import format_result, qsd_eigenpair, stationary_density

EXIT_OK, EXIT_PLAN, EXIT_POINT = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with map, sigma, delta, grid, seed, output")
    common.add_argument("--map", dest="map")
    common.add_argument("--sigma", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--n", "--grid", dest="grid", type=int, help="number of grid cells")
    common.add_argument("--seed", type=int)
    common.add_argument("--output", "-o")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="qsdlab", description="Noisy circle maps with a sink: "
                                "stationary and quasi-stationary densities, gap times, Lyapunov exponents.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("stationary", parents=[common], help="stationary density of the annealed operator")
    sub.add_parser("qsd", parents=[common], help="quasi-stationary eigenpair of the conditioned operator")
    sub.add_parser("gap", parents=[common], help="gap time and reachability sweep")
    sub.add_parser("lyapunov", parents=[common], help="Lyapunov exponent per point")
    sw = sub.add_parser("sweep", parents=[common], help="run a full experiment plan")
    sw.add_argument("--workers", type=int)
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo histogram or killed ensemble")
    sim.add_argument("--steps", type=int, default=1_000_000)
    sim.add_argument("--burn-in", type=int, default=1000)
    sim.add_argument("--kill", action="store_true", help="run the killed ensemble instead of one orbit")
    sim.add_argument("--ensemble", type=int, default=10_000)
    return p


def _plan(args) -> ExperimentPlan:
    over = {"map": args.map, "sigma": args.sigma, "delta": args.delta, "grid": args.grid,
            "seed": args.seed, "output": args.output}
    if getattr(args, "workers", None):
        over["workers"] = args.workers
    if args.config:
        return ExperimentPlan.from_toml(args.config, **over)
    cfg = {k: v for k, v in over.items() if v is not None}
    return ExperimentPlan.from_dict(cfg)


def _single(plan: ExperimentPlan):
    plan.validate()
    tasks = plan.tasks()
    if len(tasks) != 1:
        raise PlanInvalid(f"this command takes exactly one (sigma, delta, grid, seed) point, got {len(tasks)}")
    sigma, delta, n, seed = tasks[0]
    model = builtin(plan.map, delta, sigma, **plan.map_options)
    return model, NoiseModel(sigma), grid_for(model, n), seed


def _emit(text: str, output):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_stationary(plan):
    model, noise, grid, _ = _single(plan)
    res = stationary_density(assemble_annealed(model, noise, grid))
    _write_spectral(res, plan.output)
    return EXIT_OK


def cmd_qsd(plan):
    model, noise, grid, _ = _single(plan)
    res = qsd_eigenpair(assemble_conditioned(assemble_annealed(model, noise, grid)))
    _write_spectral(res, plan.output)
    return EXIT_OK


def _write_spectral(res, output):
    _emit(format_result(res), output)


def cmd_gap(plan):
    model, noise, _, _ = _single(plan)
    g = gap_time(model, noise)
    print(f"k={g.k} cap={g.cap} cap_hit={'yes' if g.cap_hit else 'no'}", file=sys.stderr)
    if plan.output:
        g.sweep.to_csv(plan.output)
    else:
        out = csv.writer(sys.stdout, lineterminator="\n")
        out.writerow(["step", "interval_lo", "interval_hi"])
        for j, ivs in enumerate(g.sweep.steps, start=1):
            for a, b in ivs:
                out.writerow([j, repr(float(a)), repr(float(b))])
    return EXIT_OK


def cmd_lyapunov(plan):
    plan.validate()
    lines = ["map,sigma,delta,n,xi,xi_finite,r\n"]
    for sigma, delta, n, _ in plan.tasks():
        model = builtin(plan.map, delta, sigma, **plan.map_options)
        grid = grid_for(model, n)
        rho = stationary_density(assemble_annealed(model, NoiseModel(sigma), grid))
        ly = lyapunov(model, rho.density)
        r = ly.xi - base_lyapunov(model, grid)
        lines.append(f"{plan.map},{float(sigma)!r},{float(delta)!r},{n},{float(ly.xi)!r},{float(ly.finite_part)!r},{float(r)!r}\n")
    _emit("".join(lines), plan.output)
    return EXIT_OK


def cmd_sweep(plan):
    rows = run_plan(plan, write=True)
    if not plan.output:
        sys.stdout.write(rows_to_csv(rows))
    return EXIT_POINT if any(r.error for r in rows) else EXIT_OK


def cmd_simulate(plan, args):
    model, noise, grid, seed = _single(plan)
    if args.kill:
        cfg = SimConfig(seed=seed, steps=args.steps, burn_in=args.burn_in, ensemble_size=args.ensemble, kill_on=True)
        res = killed_ensemble(model, noise, grid, cfg)
    else:
        res = simulate_histogram(model, noise, grid, SimConfig(seed=seed, steps=args.steps, burn_in=args.burn_in))
    if res.non_ergodic_suspect:
        logging.getLogger("qsdlab").warning("orbit visited only %.1f%% of cells", 100 * res.coverage)
    if plan.output:
        write_histogram(res, plan.output)
    else:
        sys.stdout.write("cell_center,density\n")
        for c, v in zip(grid.centers.tolist(), res.density.values.tolist()):
            sys.stdout.write(f"{c!r},{v!r}\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        plan = _plan(args)
        if args.command == "simulate":
            return cmd_simulate(plan, args)
        handler = {"stationary": cmd_stationary, "qsd": cmd_qsd, "gap": cmd_gap,
                   "lyapunov": cmd_lyapunov, "sweep": cmd_sweep}[args.command]
        return handler(plan)
    except PlanInvalid as exc:
        print(f"invalid plan: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except QsdLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_POINT


if __name__ == "__main__":
    sys.exit(main())
