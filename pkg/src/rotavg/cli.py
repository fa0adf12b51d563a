"""Command-line entry point: ``rotavg <subcommand> ...``.

Exit codes: 0 success/certified, 1 solver or data error, 2 usage error,
3 result produced but not certified.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import g2o
from .cycle import CycleProblem, closed_form_spectrum, stationary_point
from .errors import InvalidArgumentError, RotavgError
from .solver import SolverConfig, certify_solution, cost, solve
from .synth import (
    CycleSpec,
    GraphSpec,
    generate_cycle,
    generate_graph,
    principal_angle_experiment,
    write_bins_csv,
    write_trials_csv,
)

log = logging.getLogger("rotavg")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_UNCERTIFIED = 0, 1, 2, 3


def _spec_tuple(text: str, kinds: tuple[type, ...], what: str):
    parts = text.split(",")
    if len(parts) != len(kinds):
        raise argparse.ArgumentTypeError(f"{what} must have {len(kinds)} comma-separated fields")
    try:
        return tuple(k(p) for k, p in zip(kinds, parts))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {what} {text!r}") from None


def _cycle_spec(text: str) -> CycleSpec:
    n, sigma, seed = _spec_tuple(text, (int, float, int), "cycle spec n,sigma,seed")
    try:
        return CycleSpec(n, sigma, seed)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _graph_spec(text: str) -> GraphSpec:
    n, p, sigma, seed = _spec_tuple(text, (int, float, float, int), "graph spec n,p,sigma,seed")
    try:
        return GraphSpec(n, p, seed, sigma)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sigma list {text!r}") from None


def _bench_row(name: str, ds_graph, report) -> g2o.BenchRow:
    return g2o.BenchRow(
        dataset=name,
        n=ds_graph.n,
        m=ds_graph.m,
        min_eig=report.certificate.min_eig,
        cost=report.final_cost,
        wall_time_s=report.wall_time,
        iterations=report.iterations,
        certified=report.certified,
    )


def cmd_solve(args) -> int:
    ds = g2o.parse_g2o(args.g2o)
    cfg = SolverConfig(max_iterations=args.max_iter, epsilon=args.eps, relative_epsilon=args.relative_eps)
    report = solve(ds.graph, cfg)
    row = _bench_row(ds.name, ds.graph, report)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            report.write_trace(fh)
    if args.out:
        g2o.write_solution(args.out, report.rotations, ds.node_ids)
    if args.report:
        Path(args.report).write_text(g2o.bench_row_json(row) + "\n")
    print(g2o.bench_row_json(row))
    return EXIT_OK if report.certified else EXIT_UNCERTIFIED


def cmd_cycle(args) -> int:
    if args.synth is not None:
        problem, _ = generate_cycle(args.synth)
        ids = list(range(problem.n))
    else:
        if args.g2o is None:
            raise InvalidArgumentError("cycle needs a g2o file or --synth n,sigma,seed")
        ds = g2o.parse_g2o(args.g2o)
        problem, order = CycleProblem.from_graph(ds.graph)
        ids = [ds.node_ids[k] for k in order]
    sol = stationary_point(problem, args.k)
    if args.out:
        g2o.write_solution(args.out, sol.rotations, ids)
    print(json.dumps({
        "n": problem.n,
        "k": sol.root_index,
        "gamma": sol.gamma,
        "cost": sol.cost,
        "is_global": sol.is_global,
    }, indent=2))
    return EXIT_OK


def cmd_certify(args) -> int:
    ds = g2o.parse_g2o(args.g2o)
    rots = g2o.solution_for(ds, g2o.read_solution(args.solution))
    cert = certify_solution(ds.graph, rots, args.tol)
    print(json.dumps({
        "dataset": ds.name,
        "min_eig": cert.min_eig,
        "stationarity_residual": cert.stationarity_residual,
        "cost": cost(ds.graph, rots),
        "certified": cert.certified,
    }, indent=2))
    return EXIT_OK if cert.certified else EXIT_UNCERTIFIED


def cmd_spectrum(args) -> int:
    problem, _ = generate_cycle(args.synth)
    values = np.sort(closed_form_spectrum(problem))
    for v in values:
        print(repr(float(v)))
    if not args.verify:
        return EXIT_OK
    if 3 * problem.n > 600:
        raise InvalidArgumentError("--verify is limited to 3n <= 600")
    from .graph import build_pairwise_matrix

    dense = np.linalg.eigvalsh(build_pairwise_matrix(problem.to_graph()).to_dense())
    dev = float(np.max(np.abs(dense - values)))
    print(f"# max_abs_deviation {dev:.3e}", file=sys.stderr)
    return EXIT_OK if dev <= 1e-9 else EXIT_UNCERTIFIED


def cmd_synth(args) -> int:
    prefix = Path(args.out)
    if args.kind == "cycle":
        spec = _cycle_spec(args.spec)
        problem, truth = generate_cycle(spec)
        graph = problem.to_graph()
    else:
        spec = _graph_spec(args.spec)
        graph, truth, _ = generate_graph(spec)
    g2o.write_g2o(prefix.with_suffix(".g2o"), graph, truth)
    g2o.write_solution(prefix.parent / (prefix.name + "_gt.txt"), truth)
    print(f"wrote {prefix.with_suffix('.g2o')} (n={graph.n}, m={graph.m})")
    return EXIT_OK


def cmd_experiment(args) -> int:
    res = principal_angle_experiment(args.n, args.sigmas, args.trials, args.seed)
    if args.trials_csv:
        with open(args.trials_csv, "w", newline="") as fh:
            write_trials_csv(fh, res.trials)
    write_bins_csv(sys.stdout, res.bins)
    print(f"# rng {res.rng_algorithm}; failed generations {res.failures}", file=sys.stderr)
    return EXIT_OK


def _bench_one(path: str) -> g2o.BenchRow:
    ds = g2o.parse_g2o(path)
    return _bench_row(ds.name, ds.graph, solve(ds.graph, SolverConfig()))


def cmd_bench(args) -> int:
    files = sorted(str(p) for p in Path(args.dir).glob("*.g2o"))
    if not files:
        raise InvalidArgumentError(f"no .g2o files in {args.dir}")
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_bench_one, files))
    else:
        rows = [_bench_one(f) for f in files]
    g2o.write_bench_csv(sys.stdout, rows)
    if args.report:
        with open(args.report, "w", newline="") as fh:
            g2o.write_bench_csv(fh, rows)
    return EXIT_OK if all(r.certified for r in rows) else EXIT_UNCERTIFIED


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    its, lam = [], []
    with open(args.trace, newline="") as fh:
        for row in csv.DictReader(fh):
            its.append(int(row["iteration"]))
            lam.append(max(float(row["min_abs_lambda"]), 1e-300))
    if not its:
        raise InvalidArgumentError(f"{args.trace} has no iterations")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(its, lam, marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel("min |eigenvalue| of Lambda - R~")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, format="svg")
    plt.close(fig)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotavg", description="Rotation averaging with duality certificates.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="primal-dual solve of a g2o dataset")
    s.add_argument("g2o")
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--eps", type=float, default=1e-15)
    s.add_argument("--relative-eps", action="store_true")
    s.add_argument("--trace")
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("cycle", help="closed-form cycle solution or k-th stationary point")
    s.add_argument("g2o", nargs="?")
    s.add_argument("--synth", type=_cycle_spec, metavar="N,SIGMA,SEED")
    s.add_argument("--k", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_cycle)

    s = sub.add_parser("certify", help="certify an external solution")
    s.add_argument("g2o")
    s.add_argument("solution")
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("spectrum", help="closed-form spectrum of a synthetic cycle")
    s.add_argument("--synth", type=_cycle_spec, required=True, metavar="N,SIGMA,SEED")
    s.add_argument("--verify", action="store_true")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("synth", help="write a synthetic problem as g2o plus ground truth")
    s.add_argument("kind", choices=("cycle", "graph"))
    s.add_argument("spec", help="cycle: n,sigma,seed  graph: n,p,sigma,seed")
    s.add_argument("--out", default="synth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("experiment", help="synthetic experiments")
    s.add_argument("name", choices=("principal-angle",))
    s.add_argument("n", type=int)
    s.add_argument("sigmas", type=_float_list)
    s.add_argument("trials", type=int)
    s.add_argument("seed", type=int)
    s.add_argument("--trials-csv")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("bench", help="solve every .g2o file in a directory")
    s.add_argument("dir")
    s.add_argument("--report")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("plot", help="SVG convergence plot from a solve trace")
    s.add_argument("trace")
    s.add_argument("out")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RotavgError, OSError) as exc:
        print(f"rotavg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
