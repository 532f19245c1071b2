"""Command-line harness: run a solver on a generated or file-loaded problem.

`blockeig run` executes one solver configuration and writes machine-readable
convergence traces (JSON and/or CSV); `blockeig compare` runs a grid of
solver/preconditioner combinations on one shared problem and prints an
aligned iteration table.

Exit codes: 0 converged, 2 stopped at max_iter, 1 configuration or input
error.  Identical configuration and seed produce byte-identical trace
files.  BLOCKEIG_NUM_THREADS (integer) sets the default thread count of
the dense kernels; BLOCKEIG_DISABLE_NUMBA=1 selects the pure-numpy kernel
fallback.
"""

import argparse
import csv
import dataclasses
import json
import sys

from .davidson import DavidsonOptions, davidson_solve
from .lobpcg import SolverOptions, default_guess, lobpcg_solve
from .ortho import OrthoOptions
from .precond import make_preconditioner
from .problems import ProblemSpec, generate_problem

_GEN_KINDS = {
    "fci-like": "fci_like",
    "scf-hessian-like": "scf_hessian_like",
    "cas-hessian-like": "cas_hessian_like",
}
_PRECOND_KINDS = {
    "identity": "identity",
    "diagonal": "diagonal",
    "tridiagonal": "tridiagonal",
    "sparse": "sparse_threshold",
}


@dataclasses.dataclass
class RunConfig:
    problem: ProblemSpec
    solver: str = "lobpcg"
    n_sought: int = 1
    n_extra: int = 5
    tol_rms: float = 1e-9
    tol_max: float = 1e-8
    precond: str = "diagonal"
    cap: int = 25
    max_iter: int = 100
    ortho_tol: float = 1e-14
    seed: int = 0
    trace_json: str = None
    trace_csv: str = None


def _problem_from_args(args):
    if args.matrix:
        return ProblemSpec(kind="file", path=args.matrix, seed=args.seed)
    if not args.gen:
        raise ValueError("either --matrix or --gen is required")
    return ProblemSpec(
        kind=_GEN_KINDS[args.gen],
        n=args.n,
        density=args.density,
        dominance=args.dominance,
        gap_control=args.gap,
        gap_index=args.gap_index,
        negative_count=args.negative_count,
        seed=args.seed,
    )


def _solver_options(config):
    common = dict(
        n_sought=config.n_sought,
        n_extra=config.n_extra,
        tol_rms=config.tol_rms,
        tol_max=config.tol_max,
        max_iter=config.max_iter,
        ortho=OrthoOptions(tau_ortho=config.ortho_tol),
        record_trace=True,
        seed=config.seed,
    )
    if config.solver == "davidson":
        return DavidsonOptions(max_space_per_root=config.cap, **common)
    return SolverOptions(**common)


def run_one(config, operator=None):
    """Execute one configuration; returns (EigenResult, operator)."""
    if operator is None:
        operator = generate_problem(config.problem)
    precond = make_preconditioner(
        _PRECOND_KINDS[config.precond], operator, tol_rms=config.tol_rms
    )
    opts = _solver_options(config)
    x0 = default_guess(operator, opts.block_size, seed=config.seed)
    if config.solver == "davidson":
        result = davidson_solve(operator, precond, x0, opts)
    else:
        result = lobpcg_solve(operator, precond, x0, opts)
    return result, operator


def trace_payload(config, result):
    return {
        "schema": 1,
        "config": dataclasses.asdict(config),
        "iterations": result.trace.as_dicts() if result.trace else [],
        "result": {
            "converged": result.converged,
            "iterations": result.stats.iterations,
            "matvecs": result.stats.matvecs,
            "b_matvecs": result.stats.b_matvecs,
            "eigenvalues": [float(v) for v in result.eigenvalues],
        },
    }


def write_trace_json(path, config, result):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(trace_payload(config, result), fh)
        fh.write("\n")


def write_trace_csv(path, config, result):
    records = result.trace.as_dicts() if result.trace else []
    m = len(records[0]["ritz"]) if records else 0
    fields = [
        "iter",
        "rms",
        "max_abs",
        "locked",
        "matvecs",
        "b_matvecs",
        "ortho_passes",
        "shifts_engaged",
        "subspace_dim",
    ] + [f"ritz_{i}" for i in range(m)]
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for rec in records:
            writer.writerow(
                [
                    rec["iter"],
                    repr(rec["rms"]),
                    repr(rec["max_abs"]),
                    rec["locked"],
                    rec["matvecs"],
                    rec["b_matvecs"],
                    rec["ortho_passes"],
                    rec["shifts_engaged"],
                    rec["subspace_dim"],
                ]
                + [repr(v) for v in rec["ritz"]]
            )


def _print_summary(config, result, out=sys.stdout):
    prob = config.problem
    source = prob.path if prob.kind == "file" else f"{prob.kind}(n={prob.n}, seed={prob.seed})"
    print(
        f"solver={config.solver} precond={config.precond} problem={source} "
        f"nev={config.n_sought} extra={config.n_extra}",
        file=out,
    )
    print(
        f"converged={result.converged} iterations={result.stats.iterations} "
        f"matvecs={result.stats.matvecs}",
        file=out,
    )
    vals = " ".join(f"{v:.12e}" for v in result.eigenvalues)
    print(f"eigenvalues: {vals}", file=out)


def cmd_run(args):
    problem = _problem_from_args(args)
    config = RunConfig(
        problem=problem,
        solver=args.solver,
        n_sought=args.nev,
        n_extra=args.extra,
        tol_rms=args.tol_rms if args.tol_rms is not None else (1e-7 if args.hessian_mode else 1e-9),
        tol_max=args.tol_max if args.tol_max is not None else (1e-6 if args.hessian_mode else 1e-8),
        precond=args.precond,
        cap=args.cap,
        max_iter=args.max_iter,
        ortho_tol=args.ortho_tol,
        seed=args.seed,
        trace_json=args.trace_json,
        trace_csv=args.trace_csv,
    )
    result, _ = run_one(config)
    if config.trace_json:
        write_trace_json(config.trace_json, config, result)
    if config.trace_csv:
        write_trace_csv(config.trace_csv, config, result)
    _print_summary(config, result)
    return 0 if result.converged else 2


def compare_runs(configs):
    """Run several configurations on one shared problem; returns row dicts."""
    if not configs:
        raise ValueError("compare needs at least one configuration")
    first = configs[0].problem
    if any(c.problem != first for c in configs):
        raise ValueError("compare requires all configurations to share the problem and seed")
    operator = generate_problem(first)
    rows = []
    for config in configs:
        result, _ = run_one(config, operator=operator)
        rows.append(
            {
                "solver": config.solver,
                "precond": config.precond,
                "converged": result.converged,
                "iterations": result.stats.iterations,
                "matvecs": result.stats.matvecs,
            }
        )
    return rows


def _format_table(rows):
    headers = ["solver", "precond", "converged", "iterations", "matvecs"]
    cells = [[str(r[h]) for h in headers] for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for c in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(c, widths)))
    return "\n".join(lines)


def cmd_compare(args):
    problem = _problem_from_args(args)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    preconds = [p.strip() for p in args.preconds.split(",") if p.strip()]
    bad = [s for s in solvers if s not in ("lobpcg", "davidson")]
    bad += [p for p in preconds if p not in _PRECOND_KINDS]
    if bad:
        raise ValueError(f"unknown solver/preconditioner: {', '.join(bad)}")
    configs = [
        RunConfig(
            problem=problem,
            solver=s,
            n_sought=args.nev,
            n_extra=args.extra,
            tol_rms=args.tol_rms if args.tol_rms is not None else (1e-7 if args.hessian_mode else 1e-9),
            tol_max=args.tol_max if args.tol_max is not None else (1e-6 if args.hessian_mode else 1e-8),
            precond=p,
            cap=args.cap,
            max_iter=args.max_iter,
            ortho_tol=args.ortho_tol,
            seed=args.seed,
        )
        for s in solvers
        for p in preconds
    ]
    rows = compare_runs(configs)
    print(_format_table(rows))
    if args.out:
        with open(args.out, "w", newline="", encoding="ascii") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["solver", "precond", "converged", "iterations", "matvecs"]
            )
            writer.writeheader()
            writer.writerows(rows)
    return 0


def _add_shared_args(p):
    src = p.add_argument_group("problem")
    src.add_argument("--matrix", help="Matrix Market input file")
    src.add_argument("--gen", choices=sorted(_GEN_KINDS), help="synthetic problem family")
    src.add_argument("--n", type=int, default=500, help="generated problem size")
    src.add_argument("--density", type=float, default=0.01)
    src.add_argument("--dominance", type=float, default=10.0)
    src.add_argument("--gap", type=float, default=None, help="controlled spectral gap")
    src.add_argument("--gap-index", type=int, default=None, help="position of the controlled gap")
    src.add_argument("--negative-count", type=int, default=None)
    src.add_argument("--seed", type=int, default=0)
    sol = p.add_argument_group("solver")
    sol.add_argument("--nev", type=int, default=1, help="eigenpairs required converged")
    sol.add_argument("--extra", type=int, default=5, help="additional block columns")
    sol.add_argument("--tol-rms", type=float, default=None, help="residual RMS threshold (default 1e-9)")
    sol.add_argument("--tol-max", type=float, default=None, help="residual max-abs threshold (default 1e-8)")
    sol.add_argument(
        "--hessian-mode",
        action="store_true",
        help="use the looser Hessian thresholds 1e-7/1e-6 unless tolerances are given",
    )
    sol.add_argument("--cap", type=int, default=25, help="Davidson vectors kept per root")
    sol.add_argument("--max-iter", type=int, default=100)
    sol.add_argument("--ortho-tol", type=float, default=1e-14)


def build_parser():
    parser = argparse.ArgumentParser(prog="blockeig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one solver configuration")
    _add_shared_args(run_p)
    run_p.add_argument("--solver", choices=["lobpcg", "davidson"], default="lobpcg")
    run_p.add_argument("--precond", choices=sorted(_PRECOND_KINDS), default="diagonal")
    run_p.add_argument("--trace-json", help="write the JSON convergence trace here")
    run_p.add_argument("--trace-csv", help="write the CSV convergence trace here")
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="run a solver/preconditioner grid on one problem")
    _add_shared_args(cmp_p)
    cmp_p.add_argument("--solvers", default="lobpcg,davidson", help="comma-separated solver list")
    cmp_p.add_argument("--preconds", default="diagonal", help="comma-separated preconditioner list")
    cmp_p.add_argument("--out", help="write the comparison table as CSV here")
    cmp_p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
