# -*- coding: utf-8 -*-
"""
Command-line entry point.

Subcommands: ``solve`` (one transport problem from matrix files), ``relabel``
(full allocator on a prediction batch), ``simulate`` (synthetic noisy-label
dataset) and ``bench`` (solver timing comparison). Outputs are written
atomically (temp file + rename); errors print a single ``E_*:`` prefixed line
on stderr and exit 1 (exit 2 is reserved for ``--strict`` non-convergence).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .bench import results_to_csv, results_to_json, run_benchmark
from .core import (
    ConstraintKind,
    CsotError,
    InvalidInputError,
    Marginal,
    SolveReport,
    TransportProblem,
    load_matrix,
    save_matrix,
)
from .curriculum_ot import solve_cot_dykstra, solve_cot_esi
from .relabel import denoise_relabel_batch
from .simlab import apply_noise, generate_gaussian_mixture, save_dataset
from .sinkhorn import solve_sinkhorn
from .structured import GcgConfig, solve_csot_gcg


class _UsageError(CsotError):
    code = "E_FLAG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2) with its own format
        raise _UsageError(message)


def _atomic_write(path: str, data: bytes | str) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".csot-tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _atomic_save_matrix(matrix, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".csot-tmp-")
    os.close(fd)
    try:
        save_matrix(matrix, tmp, "csv" if path.endswith(".csv") else "binary")
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _load_marginal(path: str) -> Marginal:
    return Marginal(load_matrix(path, "csv").reshape(-1))


def _load_labels_csv(path: str) -> np.ndarray:
    values = load_matrix(path, "csv").reshape(-1)
    rounded = np.rint(values)
    if not np.array_equal(rounded, values):
        raise InvalidInputError(f"{path}: labels must be integers")
    return rounded.astype(np.int64)


def _report_dict(algo: str, report: SolveReport, deterministic: bool) -> dict:
    return {
        "algo": algo,
        "iterations": report.iterations,
        "converged": report.converged,
        "objective_trace": list(report.objective_trace),
        "row_residual": report.row_residual,
        "col_residual": report.col_residual,
        # pinned to zero in deterministic mode so reruns are byte-identical
        "wall_time_ms": 0.0 if deterministic else report.wall_time_ms,
    }


def _json_bytes(payload) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=0.1, help="entropic weight (default 0.1)")
    p.add_argument("--kappa", type=float, default=1.0, help="coherence weight (default 1)")
    p.add_argument("--budget", type=float, default=0.3, help="curriculum budget m (default 0.3)")
    p.add_argument("--inner-iters", type=int, default=100, help="scaling iterations (default 100)")
    p.add_argument("--outer-iters", type=int, default=10, help="outer GCG steps (default 10)")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded solves, timings zeroed in outputs")
    p.add_argument("--strict", action="store_true", help="exit 2 if the solve did not converge")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csot", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one transport problem from matrix files")
    p_solve.add_argument("--algo", required=True,
                         choices=("sinkhorn", "cot-dykstra", "cot-esi", "csot"))
    p_solve.add_argument("--cost", required=True, help="cost matrix (.csmat)")
    p_solve.add_argument("--pred", help="prediction matrix (.csmat), csot only")
    p_solve.add_argument("--labels", help="one-hot label matrix (.csmat), csot only")
    p_solve.add_argument("--sim", help="similarity matrix (.csmat), csot only")
    p_solve.add_argument("--row-marginal", required=True, help="row marginal (.csv)")
    p_solve.add_argument("--col-marginal", required=True, help="column marginal (.csv)")
    _add_solver_flags(p_solve)
    p_solve.add_argument("--out", required=True, help="output coupling (.csmat)")
    p_solve.add_argument("--report", required=True, help="output report (.json)")

    p_rel = sub.add_parser("relabel", help="denoise and relabel one batch")
    p_rel.add_argument("--pred", required=True, help="prediction matrix (.csmat)")
    p_rel.add_argument("--sim", required=True, help="similarity matrix (.csmat)")
    p_rel.add_argument("--noisy-labels", required=True, help="class indices (.csv)")
    _add_solver_flags(p_rel)
    p_rel.add_argument("--out", required=True, help="output outcome (.json)")

    p_sim = sub.add_parser("simulate", help="generate a synthetic noisy-label dataset")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--classes", type=int, required=True)
    p_sim.add_argument("--dim", type=int, required=True)
    p_sim.add_argument("--separation", type=float, default=4.0)
    p_sim.add_argument("--noise", default="sym:0.0", help="KIND:RATIO with KIND sym|asym")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out-dir", required=True)

    p_bench = sub.add_parser("bench", help="time the curriculum solvers")
    p_bench.add_argument("--sizes", required=True, help="RxC[,RxC...] e.g. 1024x10,3000x3000")
    p_bench.add_argument("--trials", type=int, default=5)
    p_bench.add_argument("--iters", type=int, default=100)
    p_bench.add_argument("--epsilon", type=float, default=0.1)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--parallel", action="store_true",
                         help="lift the single-thread cap (excluded from comparisons)")
    p_bench.add_argument("--out", required=True, help="output CSV; a .json mirror sits next to it")
    return parser


def _require_file(path: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return path


def _thread_cap(active: bool):
    if not active:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def _cmd_solve(args) -> int:
    cost = load_matrix(_require_file(args.cost), "binary")
    alpha = _load_marginal(_require_file(args.row_marginal))
    beta = _load_marginal(_require_file(args.col_marginal))
    kind = (
        ConstraintKind.EQUALITY
        if args.algo == "sinkhorn"
        else ConstraintKind.CURRICULUM_ROW_INEQUALITY
    )
    problem = TransportProblem(
        cost=cost,
        row_marginal=alpha,
        col_marginal=beta,
        epsilon=args.epsilon,
        constraint_kind=kind,
    )
    with _thread_cap(args.deterministic):
        if args.algo == "sinkhorn":
            Q, report = solve_sinkhorn(problem, max_iters=args.inner_iters)
        elif args.algo == "cot-dykstra":
            Q, report = solve_cot_dykstra(problem, num_iters=args.inner_iters)
        elif args.algo == "cot-esi":
            Q, report = solve_cot_esi(problem, num_iters=args.inner_iters)
        else:
            from .core import StructureContext

            for flag, value in (("--pred", args.pred), ("--labels", args.labels),
                                ("--sim", args.sim)):
                if value is None:
                    raise _UsageError(f"--algo csot requires {flag}")
            ctx = StructureContext(
                similarity=load_matrix(_require_file(args.sim), "binary"),
                predictions=load_matrix(_require_file(args.pred), "binary"),
                labels=load_matrix(_require_file(args.labels), "binary"),
                kappa=args.kappa,
            )
            config = GcgConfig(
                outer_iters=args.outer_iters,
                inner_iters=args.inner_iters,
                epsilon=args.epsilon,
                kappa=args.kappa,
            )
            Q, report = solve_csot_gcg(problem, ctx, config)
    _atomic_save_matrix(Q, args.out)
    _atomic_write(args.report, _json_bytes(_report_dict(args.algo, report, args.deterministic)))
    if args.strict and not report.converged:
        print(f"E_CONVERGENCE: {args.algo} did not converge", file=sys.stderr)
        return 2
    return 0


def _cmd_relabel(args) -> int:
    predictions = load_matrix(_require_file(args.pred), "binary")
    similarity = load_matrix(_require_file(args.sim), "binary")
    noisy = _load_labels_csv(_require_file(args.noisy_labels))
    config = GcgConfig(
        outer_iters=args.outer_iters,
        inner_iters=args.inner_iters,
        epsilon=args.epsilon,
        kappa=args.kappa,
    )
    with _thread_cap(args.deterministic):
        outcome, report = denoise_relabel_batch(
            predictions, similarity, None, noisy, args.budget, config
        )
    payload = {
        "budget": args.budget,
        "pseudo_labels": outcome.pseudo_labels.tolist(),
        "weights": outcome.weights.tolist(),
        "selected": outcome.selected.astype(int).tolist(),
        "clean_indices": outcome.clean_indices.tolist(),
        "corrupted_indices": outcome.corrupted_indices.tolist(),
        "report": _report_dict("csot", report, args.deterministic),
    }
    _atomic_write(args.out, _json_bytes(payload))
    if args.strict and not report.converged:
        print("E_CONVERGENCE: relabel solve did not converge", file=sys.stderr)
        return 2
    return 0


def _cmd_simulate(args) -> int:
    kinds = {"sym": "symmetric", "asym": "asymmetric"}
    try:
        kind_token, ratio_token = args.noise.split(":", 1)
        kind = kinds[kind_token]
        ratio = float(ratio_token)
    except (ValueError, KeyError):
        raise _UsageError(f"--noise must be sym:RATIO or asym:RATIO, got {args.noise!r}")
    dataset = generate_gaussian_mixture(args.n, args.classes, args.dim, args.separation, args.seed)
    if ratio > 0:
        dataset = apply_noise(dataset, kind, ratio, args.seed + 1)
    save_dataset(dataset, args.out_dir)
    return 0


def _cmd_bench(args) -> int:
    sizes = []
    for token in args.sizes.split(","):
        try:
            r, c = token.lower().split("x")
            sizes.append((int(r), int(c)))
        except ValueError:
            raise _UsageError(f"bad size {token!r}, expected RxC")
    results = run_benchmark(
        sizes, trials=args.trials, iters=args.iters,
        epsilon=args.epsilon, seed=args.seed, parallel=args.parallel,
    )
    _atomic_write(args.out, results_to_csv(results))
    mirror = os.path.splitext(args.out)[0] + ".json"
    _atomic_write(mirror, results_to_json(results))
    return 0


def dispatch(argv: list[str]) -> int:
    """Parse ``argv`` and run the selected subcommand, mapping failures to
    single-line ``E_*:`` diagnostics and exit status 1."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "relabel":
            return _cmd_relabel(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_bench(args)
    except FileNotFoundError as exc:
        print(f"E_IO: file not found: {exc.args[0]}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return 1
    except CsotError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
