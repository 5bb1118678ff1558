# -*- coding: utf-8 -*-
"""
Timing harness comparing the dense-state curriculum solver against the
scaling-vector one on shared random instances.

Runs are single-threaded by default (solver BLAS included) so medians are
comparable across machines; pass ``parallel=True`` to lift the cap.
"""

from __future__ import annotations

import contextlib
import json
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .core import ConstraintKind, CsotError, InvalidInputError, Marginal, TransportProblem
from .curriculum_ot import solve_cot_dykstra, solve_cot_esi

# both solvers must agree on every timed instance or the timings mean nothing
AGREEMENT_TOL = 1e-6
WARMUP_ITERS = 10
BENCH_BUDGET = 0.5


@dataclass(frozen=True)
class BenchResult:
    rows: int
    cols: int
    algo: str
    trials: int
    median_ms: float
    min_ms: float
    max_ms: float


def _instance(rows: int, cols: int, epsilon: float, seed: int) -> TransportProblem:
    # child stream keyed by size so the instance is independent of list order
    rng = np.random.default_rng([seed, rows, cols])
    return TransportProblem(
        cost=rng.uniform(0.0, 1.0, (rows, cols)),
        row_marginal=Marginal.uniform(rows, 1.0),
        col_marginal=Marginal.uniform(cols, BENCH_BUDGET),
        epsilon=epsilon,
        constraint_kind=ConstraintKind.CURRICULUM_ROW_INEQUALITY,
    )


def run_benchmark(
    sizes: list[tuple[int, int]],
    trials: int = 5,
    iters: int = 100,
    epsilon: float = 0.1,
    seed: int = 0,
    parallel: bool = False,
) -> list[BenchResult]:
    """Time both curriculum solvers on one shared instance per size.

    Per size and solver: one short discarded warm-up run, then ``trials``
    timed runs at the full iteration count. Outputs are cross-checked within
    ``1e-6`` before any timing is reported; disagreement aborts the
    benchmark.
    """
    if trials < 3:
        raise InvalidInputError("need at least 3 trials for a stable median")
    if iters < 1:
        raise InvalidInputError("iters must be positive")
    results: list[BenchResult] = []
    limiter = contextlib.nullcontext() if parallel else threadpool_limits(limits=1)
    with limiter:
        for rows, cols in sizes:
            problem = _instance(rows, cols, epsilon, seed)
            per_algo: dict[str, list[float]] = {}
            outputs: dict[str, np.ndarray] = {}
            for algo, solver in (("vda", solve_cot_dykstra), ("esi", solve_cot_esi)):
                solver(problem, num_iters=min(iters, WARMUP_ITERS))  # discarded warm-up
                times = []
                Q = None
                for _ in range(trials):
                    t0 = time.perf_counter()
                    Q, _ = solver(problem, num_iters=iters)
                    times.append((time.perf_counter() - t0) * 1e3)
                per_algo[algo] = times
                outputs[algo] = Q
            gap = float(np.abs(outputs["vda"] - outputs["esi"]).max())
            if gap > AGREEMENT_TOL:
                raise CsotError(
                    f"solvers disagree by {gap:.3e} on {rows}x{cols}; refusing to report timings"
                )
            for algo in ("vda", "esi"):
                times = per_algo[algo]
                results.append(
                    BenchResult(
                        rows=rows,
                        cols=cols,
                        algo=algo,
                        trials=trials,
                        median_ms=float(statistics.median(times)),
                        min_ms=min(times),
                        max_ms=max(times),
                    )
                )
    return results


CSV_HEADER = "rows,cols,algo,trials,median_ms,min_ms,max_ms"


def results_to_csv(results: list[BenchResult]) -> str:
    lines = [CSV_HEADER]
    for r in results:
        lines.append(
            f"{r.rows},{r.cols},{r.algo},{r.trials},"
            f"{r.median_ms:.6f},{r.min_ms:.6f},{r.max_ms:.6f}"
        )
    return "\n".join(lines) + "\n"


def results_to_json(results: list[BenchResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=2) + "\n"
