# -*- coding: utf-8 -*-
"""
Structure-aware transport: local-coherence penalties on top of the
curriculum-constrained entropic objective, minimized by a generalized
conditional gradient loop whose subproblems are plain curriculum solves.

The coherence terms are concave quadratics in the coupling, so the full
objective is nonconvex; the loop linearizes only the smooth cost-plus-
coherence part and keeps the entropy inside the subproblem.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    ConstraintKind,
    CsotError,
    FloatArray,
    InvalidInputError,
    SolveReport,
    StructureContext,
    TransportProblem,
)
from .curriculum_ot import _esi

# |objective change| below which the outer loop is considered stationary
STATIONARY_TOL = 1e-6
# column sums of a scaling-solver result are exact by construction, so any
# real deviation means the subproblem solve is broken
SUBPROBLEM_COL_TOL = 1e-6


@dataclass(frozen=True)
class GcgConfig:
    """Outer/inner loop sizes and line-search constants.

    ``epsilon`` and ``kappa`` default to None, meaning "take them from the
    TransportProblem / StructureContext"; setting them overrides those
    values for the solve.
    """

    outer_iters: int = 10
    inner_iters: int = 100
    epsilon: float | None = None
    kappa: float | None = None
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_max_backtracks: int = 30

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise InvalidInputError("iteration counts must be positive")
        if not (0.0 < self.armijo_c1 < 1.0):
            raise InvalidInputError("armijo_c1 must lie in (0, 1)")
        if not (0.0 < self.armijo_shrink < 1.0):
            raise InvalidInputError("armijo_shrink must lie in (0, 1)")
        if self.armijo_max_backtracks < 1:
            raise InvalidInputError("armijo_max_backtracks must be positive")
        for name in ("epsilon", "kappa"):
            val = getattr(self, name)
            if val is not None and not (math.isfinite(val) and val >= 0):
                raise InvalidInputError(f"{name} must be finite and nonnegative")


@dataclass
class GcgState:
    """One outer iteration: iterate, linearization, subproblem solution, step."""

    Q: FloatArray
    G: FloatArray
    Q_tilde: FloatArray
    eta: float
    objective: float


def _check_structure_dims(Q: FloatArray, ctx: StructureContext) -> None:
    if Q.shape != ctx.predictions.shape:
        raise InvalidInputError(
            f"coupling is {Q.shape} but context expects {ctx.predictions.shape}"
        )


def omega_p(Q, ctx: StructureContext) -> float:
    """Prediction-level coherence penalty -<S, (P*Q)(P*Q)^T>."""
    Q = np.asarray(Q, dtype=np.float64)
    _check_structure_dims(Q, ctx)
    X = ctx.predictions * Q
    return -float(np.sum((ctx.similarity @ X) * X))


def omega_l(Q, ctx: StructureContext) -> float:
    """Label-level coherence penalty -<S, (L*Q)(L*Q)^T>."""
    Q = np.asarray(Q, dtype=np.float64)
    _check_structure_dims(Q, ctx)
    Y = ctx.labels * Q
    return -float(np.sum((ctx.similarity @ Y) * Y))


def grad_omega(Q, ctx: StructureContext) -> FloatArray:
    """Gradient of ``omega_p + omega_l``; relies on the symmetry of S."""
    Q = np.asarray(Q, dtype=np.float64)
    _check_structure_dims(Q, ctx)
    S, P, L = ctx.similarity, ctx.predictions, ctx.labels
    return -2.0 * (P * (S @ (P * Q)) + L * (S @ (L * Q)))


def _entropy(Q: FloatArray) -> float:
    positive = Q[Q > 0]
    return float(np.sum(positive * np.log(positive)))


def _objective(Q: FloatArray, cost: FloatArray, ctx: StructureContext,
               kappa: float, epsilon: float) -> float:
    return (
        float(np.sum(cost * Q))
        + kappa * (omega_p(Q, ctx) + omega_l(Q, ctx))
        + epsilon * _entropy(Q)
    )


def csot_objective(Q, problem: TransportProblem, ctx: StructureContext) -> float:
    """<C, Q> + kappa (omega_p + omega_l) + epsilon <Q, log Q>, 0 log 0 = 0."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.shape != problem.shape:
        raise InvalidInputError(f"coupling is {Q.shape} but cost is {problem.shape}")
    if Q.min() < 0:
        raise InvalidInputError("coupling entries must be nonnegative")
    return _objective(Q, problem.cost, ctx, ctx.kappa, problem.epsilon)


def _directional_derivative(G: FloatArray, Q: FloatArray, D: FloatArray,
                            epsilon: float) -> float:
    # d/d_eta of the objective at eta = 0 along D, with the one-sided limit
    # -inf wherever Q = 0 and D > 0.
    zero = Q == 0
    if zero.any():
        if (D[zero] > 0).any():
            return -math.inf
        grad_ent = np.where(zero, 0.0, np.log(np.where(zero, 1.0, Q)) + 1.0)
    else:
        grad_ent = np.log(Q) + 1.0
    return float(np.sum((G + epsilon * grad_ent) * D))


def solve_csot_gcg(
    problem: TransportProblem,
    ctx: StructureContext,
    config: GcgConfig = GcgConfig(),
    warm_start: bool = False,
) -> tuple[FloatArray, SolveReport]:
    """Minimize the structure-aware entropic objective over the curriculum
    polytope by generalized conditional gradient.

    Parameters
    ----------
    problem : TransportProblem
        Curriculum-constrained instance; its cost is the linear term.
    ctx : StructureContext
        Similarity, predictions and labels feeding the coherence terms.
    config : GcgConfig
        Loop sizes and Armijo constants. ``config.kappa`` / ``config.epsilon``
        override ``ctx.kappa`` / ``problem.epsilon`` when set.
    warm_start : bool
        Reuse the previous outer step's column scaling to initialize each
        subproblem. Off by default: every subproblem starts from ones.

    Returns
    -------
    Q : ndarray
        Final iterate; a convex combination of feasible couplings.
    report : SolveReport
        ``objective_trace`` has ``outer_iters + 1`` entries and is
        non-increasing. ``stalled`` is set if any line search failed to find
        a decrease (that step keeps the current iterate).

    Notes
    -----
    Each outer step linearizes the smooth part at the iterate,
    ``G = C + kappa * grad_omega(Q)``, solves the entropic curriculum
    subproblem with ``G`` as its cost, and takes the Armijo-accepted convex
    combination. The entropy term stays in the subproblem rather than the
    linearization, which is what keeps the iterates strictly inside the
    polytope.
    """
    if problem.constraint_kind is not ConstraintKind.CURRICULUM_ROW_INEQUALITY:
        raise InvalidInputError("solve_csot_gcg requires CURRICULUM_ROW_INEQUALITY constraints")
    if ctx.predictions.shape != problem.shape:
        raise InvalidInputError(
            f"context shapes {ctx.predictions.shape} do not match problem {problem.shape}"
        )
    epsilon = problem.epsilon if config.epsilon is None else config.epsilon
    kappa = ctx.kappa if config.kappa is None else config.kappa
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    alpha = problem.row_marginal
    beta = problem.col_marginal
    cost = problem.cost
    start = time.perf_counter()

    # alpha beta^T scaled to unit row mass keeps the start feasible even for
    # non-probability row marginals
    Q = np.outer(alpha.entries, beta.entries) / alpha.mass
    trace = [_objective(Q, cost, ctx, kappa, epsilon)]
    stalled = False
    v_carry: FloatArray | None = None

    for _ in range(config.outer_iters):
        G = cost + kappa * grad_omega(Q, ctx)
        subproblem = TransportProblem(
            cost=G,
            row_marginal=alpha,
            col_marginal=beta,
            epsilon=epsilon,
            constraint_kind=ConstraintKind.CURRICULUM_ROW_INEQUALITY,
        )
        Q_tilde, sub_report, v_carry = _esi(
            subproblem, config.inner_iters, 1e-8, False,
            v_carry if warm_start else None,
        )
        # row sums of a finite-iteration scaling solve may overshoot their
        # bound slightly; that inexactness lands in the final report instead
        if (
            not np.isfinite(Q_tilde).all()
            or Q_tilde.min() < 0
            or sub_report.col_residual > SUBPROBLEM_COL_TOL
        ):
            raise CsotError("inner curriculum solve returned an infeasible coupling")

        D = Q_tilde - Q
        derivative = _directional_derivative(G, Q, D, epsilon)
        state = GcgState(Q=Q, G=G, Q_tilde=Q_tilde, eta=0.0, objective=trace[-1])
        if derivative < 0:
            eta = 1.0
            for _ in range(config.armijo_max_backtracks):
                candidate = (1.0 - eta) * Q + eta * Q_tilde
                value = _objective(candidate, cost, ctx, kappa, epsilon)
                goal = (
                    state.objective
                    if derivative == -math.inf
                    else state.objective + config.armijo_c1 * eta * derivative
                )
                if value <= goal and value < state.objective:
                    state.eta = eta
                    state.Q = candidate
                    state.objective = value
                    break
                eta *= config.armijo_shrink
        if state.eta == 0.0:
            stalled = True
        Q = state.Q
        trace.append(state.objective)

    row_over = float(np.maximum(Q.sum(axis=1) - alpha.entries, 0.0).max())
    col_res = float(np.abs(Q.sum(axis=0) - beta.entries).max())
    report = SolveReport(
        iterations=config.outer_iters,
        objective_trace=tuple(trace),
        row_residual=row_over,
        col_residual=col_res,
        wall_time_ms=(time.perf_counter() - start) * 1e3,
        converged=bool(
            abs(trace[-1] - trace[-2]) <= STATIONARY_TOL
            and row_over <= 1e-8
            and col_res <= 1e-8
        ),
        stalled=stalled,
    )
    return Q, report
