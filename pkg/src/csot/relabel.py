# -*- coding: utf-8 -*-
"""
Denoising and relabeling on top of a solved coupling: pseudo-labels by row
argmax, confidence weights against the per-class budget, top-k selection,
and the clean/corrupted split of a noisy batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConstraintKind,
    FloatArray,
    IntArray,
    InvalidInputError,
    Marginal,
    SolveReport,
    StructureContext,
    TransportProblem,
    as_labels,
    as_matrix,
    cost_from_predictions,
    one_hot,
)
from .structured import GcgConfig, solve_csot_gcg

DEFAULT_EPSILON = 0.1
DEFAULT_KAPPA = 1.0
# absorbs float rounding in m * B before the floor
_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class BudgetSchedule:
    """Linear ramp from ``m0`` to 1 over a supervised phase of ``t_sup`` steps."""

    m0: float = 0.3
    t_sup: int = 250

    def __post_init__(self):
        if not (0.0 < self.m0 <= 1.0):
            raise InvalidInputError("m0 must lie in (0, 1]")
        if self.t_sup < 2:
            raise InvalidInputError("t_sup must be at least 2")


def budget(t: int, schedule: BudgetSchedule) -> float:
    """min(1, m0 + (t - 1) / (t_sup - 1)) for step t >= 1."""
    if t < 1:
        raise InvalidInputError("t must be at least 1")
    return min(1.0, schedule.m0 + (t - 1) / (schedule.t_sup - 1))


@dataclass(frozen=True)
class RelabelOutcome:
    """Per-sample pseudo-labels, confidence weights, selection mask and the
    resulting clean/corrupted index sets."""

    pseudo_labels: IntArray
    weights: FloatArray
    selected: np.ndarray
    clean_indices: IntArray
    corrupted_indices: IntArray

    def __post_init__(self):
        for name in ("pseudo_labels", "weights", "selected", "clean_indices", "corrupted_indices"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def pseudo_labels(Q) -> IntArray:
    """Column index of each row maximum; ties go to the lowest column."""
    Q = as_matrix(Q, "coupling")
    return Q.argmax(axis=1).astype(np.int64)


def confidence_weights(Q, m: float, num_classes: int) -> FloatArray:
    """Row-max coupling mass normalized by the per-class budget ``m / C``.

    Values are clipped to [0, 1]; the column-sum constraint bounds each
    entry by ``m / C`` up to solver tolerance, so the clip only absorbs
    rounding overshoot.
    """
    Q = as_matrix(Q, "coupling")
    if not (m > 0 and math.isfinite(m)):
        raise InvalidInputError("budget m must be positive")
    if num_classes < 1:
        raise InvalidInputError("num_classes must be positive")
    best = Q[np.arange(Q.shape[0]), Q.argmax(axis=1)]
    return np.clip(best * (num_classes / m), 0.0, 1.0)


def selection_size(m: float, batch: int) -> int:
    """floor(m * B), with a tiny slack so exact products are not lost to
    float rounding (0.7 * 10 must select 7)."""
    return int(math.floor(m * batch + _FLOOR_SLACK))


def select(weights, m: float) -> np.ndarray:
    """Boolean mask of the floor(m * B) largest weights, low index wins ties."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidInputError("weights must be a nonempty 1-d vector")
    if not (0.0 < m <= 1.0):
        raise InvalidInputError("budget m must lie in (0, 1]")
    k = selection_size(m, w.size)
    mask = np.zeros(w.size, dtype=bool)
    if k > 0:
        order = np.argsort(-w, kind="stable")
        mask[order[:k]] = True
    return mask


def split(
    noisy_labels, pseudo, selected, selected_only_corrupted: bool = False
) -> tuple[IntArray, IntArray]:
    """Clean = selected samples whose pseudo-label agrees with the given
    label; corrupted = every disagreeing sample, selected or not.

    ``selected_only_corrupted`` additionally gates the corrupted set by the
    selection mask; off by default.
    """
    y = as_labels(noisy_labels, "noisy_labels")
    y_hat = as_labels(pseudo, "pseudo_labels")
    mask = np.asarray(selected, dtype=bool)
    if not (y.shape == y_hat.shape == mask.shape):
        raise InvalidInputError("noisy_labels, pseudo labels and mask must share length")
    agree = y_hat == y
    clean = np.flatnonzero(agree & mask).astype(np.int64)
    disagree = ~agree & mask if selected_only_corrupted else ~agree
    corrupted = np.flatnonzero(disagree).astype(np.int64)
    return clean, corrupted


def denoise_relabel_batch(
    predictions,
    similarity,
    labels,
    noisy_labels,
    m: float,
    config: GcgConfig = GcgConfig(),
    floor: float = 1e-30,
) -> tuple[RelabelOutcome, SolveReport]:
    """Run the full allocator on one batch.

    Builds the negative-log cost from ``predictions``, solves the
    structure-aware curriculum problem with uniform marginals (rows 1/B,
    columns m/C), and derives pseudo-labels, weights, the top-k selection
    and the clean/corrupted split from the coupling.

    Parameters
    ----------
    predictions : (B, C) array
        Softmax predictions, rows on the simplex.
    similarity : (B, B) array
        Symmetric sample similarity.
    labels : (B, C) array or None
        One-hot encoding of ``noisy_labels``; derived from ``noisy_labels``
        when None.
    noisy_labels : (B,) int array
        Given (possibly corrupted) class indices.
    m : float
        Curriculum budget in (0, 1].
    config : GcgConfig
        Solver configuration; ``epsilon`` / ``kappa`` default to 0.1 / 1.0
        here when unset.
    """
    P = as_matrix(predictions, "predictions")
    y = as_labels(noisy_labels, "noisy_labels")
    if not (0.0 < m <= 1.0):
        raise InvalidInputError("budget m must lie in (0, 1]")
    n_batch, n_classes = P.shape
    if y.size != n_batch:
        raise InvalidInputError(f"predictions have {n_batch} rows, labels {y.size}")
    L = one_hot(y, n_classes) if labels is None else as_matrix(labels, "labels")
    epsilon = DEFAULT_EPSILON if config.epsilon is None else config.epsilon
    kappa = DEFAULT_KAPPA if config.kappa is None else config.kappa
    ctx = StructureContext(similarity=similarity, predictions=P, labels=L, kappa=kappa)
    problem = TransportProblem(
        cost=cost_from_predictions(P, floor=floor),
        row_marginal=Marginal.uniform(n_batch, 1.0),
        col_marginal=Marginal.uniform(n_classes, m),
        epsilon=epsilon,
        constraint_kind=ConstraintKind.CURRICULUM_ROW_INEQUALITY,
    )
    Q, report = solve_csot_gcg(problem, ctx, config)
    y_hat = pseudo_labels(Q)
    weights = confidence_weights(Q, m, n_classes)
    mask = select(weights, m)
    clean, corrupted = split(y, y_hat, mask)
    outcome = RelabelOutcome(
        pseudo_labels=y_hat,
        weights=weights,
        selected=mask,
        clean_indices=clean,
        corrupted_indices=corrupted,
    )
    return outcome, report
