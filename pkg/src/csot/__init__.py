# -*- coding: utf-8 -*-
"""
Curriculum and structure-aware optimal transport toolkit.

Entropic OT baselines, curriculum-constrained scaling solvers, a nonconvex
structure-aware objective minimized by generalized conditional gradient, and
the denoising/relabeling pipeline built on top, plus a synthetic noisy-label
simulator and a solver timing harness.
"""

from .bench import BenchResult, run_benchmark
from .core import (
    ConstraintKind,
    CsotError,
    DimensionError,
    InvalidInputError,
    Marginal,
    MatrixFormatError,
    NumericalError,
    SolveReport,
    StructureContext,
    TransportProblem,
    as_matrix,
    cosine_similarity,
    cost_from_predictions,
    load_matrix,
    one_hot,
    save_matrix,
)
from .curriculum_ot import (
    DykstraState,
    kl_project_col_equality,
    kl_project_row_inequality,
    solve_cot_dykstra,
    solve_cot_esi,
)
from .relabel import (
    BudgetSchedule,
    RelabelOutcome,
    budget,
    confidence_weights,
    denoise_relabel_batch,
    pseudo_labels,
    select,
    split,
)
from .simlab import (
    RelabelMetrics,
    SimDataset,
    apply_noise,
    evaluate,
    generate_gaussian_mixture,
    inject_asymmetric_noise,
    inject_symmetric_noise,
    prototype_predictions,
    simplex_prototypes,
)
from .sinkhorn import ScalingState, solve_sinkhorn
from .structured import (
    GcgConfig,
    GcgState,
    csot_objective,
    grad_omega,
    omega_l,
    omega_p,
    solve_csot_gcg,
)

__version__ = "0.1.0"

__all__ = [
    "BenchResult",
    "BudgetSchedule",
    "ConstraintKind",
    "CsotError",
    "DimensionError",
    "DykstraState",
    "GcgConfig",
    "GcgState",
    "InvalidInputError",
    "Marginal",
    "MatrixFormatError",
    "NumericalError",
    "RelabelMetrics",
    "RelabelOutcome",
    "ScalingState",
    "SimDataset",
    "SolveReport",
    "StructureContext",
    "TransportProblem",
    "apply_noise",
    "as_matrix",
    "budget",
    "confidence_weights",
    "cosine_similarity",
    "cost_from_predictions",
    "csot_objective",
    "denoise_relabel_batch",
    "evaluate",
    "generate_gaussian_mixture",
    "grad_omega",
    "inject_asymmetric_noise",
    "inject_symmetric_noise",
    "kl_project_col_equality",
    "kl_project_row_inequality",
    "load_matrix",
    "omega_l",
    "omega_p",
    "one_hot",
    "prototype_predictions",
    "pseudo_labels",
    "run_benchmark",
    "save_matrix",
    "select",
    "simplex_prototypes",
    "solve_cot_dykstra",
    "solve_cot_esi",
    "solve_csot_gcg",
    "solve_sinkhorn",
    "split",
]
