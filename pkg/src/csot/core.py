# -*- coding: utf-8 -*-
"""
Shared numeric types, matrix I/O, and primitive constructions.

All container types are immutable after construction (arrays are stored
read-only), so every operation in this package is safe to call concurrently.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

MAGIC = b"CSOTMAT1"


class CsotError(Exception):
    """Base error; ``code`` is a stable machine-readable prefix."""

    code = "E_INTERNAL"


class InvalidInputError(CsotError, ValueError):
    """Invalid argument values (negative weights, bad ranges, ...)."""

    code = "E_VALUE"


class DimensionError(InvalidInputError):
    """Shapes of the inputs are inconsistent."""

    code = "E_DIM"


class MatrixFormatError(InvalidInputError):
    """A matrix file is malformed (bad magic, ragged rows, ...)."""

    code = "E_IO"


class NumericalError(CsotError, ArithmeticError):
    """Scaling state over/underflowed; usually a too-small epsilon."""

    code = "E_NUM"


def as_matrix(values, name: str = "matrix") -> FloatArray:
    """Validate and return a dense 2-d float64 array.

    Rejects empty dimensions, non-rectangular input and non-finite entries.
    """
    try:
        arr = np.array(values, dtype=np.float64, order="C")
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not a numeric rectangular grid: {exc}") from exc
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name} has a zero dimension: shape={arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def as_labels(values, name: str = "labels") -> IntArray:
    """Validate and return a 1-d vector of nonnegative class indices."""
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a nonempty 1-d sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        cast = arr.astype(np.int64)
        if not np.array_equal(cast, arr):
            raise InvalidInputError(f"{name} must hold integer class indices")
        arr = cast
    if (arr < 0).any():
        raise InvalidInputError(f"{name} contains negative class indices")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class Marginal:
    """A nonnegative marginal vector with its total mass cached."""

    entries: FloatArray
    mass: float = field(init=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 1 or entries.size == 0:
            raise DimensionError("marginal must be a nonempty 1-d vector")
        if not np.isfinite(entries).all():
            raise InvalidInputError("marginal contains non-finite entries")
        if (entries < 0).any():
            raise InvalidInputError("marginal entries must be nonnegative")
        object.__setattr__(self, "entries", _freeze(entries.copy()))
        object.__setattr__(self, "mass", float(entries.sum()))

    def __len__(self) -> int:
        return self.entries.size

    @staticmethod
    def uniform(size: int, mass: float = 1.0) -> "Marginal":
        """Uniform marginal of ``size`` entries summing to ``mass``."""
        if size < 1:
            raise InvalidInputError("marginal size must be positive")
        if not (mass > 0 and math.isfinite(mass)):
            raise InvalidInputError("marginal mass must be positive and finite")
        return Marginal(np.full(size, mass / size))


class ConstraintKind(enum.Enum):
    EQUALITY = "equality"
    CURRICULUM_ROW_INEQUALITY = "curriculum-row-inequality"


@dataclass(frozen=True)
class TransportProblem:
    """Cost matrix, row/column marginals, entropic weight and constraint kind.

    With ``EQUALITY`` both marginal constraints are equalities. With
    ``CURRICULUM_ROW_INEQUALITY`` the row sums are only bounded above by the
    row marginal, which requires the row mass to dominate the column mass.
    """

    cost: FloatArray
    row_marginal: Marginal
    col_marginal: Marginal
    epsilon: float
    constraint_kind: ConstraintKind = ConstraintKind.EQUALITY

    def __post_init__(self):
        cost = as_matrix(self.cost, "cost")
        object.__setattr__(self, "cost", _freeze(cost))
        n, m = cost.shape
        if len(self.row_marginal) != n or len(self.col_marginal) != m:
            raise DimensionError(
                f"cost is {n}x{m} but marginals have lengths "
                f"{len(self.row_marginal)} and {len(self.col_marginal)}"
            )
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidInputError("epsilon must be positive and finite")
        if self.constraint_kind is ConstraintKind.CURRICULUM_ROW_INEQUALITY:
            slack = 1e-12 * max(1.0, self.row_marginal.mass)
            if self.row_marginal.mass < self.col_marginal.mass - slack:
                raise InvalidInputError(
                    "curriculum constraints need row mass >= column mass, got "
                    f"{self.row_marginal.mass} < {self.col_marginal.mass}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


@dataclass(frozen=True)
class StructureContext:
    """Sample similarity, predictions, one-hot labels and the coherence weight.

    ``similarity`` must be exactly the shape the coherence terms assume:
    square, symmetric within 1e-12 and bounded by [-1, 1]. Asymmetric input is
    rejected rather than symmetrized, since the analytic gradient relies on
    symmetry.
    """

    similarity: FloatArray
    predictions: FloatArray
    labels: FloatArray
    kappa: float = 1.0

    def __post_init__(self):
        sim = as_matrix(self.similarity, "similarity")
        pred = as_matrix(self.predictions, "predictions")
        lab = as_matrix(self.labels, "labels")
        if sim.shape[0] != sim.shape[1]:
            raise DimensionError(f"similarity must be square, got {sim.shape}")
        if not np.allclose(sim, sim.T, rtol=0, atol=1e-12):
            raise InvalidInputError("similarity matrix is not symmetric within 1e-12")
        if sim.min() < -1 - 1e-12 or sim.max() > 1 + 1e-12:
            raise InvalidInputError("similarity entries must lie in [-1, 1]")
        b = sim.shape[0]
        if pred.shape[0] != b or lab.shape != pred.shape:
            raise DimensionError(
                f"similarity is {sim.shape}, predictions {pred.shape}, labels {lab.shape}"
            )
        if (pred < 0).any():
            raise InvalidInputError("prediction entries must be nonnegative")
        if not np.allclose(pred.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise InvalidInputError("prediction rows must sum to 1 within 1e-9")
        if not np.isin(lab, (0.0, 1.0)).all() or not (lab.sum(axis=1) == 1.0).all():
            raise InvalidInputError("label rows must be one-hot")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise InvalidInputError("kappa must be nonnegative and finite")
        object.__setattr__(self, "similarity", _freeze(sim))
        object.__setattr__(self, "predictions", _freeze(pred))
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def batch_size(self) -> int:
        return self.predictions.shape[0]

    @property
    def num_classes(self) -> int:
        return self.predictions.shape[1]


@dataclass(frozen=True)
class SolveReport:
    """Solver diagnostics.

    ``row_residual`` is one-sided (max overshoot of a row sum above its
    marginal, the violation that matters under curriculum constraints) while
    ``col_residual`` is the two-sided max deviation of the column sums.
    """

    iterations: int
    objective_trace: tuple[float, ...]
    row_residual: float
    col_residual: float
    wall_time_ms: float
    converged: bool
    stalled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "objective_trace", tuple(self.objective_trace))


def marginal_residuals(Q: FloatArray, alpha: Marginal, beta: Marginal) -> tuple[float, float]:
    """(one-sided row residual, two-sided column residual) of a coupling."""
    row = float(np.maximum(Q.sum(axis=1) - alpha.entries, 0.0).max())
    col = float(np.abs(Q.sum(axis=0) - beta.entries).max())
    return row, col


def entropic_objective(Q: FloatArray, cost: FloatArray, epsilon: float) -> float:
    """<C, Q> + epsilon * <Q, log Q> with the 0 log 0 = 0 convention."""
    positive = Q[Q > 0]
    return float(np.sum(cost * Q)) + epsilon * float(np.sum(positive * np.log(positive)))


def cost_from_predictions(predictions, floor: float = 1e-30) -> FloatArray:
    """Negative-log cost matrix from a softmax prediction matrix.

    Entries are clamped to ``floor`` before the log so that zero
    probabilities give a large finite cost instead of infinity.
    """
    P = as_matrix(predictions, "predictions")
    if not (0.0 < floor < 1.0):
        raise InvalidInputError("floor must lie in (0, 1)")
    return -np.log(np.maximum(P, floor))


def cosine_similarity(features) -> FloatArray:
    """Pairwise cosine similarity of the rows of a feature matrix.

    The result is exactly symmetric with unit diagonal and entries in [-1, 1].
    """
    X = as_matrix(features, "features")
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise InvalidInputError(f"feature row {int(zero[0])} has zero norm")
    Xn = X / norms[:, None]
    S = Xn @ Xn.T
    S = 0.5 * (S + S.T)
    np.clip(S, -1.0, 1.0, out=S)
    np.fill_diagonal(S, 1.0)
    return S


def one_hot(labels, num_classes: int) -> FloatArray:
    """One-hot encode a vector of class indices into a B x C matrix."""
    idx = as_labels(labels)
    if num_classes < 1:
        raise InvalidInputError("num_classes must be positive")
    if (idx >= num_classes).any():
        bad = int(idx[idx >= num_classes][0])
        raise InvalidInputError(f"label {bad} is out of range for {num_classes} classes")
    out = np.zeros((idx.size, num_classes))
    out[np.arange(idx.size), idx] = 1.0
    return out


def _infer_format(path: str, format: str | None) -> str:
    if format is not None:
        if format not in ("csv", "binary"):
            raise InvalidInputError(f"unknown matrix format {format!r}")
        return format
    return "csv" if str(path).endswith(".csv") else "binary"


def save_matrix(matrix, path: str, format: str | None = None) -> None:
    """Write a matrix either as CSOTMAT1 binary or as headerless CSV.

    The binary layout is the 8 magic bytes ``CSOTMAT1`` followed by rows and
    cols as little-endian uint64 and the row-major float64 payload; round
    trips are bit exact. CSV cells use 17 significant digits so that parsing
    them back reproduces the exact double.
    """
    M = as_matrix(matrix, "matrix")
    fmt = _infer_format(path, format)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQ", M.shape[0], M.shape[1]))
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            for row in M:
                fh.write(",".join(format_cell(x) for x in row))
                fh.write("\n")


def format_cell(x: float) -> str:
    return "%.17g" % x


def load_matrix(path: str, format: str | None = None) -> FloatArray:
    """Read a matrix written by :func:`save_matrix`."""
    fmt = _infer_format(path, format)
    if fmt == "binary":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != MAGIC:
            raise MatrixFormatError(f"{path}: bad magic bytes, expected {MAGIC!r}")
        if len(blob) < 24:
            raise MatrixFormatError(f"{path}: truncated header")
        rows, cols = struct.unpack("<QQ", blob[8:24])
        if rows == 0 or cols == 0:
            raise MatrixFormatError(f"{path}: zero dimension in header ({rows}x{cols})")
        expected = 24 + 8 * rows * cols
        if len(blob) != expected:
            raise MatrixFormatError(
                f"{path}: truncated payload, expected {expected} bytes got {len(blob)}"
            )
        values = np.frombuffer(blob, dtype="<f8", offset=24).astype(np.float64)
        if not np.isfinite(values).all():
            raise MatrixFormatError(f"{path}: payload contains non-finite values")
        return values.reshape(rows, cols)

    rows_out: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise MatrixFormatError(
                    f"{path}: ragged row at line {lineno} ({len(cells)} cells, expected {width})"
                )
            try:
                rows_out.append([float(c) for c in cells])
            except ValueError:
                raise MatrixFormatError(f"{path}: non-numeric cell at line {lineno}") from None
    if not rows_out:
        raise MatrixFormatError(f"{path}: empty csv matrix")
    return as_matrix(rows_out, path)
