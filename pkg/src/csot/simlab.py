# -*- coding: utf-8 -*-
"""
Synthetic noisy-label scenarios at desk scale: Gaussian-mixture features
around equidistant class prototypes, symmetric/asymmetric label noise, a
prototype-softmax stand-in for classifier predictions, and the metrics used
to judge an allocator (clean precision/recall, corrected accuracy).

Every generator derives its own stream from the seed it is given; nothing
touches global random state.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    FloatArray,
    IntArray,
    InvalidInputError,
    as_labels,
    as_matrix,
    load_matrix,
    save_matrix,
)
from .relabel import RelabelOutcome

NOISE_KINDS = ("symmetric", "asymmetric")
# sentinel for rates whose denominator set is empty
UNDEFINED_RATE = float("nan")


@dataclass(frozen=True)
class SimDataset:
    """Features with true and (possibly corrupted) observed labels."""

    features: FloatArray
    true_labels: IntArray
    noisy_labels: IntArray
    num_classes: int
    noise_spec: tuple[str, float]
    seed: int

    def __post_init__(self):
        feats = as_matrix(self.features, "features")
        true = as_labels(self.true_labels, "true_labels")
        noisy = as_labels(self.noisy_labels, "noisy_labels")
        if true.size != feats.shape[0] or noisy.size != feats.shape[0]:
            raise InvalidInputError("label vectors must match the number of feature rows")
        if (true >= self.num_classes).any() or (noisy >= self.num_classes).any():
            raise InvalidInputError("label index out of range")
        kind, ratio = self.noise_spec
        if kind not in NOISE_KINDS or not (0.0 <= ratio <= 1.0):
            raise InvalidInputError(f"bad noise spec {self.noise_spec!r}")
        for name, arr in (("features", feats), ("true_labels", true), ("noisy_labels", noisy)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def flip_count(self) -> int:
        return int(np.count_nonzero(self.noisy_labels != self.true_labels))


@dataclass(frozen=True)
class RelabelMetrics:
    """Quality of a clean/corrupted split against ground truth.

    Rates over an empty set are reported as NaN rather than raising.
    ``confusion[t, p]`` counts samples with true class ``t`` and pseudo-label
    ``p``, so each row sums to that class's sample count.
    """

    clean_precision: float
    clean_recall: float
    corrected_accuracy: float
    confusion: np.ndarray


def simplex_prototypes(num_classes: int, dim: int, separation: float) -> FloatArray:
    """Class prototypes at the vertices of a regular simplex embedded in
    ``dim`` dimensions, every pairwise distance equal to ``separation``."""
    if num_classes < 2:
        raise InvalidInputError("need at least 2 classes")
    if dim < num_classes - 1:
        raise InvalidInputError(
            f"dim={dim} cannot hold a regular simplex over {num_classes} classes"
        )
    if not (separation > 0 and math.isfinite(separation)):
        raise InvalidInputError("separation must be positive")
    centered = np.eye(num_classes) - 1.0 / num_classes
    basis, _ = np.linalg.qr(centered[:, : num_classes - 1])
    coords = centered @ basis  # pairwise distance sqrt(2)
    prototypes = np.zeros((num_classes, dim))
    prototypes[:, : num_classes - 1] = coords * (separation / math.sqrt(2.0))
    return prototypes


def generate_gaussian_mixture(
    n: int, num_classes: int, dim: int, separation: float, seed: int
) -> SimDataset:
    """Balanced mixture: shuffled round-robin class labels, unit-variance
    Gaussian features around each class prototype. Noise-free; compose with
    an injector to corrupt the labels."""
    if n < num_classes:
        raise InvalidInputError("need at least one sample per class")
    prototypes = simplex_prototypes(num_classes, dim, separation)
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    features = prototypes[labels] + rng.standard_normal((n, dim))
    return SimDataset(
        features=features,
        true_labels=labels,
        noisy_labels=labels.copy(),
        num_classes=num_classes,
        noise_spec=("symmetric", 0.0),
        seed=seed,
    )


def inject_symmetric_noise(labels, ratio: float, num_classes: int, seed: int) -> IntArray:
    """Replace the labels of exactly floor(ratio * N) uniformly chosen
    positions with uniform draws over all classes (the draw may repeat the
    original label, so the expected disagreement rate is ratio * (C-1)/C)."""
    y = as_labels(labels)
    if not (0.0 <= ratio <= 1.0):
        raise InvalidInputError("ratio must lie in [0, 1]")
    if num_classes < 1 or (y >= num_classes).any():
        raise InvalidInputError("labels out of range for num_classes")
    out = y.copy()
    k = int(math.floor(ratio * y.size + 1e-9))
    if k > 0:
        rng = np.random.default_rng(seed)
        positions = rng.choice(y.size, size=k, replace=False)
        out[positions] = rng.integers(0, num_classes, k)
    return out


def inject_asymmetric_noise(
    labels,
    ratio: float,
    mapping=None,
    seed: int = 0,
    num_classes: int | None = None,
) -> IntArray:
    """Flip each label to ``mapping[label]`` independently with probability
    ``ratio``. The default mapping is the circular shift c -> (c+1) mod C,
    a dataset-agnostic stand-in for "flip to a similar class"."""
    y = as_labels(labels)
    if not (0.0 <= ratio <= 1.0):
        raise InvalidInputError("ratio must lie in [0, 1]")
    if mapping is None:
        if num_classes is None:
            raise InvalidInputError("num_classes is required when mapping is omitted")
        mapping = (np.arange(num_classes, dtype=np.int64) + 1) % num_classes
    else:
        mapping = as_labels(mapping, "mapping")
        num_classes = mapping.size
        if (mapping >= num_classes).any():
            raise InvalidInputError("mapping target out of range")
    if (y >= num_classes).any():
        raise InvalidInputError("labels out of range for the mapping")
    rng = np.random.default_rng(seed)
    flip = rng.random(y.size) < ratio
    out = y.copy()
    out[flip] = mapping[y[flip]]
    return out


def apply_noise(dataset: SimDataset, kind: str, ratio: float, seed: int) -> SimDataset:
    """Return a copy of ``dataset`` with corrupted labels and its spec set."""
    if kind == "symmetric":
        noisy = inject_symmetric_noise(dataset.true_labels, ratio, dataset.num_classes, seed)
    elif kind == "asymmetric":
        noisy = inject_asymmetric_noise(
            dataset.true_labels, ratio, seed=seed, num_classes=dataset.num_classes
        )
    else:
        raise InvalidInputError(f"unknown noise kind {kind!r}")
    return replace(dataset, noisy_labels=noisy, noise_spec=(kind, ratio))


def prototype_predictions(features, prototypes, temperature: float) -> FloatArray:
    """Softmax over negative squared distances to the prototypes; each row
    lands exactly on the simplex."""
    X = as_matrix(features, "features")
    M = as_matrix(prototypes, "prototypes")
    if X.shape[1] != M.shape[1]:
        raise InvalidInputError(
            f"features have dim {X.shape[1]}, prototypes dim {M.shape[1]}"
        )
    if not (temperature > 0 and math.isfinite(temperature)):
        raise InvalidInputError("temperature must be positive")
    sq = ((X[:, None, :] - M[None, :, :]) ** 2).sum(axis=2)
    logits = -sq / temperature
    logits -= logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    P /= P.sum(axis=1, keepdims=True)
    return P


def evaluate(outcome: RelabelOutcome, dataset: SimDataset) -> RelabelMetrics:
    """Score a relabeling outcome against the dataset's ground truth."""
    n = dataset.size
    if outcome.pseudo_labels.size != n or outcome.selected.size != n:
        raise InvalidInputError("outcome and dataset sizes differ")
    if (outcome.pseudo_labels >= dataset.num_classes).any():
        raise InvalidInputError("pseudo-label out of range for the dataset's classes")
    true = dataset.true_labels
    noisy = dataset.noisy_labels
    clean = outcome.clean_indices
    corrupted = outcome.corrupted_indices

    precision = UNDEFINED_RATE
    if clean.size:
        precision = float(np.mean(noisy[clean] == true[clean]))
    truly_clean = noisy == true
    recall = UNDEFINED_RATE
    if truly_clean.any():
        captured = np.zeros(n, dtype=bool)
        captured[clean] = True
        recall = float(np.count_nonzero(captured & truly_clean) / np.count_nonzero(truly_clean))
    corrected = UNDEFINED_RATE
    if corrupted.size:
        corrected = float(np.mean(outcome.pseudo_labels[corrupted] == true[corrupted]))

    confusion = np.zeros((dataset.num_classes, dataset.num_classes), dtype=np.int64)
    np.add.at(confusion, (true, outcome.pseudo_labels), 1)
    return RelabelMetrics(
        clean_precision=precision,
        clean_recall=recall,
        corrected_accuracy=corrected,
        confusion=confusion,
    )


def save_dataset(dataset: SimDataset, out_dir: str) -> None:
    """Write ``features.csmat`` plus a ``dataset.json`` sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(dataset.features, os.path.join(out_dir, "features.csmat"), "binary")
    sidecar = {
        "n": dataset.size,
        "num_classes": dataset.num_classes,
        "dim": int(dataset.features.shape[1]),
        "noise_kind": dataset.noise_spec[0],
        "noise_ratio": dataset.noise_spec[1],
        "seed": dataset.seed,
        "true_labels": dataset.true_labels.tolist(),
        "noisy_labels": dataset.noisy_labels.tolist(),
    }
    with open(os.path.join(out_dir, "dataset.json"), "w") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def load_dataset(out_dir: str) -> SimDataset:
    """Inverse of :func:`save_dataset`."""
    features = load_matrix(os.path.join(out_dir, "features.csmat"), "binary")
    with open(os.path.join(out_dir, "dataset.json")) as fh:
        sidecar = json.load(fh)
    return SimDataset(
        features=features,
        true_labels=np.asarray(sidecar["true_labels"], dtype=np.int64),
        noisy_labels=np.asarray(sidecar["noisy_labels"], dtype=np.int64),
        num_classes=int(sidecar["num_classes"]),
        noise_spec=(sidecar["noise_kind"], float(sidecar["noise_ratio"])),
        seed=int(sidecar["seed"]),
    )
