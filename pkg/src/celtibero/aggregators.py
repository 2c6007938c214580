"""Aggregation strategies for combining local models into a new global model.

``celtibero_aggregate`` is the layered robust rule this package is built
around: per layer it clusters update directions into two groups, drops the
group scored as coordinated manipulation, and advances the global layer by
the coordinate-wise median of the surviving updates. The remaining
strategies (``fedavg``, ``coordinate_median``, ``krum``, ``median_krum``)
serve as baselines under the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import (
    LINKAGES,
    ClusterVerdict,
    agglomerative_two_clusters,
    label_clusters,
    pairwise_cosine_matrix,
)
from .errors import ShapeMismatchError
from .model import ModelWeights, diff

__all__ = [
    "AGGREGATOR_NAMES",
    "AggregatorKind",
    "aggregate",
    "celtibero_aggregate",
    "fedavg",
    "coordinate_median",
    "krum",
    "median_krum",
]

AGGREGATOR_NAMES = ("celtibero", "fedavg", "coord_median", "krum", "median_krum")


@dataclass(frozen=True)
class AggregatorKind:
    """Strategy selector plus its parameters.

    ``krum_f`` is the assumed number of malicious inputs for the Krum family;
    ``linkage`` picks the clustering linkage for celtibero.
    """

    name: str
    krum_f: int = 1
    linkage: str = "average"

    def __post_init__(self) -> None:
        if self.name not in AGGREGATOR_NAMES:
            raise ValueError(f"aggregator must be one of {AGGREGATOR_NAMES}, got {self.name!r}")
        if self.krum_f < 0:
            raise ValueError(f"krum_f must be >= 0, got {self.krum_f}")
        if self.linkage not in LINKAGES:
            raise ValueError(f"linkage must be one of {LINKAGES}, got {self.linkage!r}")


def _check_same_structure(local_models: list[ModelWeights]) -> None:
    first = local_models[0]
    for k, model in enumerate(local_models[1:], start=1):
        if model.num_layers != first.num_layers:
            raise ShapeMismatchError(
                f"model {k}: layer count {model.num_layers} vs {first.num_layers}"
            )
        for layer, ((_, va), (_, vb)) in enumerate(zip(first.layers, model.layers)):
            if va.size != vb.size:
                raise ShapeMismatchError(
                    f"model {k}, layer {layer}: vector length {vb.size} vs {va.size}"
                )


def celtibero_aggregate(
    global_model: ModelWeights,
    local_models: list[ModelWeights],
    linkage: str = "average",
) -> tuple[ModelWeights, tuple[ClusterVerdict, ...]]:
    """Layer-wise robust aggregation with per-layer cluster verdicts.

    For every layer independently: compute each client's update against the
    global model, cluster the update directions into two groups by cosine
    distance, label the lower-scoring group poisoned, and add the
    coordinate-wise median of the surviving updates onto the global layer.
    A client may be kept in one layer and discarded in another.

    Returns the new global model together with one verdict per layer for
    auditing which clients were kept where.
    """
    if len(local_models) < 2:
        raise ValueError("celtibero requires at least 2 local models")
    updates = [diff(w, global_model) for w in local_models]
    new_layers = []
    verdicts = []
    for layer, (shape, global_vec) in enumerate(global_model.layers):
        vecs = [u.layers[layer] for u in updates]
        matrix = pairwise_cosine_matrix(vecs)
        assignment = agglomerative_two_clusters(matrix, linkage)
        verdict = label_clusters(matrix, assignment)
        survivors = np.stack([vecs[i] for i in verdict.benign])
        new_layers.append((shape, global_vec + np.median(survivors, axis=0)))
        verdicts.append(verdict)
    return ModelWeights(new_layers), tuple(verdicts)


def fedavg(local_models: list[ModelWeights]) -> ModelWeights:
    """Unweighted per-coordinate mean of the local models."""
    if len(local_models) < 1:
        raise ValueError("fedavg requires at least 1 local model")
    _check_same_structure(local_models)
    layers = []
    for layer, (shape, _) in enumerate(local_models[0].layers):
        stacked = np.stack([m.layers[layer][1] for m in local_models])
        layers.append((shape, stacked.mean(axis=0)))
    return ModelWeights(layers)


def coordinate_median(local_models: list[ModelWeights]) -> ModelWeights:
    """Per-coordinate median of the local models.

    Even counts take the midpoint of the two central order statistics.
    """
    if len(local_models) < 1:
        raise ValueError("coordinate median requires at least 1 local model")
    _check_same_structure(local_models)
    layers = []
    for layer, (shape, _) in enumerate(local_models[0].layers):
        stacked = np.stack([m.layers[layer][1] for m in local_models])
        layers.append((shape, np.median(stacked, axis=0)))
    return ModelWeights(layers)


def _krum_scores(local_models: list[ModelWeights], f: int) -> np.ndarray:
    n = len(local_models)
    if f < 0:
        raise ValueError(f"f must be >= 0, got {f}")
    if n < 2 * f + 3:
        raise ValueError(f"krum requires n >= 2f + 3, got n={n}, f={f}")
    _check_same_structure(local_models)
    flat = np.stack([m.concat() for m in local_models])
    squared = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = flat[i] - flat[j]
            squared[i, j] = squared[j, i] = float(np.dot(d, d))
    keep = n - f - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(squared[i], i)
        others.sort()
        scores[i] = others[:keep].sum()
    return scores


def krum(local_models: list[ModelWeights], f: int) -> ModelWeights:
    """Return the input model whose summed squared distance to its
    ``n - f - 2`` nearest peers is smallest (ties go to the lowest index)."""
    scores = _krum_scores(local_models, f)
    return local_models[int(np.argmin(scores))]


def median_krum(local_models: list[ModelWeights], f: int) -> ModelWeights:
    """Coordinate-wise median over the ``n - f`` models with the best Krum
    scores (score ties resolved toward lower client indices)."""
    scores = _krum_scores(local_models, f)
    order = np.argsort(scores, kind="stable")
    candidates = [local_models[int(i)] for i in order[: len(local_models) - f]]
    return coordinate_median(candidates)


def aggregate(
    kind: AggregatorKind,
    global_model: ModelWeights,
    local_models: list[ModelWeights],
) -> tuple[ModelWeights, tuple[ClusterVerdict, ...] | None]:
    """Apply the configured strategy; verdicts are returned for celtibero only."""
    if kind.name == "celtibero":
        return celtibero_aggregate(global_model, local_models, kind.linkage)
    if kind.name == "fedavg":
        return fedavg(local_models), None
    if kind.name == "coord_median":
        return coordinate_median(local_models), None
    if kind.name == "krum":
        return krum(local_models, kind.krum_f), None
    if kind.name == "median_krum":
        return median_krum(local_models, kind.krum_f), None
    raise ValueError(f"unknown aggregator {kind.name!r}")
