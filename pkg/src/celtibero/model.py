"""Layered weight containers and the vector arithmetic built on top of them.

Weights travel between clients and server as an ordered sequence of flat
float64 vectors, one per registered layer; each weight matrix and each bias
vector counts as its own layer. Every operation here is pure: inputs are
never mutated and the containers are immutable once constructed, so they are
safe to share between concurrently training clients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeMismatchError

__all__ = [
    "LayerShape",
    "ModelWeights",
    "GradientUpdate",
    "diff",
    "add_update",
    "cosine_distance",
    "euclidean_distance",
]


def _readonly_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LayerShape:
    """Logical tensor shape of one layer; the flat vector length is ``size``."""

    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"layer dims must be positive integers, got {self.dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)


class ModelWeights:
    """Ordered per-layer weights; the unit exchanged between clients and server.

    ``layers`` is a tuple of ``(LayerShape, vector)`` pairs where each vector
    is a read-only flat float64 array whose length matches the shape. All
    values must be finite.
    """

    __slots__ = ("layers",)

    def __init__(self, layers: Iterable[tuple[LayerShape, Sequence[float]]]):
        checked = []
        for k, (shape, vec) in enumerate(layers):
            arr = _readonly_vector(vec)
            if arr.size != shape.size:
                raise ShapeMismatchError(
                    f"layer {k}: vector length {arr.size} does not match shape size {shape.size}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"layer {k}: weights contain NaN or Inf")
            checked.append((shape, arr))
        self.layers: tuple[tuple[LayerShape, np.ndarray], ...] = tuple(checked)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def total_size(self) -> int:
        return sum(s.size for s, _ in self.layers)

    def shapes(self) -> tuple[LayerShape, ...]:
        return tuple(s for s, _ in self.layers)

    def vectors(self) -> tuple[np.ndarray, ...]:
        return tuple(v for _, v in self.layers)

    def concat(self) -> np.ndarray:
        """All layers joined into a single flat vector, in layer order."""
        if not self.layers:
            return np.zeros(0)
        return np.concatenate([v for _, v in self.layers])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelWeights):
            return NotImplemented
        return self.shapes() == other.shapes() and all(
            np.array_equal(a, b) for a, b in zip(self.vectors(), other.vectors())
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        dims = ", ".join("x".join(map(str, s.dims)) for s, _ in self.layers)
        return f"ModelWeights([{dims}])"


class GradientUpdate:
    """Per-layer difference between a local model and the global model it
    started from; shape-aligned with that reference model."""

    __slots__ = ("layers",)

    def __init__(self, layers: Iterable[Sequence[float]]):
        checked = []
        for k, vec in enumerate(layers):
            arr = _readonly_vector(vec)
            if not np.isfinite(arr).all():
                raise ValueError(f"layer {k}: update contains NaN or Inf")
            checked.append(arr)
        self.layers: tuple[np.ndarray, ...] = tuple(checked)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def concat(self) -> np.ndarray:
        if not self.layers:
            return np.zeros(0)
        return np.concatenate(self.layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradientUpdate):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            np.array_equal(a, b) for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"GradientUpdate([{', '.join(str(v.size) for v in self.layers)}])"


def _aligned_layers(a: ModelWeights, b: ModelWeights):
    if a.num_layers != b.num_layers:
        raise ShapeMismatchError(
            f"layer count mismatch: {a.num_layers} vs {b.num_layers}"
        )
    for k, ((shape_a, vec_a), (_, vec_b)) in enumerate(zip(a.layers, b.layers)):
        if vec_a.size != vec_b.size:
            raise ShapeMismatchError(
                f"layer {k}: vector length {vec_a.size} vs {vec_b.size}"
            )
        yield k, shape_a, vec_a, vec_b


def diff(local: ModelWeights, global_model: ModelWeights) -> GradientUpdate:
    """Per-layer, per-coordinate ``local - global``."""
    return GradientUpdate(
        vl - vg for _, _, vl, vg in _aligned_layers(local, global_model)
    )


def add_update(global_model: ModelWeights, update: GradientUpdate) -> ModelWeights:
    """Apply an update layer-wise; the result keeps the global model's shapes."""
    if global_model.num_layers != update.num_layers:
        raise ShapeMismatchError(
            f"layer count mismatch: {global_model.num_layers} vs {update.num_layers}"
        )
    layers = []
    for k, ((shape, vec), delta) in enumerate(zip(global_model.layers, update.layers)):
        if vec.size != delta.size:
            raise ShapeMismatchError(f"layer {k}: vector length {vec.size} vs {delta.size}")
        layers.append((shape, vec + delta))
    return ModelWeights(layers)


def cosine_distance(u, v) -> float:
    """``1 - cos(u, v)``, clamped to [0, 2].

    Zero-norm convention: 1.0 when exactly one argument is all-zero (a zero
    vector carries no direction, so it sits at the neutral distance), 0.0
    when both are.
    """
    uu = np.asarray(u, dtype=np.float64).reshape(-1)
    vv = np.asarray(v, dtype=np.float64).reshape(-1)
    if uu.size != vv.size:
        raise ShapeMismatchError(f"vector lengths differ: {uu.size} vs {vv.size}")
    norm_u = float(np.linalg.norm(uu))
    norm_v = float(np.linalg.norm(vv))
    if norm_u == 0.0 and norm_v == 0.0:
        return 0.0
    if norm_u == 0.0 or norm_v == 0.0:
        return 1.0
    dist = 1.0 - float(np.dot(uu, vv)) / (norm_u * norm_v)
    return float(min(2.0, max(0.0, dist)))


def euclidean_distance(a: ModelWeights, b: ModelWeights) -> float:
    """L2 distance over the concatenation of all layers."""
    total = 0.0
    for _, _, va, vb in _aligned_layers(a, b):
        d = va - vb
        total += float(np.dot(d, d))
    return math.sqrt(total)
