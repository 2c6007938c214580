"""Poisoning attacks: label manipulation, backdoor triggers, and model-level
update manipulation.

Data-level attacks consume and produce :class:`~celtibero.data.LabeledDataset`
instances without mutating their inputs, so the same clean dataset can back a
poisoned run and its reference run. Model-level attacks (boosting, masked
updates) act on weight containers after local training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ShapeMismatchError
from .model import GradientUpdate, ModelWeights, _aligned_layers

__all__ = [
    "ATTACK_KINDS",
    "BACKDOOR_KINDS",
    "TriggerPattern",
    "AttackSpec",
    "make_default_trigger",
    "flip_labels_untargeted",
    "flip_labels_targeted",
    "embed_trigger",
    "split_trigger",
    "boost_update",
    "neurotoxin_mask",
]

ATTACK_KINDS = ("none", "ulfa", "tlfa", "mra", "dba", "neurotoxin")
BACKDOOR_KINDS = ("mra", "dba", "neurotoxin")


@dataclass(frozen=True)
class TriggerPattern:
    """Fixed feature positions and values stamped into poisoned samples,
    plus the class those samples are relabeled to."""

    positions: tuple[int, ...]
    values: tuple[float, ...]
    target_class: int

    def __post_init__(self) -> None:
        positions = tuple(int(p) for p in self.positions)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "values", values)
        if not positions:
            raise ValueError("trigger needs at least one position")
        if len(set(positions)) != len(positions):
            raise ValueError("trigger positions must be distinct")
        if len(values) != len(positions):
            raise ValueError(
                f"trigger has {len(positions)} positions but {len(values)} values"
            )
        if any(p < 0 for p in positions):
            raise ValueError("trigger positions must be nonnegative")
        if self.target_class < 0:
            raise ValueError(f"target class must be nonnegative, got {self.target_class}")


@dataclass(frozen=True)
class AttackSpec:
    """Which attack a malicious client runs, with its parameters.

    ``boost_factor=None`` means "use the number of clients selected in the
    round"; ``dba_fragments=None`` means "min(4, attacker count)".
    """

    kind: str
    source_class: int = 1
    target_class: int = 0
    flip_fraction: float = 1.0
    poison_fraction: float = 0.5
    boost_factor: float | None = None
    mask_ratio: float = 0.05
    trigger: TriggerPattern | None = None
    dba_fragments: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.kind == "tlfa" and self.source_class == self.target_class:
            raise ValueError("tlfa source and target classes must differ")
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise ValueError(f"flip_fraction must lie in [0, 1], got {self.flip_fraction}")
        if not 0.0 < self.poison_fraction <= 1.0:
            raise ValueError(f"poison_fraction must lie in (0, 1], got {self.poison_fraction}")
        if self.boost_factor is not None and not self.boost_factor > 0:
            raise ValueError(f"boost_factor must be positive, got {self.boost_factor}")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError(f"mask_ratio must lie in (0, 1), got {self.mask_ratio}")
        if self.dba_fragments is not None and self.dba_fragments < 1:
            raise ValueError(f"dba_fragments must be >= 1, got {self.dba_fragments}")


def make_default_trigger(
    num_features: int,
    target_class: int,
    image_side: int | None = None,
    patch: int = 3,
    value: float = 1.0,
) -> TriggerPattern:
    """Built-in reproducible trigger.

    Image data (``image_side`` given) gets a ``patch x patch`` square of
    maximum intensity in the top-left corner of the row-major layout; plain
    feature vectors get their first ``patch`` features set to the top of the
    normalized range.
    """
    if image_side is not None:
        if image_side * image_side != num_features:
            raise ValueError(
                f"image_side {image_side} does not square to {num_features} features"
            )
        if patch > image_side:
            raise ValueError(f"patch {patch} exceeds image side {image_side}")
        positions = tuple(
            r * image_side + c for r in range(patch) for c in range(patch)
        )
    else:
        positions = tuple(range(min(patch, num_features)))
    return TriggerPattern(positions, tuple(value for _ in positions), target_class)


def _round_half_up(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 0.5))


def flip_labels_untargeted(
    data: LabeledDataset, fraction: float, rng: np.random.Generator
) -> LabeledDataset:
    """Relabel a uniformly chosen ``fraction`` share of samples, each to a
    uniformly random *different* class."""
    if data.num_classes < 2:
        raise ValueError("untargeted flipping needs at least 2 classes")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    count = _round_half_up(fraction, data.n)
    if count == 0:
        return data
    chosen = rng.choice(data.n, size=count, replace=False)
    labels = data.labels.copy()
    offsets = rng.integers(1, data.num_classes, size=count)
    labels[chosen] = (labels[chosen] + offsets) % data.num_classes
    return LabeledDataset(data.features, labels, data.num_classes)


def flip_labels_targeted(data: LabeledDataset, source: int, target: int) -> LabeledDataset:
    """Relabel every ``source``-class sample to ``target``. Idempotent."""
    if source == target:
        raise ValueError(f"source and target classes must differ, both are {source}")
    for name, cls in (("source", source), ("target", target)):
        if not 0 <= cls < data.num_classes:
            raise ValueError(f"{name} class {cls} outside [0, {data.num_classes})")
    labels = data.labels.copy()
    labels[labels == source] = target
    return LabeledDataset(data.features, labels, data.num_classes)


def embed_trigger(
    data: LabeledDataset,
    trigger: TriggerPattern,
    fraction: float,
    rng: np.random.Generator | None = None,
) -> LabeledDataset:
    """Stamp the trigger into a ``fraction`` share of samples and relabel
    them to the trigger's target class.

    ``rng`` picks which samples are poisoned and is required whenever
    ``0 < fraction < 1``; the poisoned rows differ from the originals exactly
    at the trigger positions.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    if max(trigger.positions) >= data.d:
        raise ShapeMismatchError(
            f"trigger position {max(trigger.positions)} outside feature dimension {data.d}"
        )
    if not 0 <= trigger.target_class < data.num_classes:
        raise ValueError(
            f"trigger target class {trigger.target_class} outside [0, {data.num_classes})"
        )
    count = _round_half_up(fraction, data.n)
    if count == 0:
        return data
    if count == data.n:
        chosen = np.arange(data.n)
    else:
        if rng is None:
            raise ValueError("rng is required when 0 < fraction < 1")
        chosen = rng.choice(data.n, size=count, replace=False)
    features = data.features.copy()
    labels = data.labels.copy()
    features[np.ix_(chosen, np.array(trigger.positions))] = np.array(trigger.values)
    labels[chosen] = trigger.target_class
    return LabeledDataset(features, labels, data.num_classes)


def split_trigger(trigger: TriggerPattern, fragments: int) -> tuple[TriggerPattern, ...]:
    """Split a trigger into ``fragments`` nonempty chunks, contiguous in
    position-index order, that reassemble to the original."""
    if not 1 <= fragments <= len(trigger.positions):
        raise ValueError(
            f"fragments must lie in [1, {len(trigger.positions)}], got {fragments}"
        )
    order = np.argsort(np.array(trigger.positions, dtype=np.int64), kind="stable")
    positions = np.array(trigger.positions, dtype=np.int64)[order]
    values = np.array(trigger.values)[order]
    pieces = []
    for chunk in np.array_split(np.arange(positions.size), fragments):
        pieces.append(
            TriggerPattern(
                tuple(int(p) for p in positions[chunk]),
                tuple(float(v) for v in values[chunk]),
                trigger.target_class,
            )
        )
    return tuple(pieces)


def boost_update(
    local: ModelWeights, global_model: ModelWeights, gamma: float
) -> ModelWeights:
    """Scale a local model's update away from the global model:
    ``global + gamma * (local - global)`` per coordinate."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    layers = []
    for _, shape, global_vec, local_vec in _aligned_layers(global_model, local):
        layers.append((shape, global_vec + gamma * (local_vec - global_vec)))
    return ModelWeights(layers)


def neurotoxin_mask(
    update: GradientUpdate, reference: GradientUpdate, mask_ratio: float
) -> GradientUpdate:
    """Zero the update coordinates the aggregate moved most recently.

    Per layer the ``ceil(mask_ratio * size)`` coordinates with the largest
    ``|reference|`` magnitude are zeroed (magnitude ties go to the lower
    index); the rest pass through unchanged. Keeping the attack out of
    heavily-updated coordinates makes it harder for later rounds to
    overwrite.
    """
    if not 0.0 < mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must lie in (0, 1), got {mask_ratio}")
    if update.num_layers != reference.num_layers:
        raise ShapeMismatchError(
            f"layer count mismatch: {update.num_layers} vs {reference.num_layers}"
        )
    masked_layers = []
    for k, (vec, ref) in enumerate(zip(update.layers, reference.layers)):
        if vec.size != ref.size:
            raise ShapeMismatchError(f"layer {k}: vector length {vec.size} vs {ref.size}")
        count = math.ceil(mask_ratio * vec.size)
        order = np.argsort(-np.abs(ref), kind="stable")
        masked = vec.copy()
        masked[order[:count]] = 0.0
        masked_layers.append(masked)
    return GradientUpdate(masked_layers)
