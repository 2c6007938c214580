"""Two-cluster agglomerative clustering over pairwise cosine distances.

Each client's per-layer update is characterized by its direction only.
Pairwise cosine distances feed a bottom-up merge until exactly two clusters
remain, and the cluster with the smaller ``size * mean pairwise distance``
score is labeled poisoned: a small, tightly packed group of updates is
treated as coordinated manipulation, while the larger or more naturally
dispersed group is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .model import cosine_distance

__all__ = [
    "LINKAGES",
    "DistanceMatrix",
    "ClusterAssignment",
    "ClusterVerdict",
    "pairwise_cosine_matrix",
    "agglomerative_two_clusters",
    "cluster_density",
    "label_clusters",
]

LINKAGES = ("average", "single", "complete")


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distances with a zero diagonal and entries in [0, 2]."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("distance matrix must cover at least one client")
        if not np.array_equal(arr, arr.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(arr) != 0.0):
            raise ValueError("distance matrix diagonal must be zero")
        if np.any(arr < 0.0) or np.any(arr > 2.0):
            raise ValueError("distance matrix entries must lie in [0, 2]")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of client indices 0..n-1 into clusters labeled 1 and 2."""

    cluster_of: np.ndarray

    def __post_init__(self) -> None:
        labels = np.array(self.cluster_of, dtype=np.int64, copy=True)
        if labels.ndim != 1 or labels.size < 2:
            raise ValueError("assignment needs at least 2 clients")
        if not np.all(np.isin(labels, (1, 2))):
            raise ValueError("cluster labels must be 1 or 2")
        if not (np.any(labels == 1) and np.any(labels == 2)):
            raise ValueError("both clusters must be nonempty")
        labels.flags.writeable = False
        object.__setattr__(self, "cluster_of", labels)

    @property
    def n(self) -> int:
        return self.cluster_of.size

    def members(self, label: int) -> np.ndarray:
        if label not in (1, 2):
            raise ValueError(f"cluster label must be 1 or 2, got {label}")
        return np.flatnonzero(self.cluster_of == label)


@dataclass(frozen=True)
class ClusterVerdict:
    """Outcome of scoring one layer's two clusters.

    ``benign`` is never empty: exactly one cluster is discarded, so at least
    one client survives every layer.
    """

    benign: tuple[int, ...]
    poisoned: tuple[int, ...]
    score_1: float
    score_2: float

    def __post_init__(self) -> None:
        benign = tuple(int(i) for i in self.benign)
        poisoned = tuple(int(i) for i in self.poisoned)
        object.__setattr__(self, "benign", benign)
        object.__setattr__(self, "poisoned", poisoned)
        if not benign:
            raise ValueError("benign set must be nonempty")
        n = len(benign) + len(poisoned)
        if sorted(benign + poisoned) != list(range(n)):
            raise ValueError("benign and poisoned sets must partition 0..n-1")


def pairwise_cosine_matrix(updates) -> DistanceMatrix:
    """Cosine-distance matrix over a list of equal-length flat vectors.

    Entry (i, j) equals ``cosine_distance(updates[i], updates[j])`` exactly,
    so the zero-norm conventions carry over unchanged.
    """
    vecs = [np.asarray(u, dtype=np.float64).reshape(-1) for u in updates]
    if len(vecs) < 2:
        raise ValueError("need at least 2 update vectors")
    width = vecs[0].size
    for k, v in enumerate(vecs):
        if v.size != width:
            raise ShapeMismatchError(f"update {k}: vector length {v.size} vs {width}")
    n = len(vecs)
    entries = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = cosine_distance(vecs[i], vecs[j])
            entries[i, j] = d
            entries[j, i] = d
    return DistanceMatrix(entries)


def agglomerative_two_clusters(matrix: DistanceMatrix, linkage: str = "average") -> ClusterAssignment:
    """Merge singleton clusters bottom-up until exactly two remain.

    ``linkage`` picks how cluster-to-cluster distance is derived from member
    pairs: mean (``average``, the default), minimum (``single``), or maximum
    (``complete``). Merging is deterministic: a cluster is represented by its
    smallest member index, and equal linkage values are broken in favor of
    the lexicographically smallest (min representative, max representative)
    pair. Cluster 1 is the final cluster containing client 0.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}, got {linkage!r}")
    n = matrix.n
    if n < 2:
        raise ValueError("clustering requires at least 2 clients")
    dist = matrix.entries
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    size = {i: 1 for i in range(n)}
    # Cross-cluster statistic keyed by (rep_a, rep_b) with rep_a < rep_b.
    # Average linkage carries the *sum* of member-pair distances (turned into
    # a mean on demand); single/complete carry the min/max directly.
    stat = {(i, j): float(dist[i, j]) for i in range(n) for j in range(i + 1, n)}

    def linkage_value(key: tuple[int, int]) -> float:
        if linkage == "average":
            return stat[key] / (size[key[0]] * size[key[1]])
        return stat[key]

    while len(members) > 2:
        best_key = min(stat, key=lambda k: (linkage_value(k), k))
        a, b = best_key
        for c in members:
            if c == a or c == b:
                continue
            key_a = (a, c) if a < c else (c, a)
            key_b = (b, c) if b < c else (c, b)
            if linkage == "average":
                merged = stat[key_a] + stat[key_b]
            elif linkage == "single":
                merged = min(stat[key_a], stat[key_b])
            else:
                merged = max(stat[key_a], stat[key_b])
            stat[key_a] = merged
            del stat[key_b]
        del stat[best_key]
        members[a] = sorted(members[a] + members[b])
        size[a] += size[b]
        del members[b]
        del size[b]

    rep_1, rep_2 = sorted(members)  # rep_1 is always 0
    labels = np.empty(n, dtype=np.int64)
    labels[members[rep_1]] = 1
    labels[members[rep_2]] = 2
    return ClusterAssignment(labels)


def cluster_density(matrix: DistanceMatrix, members) -> float:
    """Mean pairwise distance inside ``members``; singletons have density 0."""
    idx = np.asarray(members, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValueError("cluster must be nonempty")
    if np.any(idx < 0) or np.any(idx >= matrix.n):
        raise ValueError("cluster member index out of range")
    if np.unique(idx).size != idx.size:
        raise ValueError("cluster members must be distinct")
    k = idx.size
    if k == 1:
        return 0.0
    sub = matrix.entries[np.ix_(idx, idx)]
    # The full submatrix counts each unordered pair twice and the zero
    # diagonal not at all, so this is the mean over unordered pairs.
    return float(sub.sum() / (k * (k - 1)))


def label_clusters(matrix: DistanceMatrix, assignment: ClusterAssignment) -> ClusterVerdict:
    """Score both clusters as ``size * density`` and discard the smaller score.

    A strictly smaller score for cluster 1 marks it poisoned; otherwise
    (including exact ties) cluster 2 is poisoned.
    """
    if assignment.n != matrix.n:
        raise ValueError(
            f"assignment covers {assignment.n} clients, matrix has {matrix.n}"
        )
    cluster_1 = assignment.members(1)
    cluster_2 = assignment.members(2)
    score_1 = cluster_1.size * cluster_density(matrix, cluster_1)
    score_2 = cluster_2.size * cluster_density(matrix, cluster_2)
    if score_1 < score_2:
        poisoned, benign = cluster_1, cluster_2
    else:
        poisoned, benign = cluster_2, cluster_1
    return ClusterVerdict(
        benign=tuple(int(i) for i in benign),
        poisoned=tuple(int(i) for i in poisoned),
        score_1=float(score_1),
        score_2=float(score_2),
    )
