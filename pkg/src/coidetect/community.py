"""Community formation: dissimilarity transform, agglomerative clustering,
silhouette-based K selection, weak-member pruning, representative choice.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import StationRegistry
from .simgraph import SimilarityMatrix


class SingleCluster(DataError):
    pass


class DegenerateClustering(UserWarning):
    """Several K values tie for the best mean silhouette."""


class EmptyClusterAfterPruning(UserWarning):
    """Every member of a cluster fell below the silhouette threshold."""


LINKAGES = ("average", "complete", "single")


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge sequence. Leaves are 0..n-1; merge k creates node n+k."""

    merges: tuple[Merge, ...]
    linkage: str
    n_leaves: int

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise DataError(f"dendrogram has {len(self.merges)} merges for {self.n_leaves} leaves")


@dataclass(frozen=True)
class ClusterSolution:
    station_ids: tuple[str, ...]
    k: int
    labels: np.ndarray
    silhouettes: np.ndarray
    mean_silhouette: float

    def label_of(self, station_id: str) -> int:
        return int(self.labels[self.station_ids.index(station_id)])

    def silhouette_of(self, station_id: str) -> float:
        return float(self.silhouettes[self.station_ids.index(station_id)])

    def members(self, cluster: int) -> tuple[str, ...]:
        return tuple(sid for sid, lab in zip(self.station_ids, self.labels) if lab == cluster)


@dataclass(frozen=True)
class CommunityModel:
    """Final communities: retained members, exclusions, and one representative
    (the retained member with the highest silhouette) per cluster."""

    solution: ClusterSolution
    threshold: float
    excluded: tuple[str, ...]
    representatives: dict[int, str]
    empty_clusters: tuple[int, ...] = ()
    linkage: str = "average"

    def retained(self, cluster: int) -> tuple[str, ...]:
        ex = set(self.excluded)
        return tuple(sid for sid in self.solution.members(cluster) if sid not in ex)

    @property
    def cluster_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.representatives))


def to_dissimilarity(fused: SimilarityMatrix) -> np.ndarray:
    """D = 1 - S with an exactly zero diagonal. Entries exceed 1 where S < 0."""
    d = 1.0 - fused.values
    np.fill_diagonal(d, 0.0)
    return d


def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DataError("dissimilarity matrix must be square")
    if not np.array_equal(d, d.T):
        raise DataError("dissimilarity matrix must be symmetric")
    if np.any(np.diag(d) != 0.0):
        raise DataError("dissimilarity diagonal must be 0")
    return d


def agglomerate(d: np.ndarray, linkage: str = "average") -> Dendrogram:
    """Agglomerative clustering of a dissimilarity matrix.

    At each step the closest pair of active clusters merges; exact distance
    ties break toward the lexicographically smallest (left, right) node-id
    pair, which makes the merge sequence deterministic.
    """
    d = _check_dissimilarity(d)
    n = d.shape[0]
    if n < 2:
        raise DataError("clustering needs at least 2 stations")
    if linkage not in LINKAGES:
        raise DataError(f"unknown linkage {linkage!r}")

    dist: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in range(i + 1, n):
            dist[(i, j)] = float(d[i, j])
    active = list(range(n))
    sizes = {i: 1 for i in range(n)}
    merges: list[Merge] = []

    for step in range(n - 1):
        best = min(
            ((dist[(a, b)], a, b) for idx, a in enumerate(active) for b in active[idx + 1 :]),
            key=lambda t: (t[0], t[1], t[2]),
        )
        h, a, b = best
        new = n + step
        size = sizes[a] + sizes[b]
        merges.append(Merge(a, b, h, size))
        active.remove(a)
        active.remove(b)
        for c in active:
            da = dist.pop((min(a, c), max(a, c)))
            db = dist.pop((min(b, c), max(b, c)))
            if linkage == "average":
                dc = (sizes[a] * da + sizes[b] * db) / size
            elif linkage == "complete":
                dc = max(da, db)
            else:
                dc = min(da, db)
            dist[(c, new)] = dc
        del dist[(a, b)], sizes[a], sizes[b]
        sizes[new] = size
        active.append(new)
    return Dendrogram(tuple(merges), linkage, n)


def cut(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Labels for the K-cluster partition. Clusters are numbered 0..K-1 in
    order of their smallest member index."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise DataError(f"cannot cut {n}-leaf dendrogram into {k} clusters")
    parent = list(range(n + len(dendrogram.merges)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step, m in enumerate(dendrogram.merges[: n - k]):
        new = n + step
        parent[find(m.left)] = new
        parent[find(m.right)] = new
    roots = [find(i) for i in range(n)]
    order: dict[int, int] = {}
    for r in roots:
        if r not in order:
            order[r] = len(order)
    return np.array([order[r] for r in roots], dtype=np.int64)


def silhouette_scores(d: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-point silhouette s = (b - a) / max(a, b) on a precomputed
    dissimilarity; singletons score 0 by convention."""
    d = _check_dissimilarity(d)
    labels = np.asarray(labels)
    n = len(labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise SingleCluster("silhouette needs at least 2 clusters")
    masks = {c: labels == c for c in clusters}
    counts = {c: int(masks[c].sum()) for c in clusters}
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        if counts[own] == 1:
            continue
        a = d[i, masks[own]].sum() / (counts[own] - 1)
        b = min(d[i, masks[c]].mean() for c in clusters if c != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return scores


def select_k(
    dendrogram: Dendrogram,
    d: np.ndarray,
    station_ids: tuple[str, ...],
    k_range: range = range(2, 9),
) -> ClusterSolution:
    """Cut at every K in k_range and keep the best mean silhouette.

    Exact ties break toward the smaller K, with a degeneracy warning.
    """
    ks = sorted(k_range)
    if not ks or ks[0] < 2:
        raise DataError("k_range must contain values >= 2")
    if dendrogram.n_leaves < ks[-1]:
        raise DataError(f"{dendrogram.n_leaves} stations cannot form {ks[-1]} clusters")
    results = []
    for k in ks:
        labels = cut(dendrogram, k)
        scores = silhouette_scores(d, labels)
        results.append((k, labels, scores, float(scores.mean())))
    best = max(results, key=lambda r: r[3])
    winners = [r[0] for r in results if r[3] == best[3]]
    if len(winners) > 1:
        warnings.warn(
            DegenerateClustering(f"K in {winners} tie at mean silhouette {best[3]:.6f}"),
            stacklevel=2,
        )
        best = next(r for r in results if r[0] == winners[0])
    k, labels, scores, mean = best
    return ClusterSolution(tuple(station_ids), k, labels, scores, mean)


def prune_and_represent(solution: ClusterSolution, threshold: float = 0.25) -> CommunityModel:
    """Drop stations with silhouette below the threshold, then pick each
    cluster's representative as its retained member with the highest score
    (station_id order breaks exact ties). Clusters emptied by pruning are
    reported and carry no representative."""
    excluded = tuple(
        sid
        for sid, s in zip(solution.station_ids, solution.silhouettes)
        if s < threshold
    )
    ex = set(excluded)
    representatives: dict[int, str] = {}
    empty: list[int] = []
    for c in sorted(set(int(x) for x in solution.labels)):
        members = [
            (sid, solution.silhouette_of(sid))
            for sid in solution.members(c)
            if sid not in ex
        ]
        if not members:
            warnings.warn(EmptyClusterAfterPruning(f"cluster {c} lost all members"), stacklevel=2)
            empty.append(c)
            continue
        members.sort(key=lambda t: (-t[1], t[0]))
        representatives[c] = members[0][0]
    return CommunityModel(
        solution=solution,
        threshold=threshold,
        excluded=excluded,
        representatives=representatives,
        empty_clusters=tuple(empty),
    )


def model_to_json(model: CommunityModel, path: str | Path, linkage: str = "average") -> None:
    sol = model.solution
    doc = {
        "k": sol.k,
        "linkage": linkage,
        "threshold": model.threshold,
        "mean_silhouette": sol.mean_silhouette,
        "labels": {sid: int(lab) for sid, lab in zip(sol.station_ids, sol.labels)},
        "silhouettes": {sid: float(s) for sid, s in zip(sol.station_ids, sol.silhouettes)},
        "excluded": list(model.excluded),
        "empty_clusters": list(model.empty_clusters),
        "representatives": {str(c): sid for c, sid in model.representatives.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def model_from_json(path: str | Path) -> CommunityModel:
    doc = json.loads(Path(path).read_text())
    ids = tuple(sorted(doc["labels"], key=list(doc["labels"]).index))
    labels = np.array([doc["labels"][sid] for sid in ids], dtype=np.int64)
    sil = np.array([doc["silhouettes"][sid] for sid in ids])
    sol = ClusterSolution(ids, int(doc["k"]), labels, sil, float(doc["mean_silhouette"]))
    return CommunityModel(
        solution=sol,
        threshold=float(doc["threshold"]),
        excluded=tuple(doc["excluded"]),
        representatives={int(c): sid for c, sid in doc["representatives"].items()},
        empty_clusters=tuple(doc["empty_clusters"]),
        linkage=doc.get("linkage", "average"),
    )


def clusters_to_csv(model: CommunityModel, registry: StationRegistry, path: str | Path) -> None:
    """Per-station table: id, cluster, silhouette, elevation. Excluded
    stations keep their cluster column but are flagged."""
    sol = model.solution
    ex = set(model.excluded)
    rows = sorted(
        zip(sol.station_ids, sol.labels, sol.silhouettes),
        key=lambda t: (int(t[1]), -t[2], t[0]),
    )
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "cluster", "silhouette", "elevation_m", "excluded"])
        for sid, lab, s in rows:
            writer.writerow(
                [sid, int(lab), repr(float(s)), repr(registry.get(sid).elevation), int(sid in ex)]
            )
