"""Agglomerative clustering of the laid-out categories into spatial contexts.

Bottom-up merging over Euclidean distance in layout space, Ward linkage by
default (single/complete/average also available). Merging is fully
deterministic: among equally good merges the pair whose union has the
smallest minimum category index wins, then the smaller partner index.
Cluster ids are assigned by ascending minimum category index, so results
are reproducible across platforms.

The common objects extracted upstream are attached afterwards: every
cluster serves its own categories plus the whole common set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cooccurrence import CommonObjectSet
from .errors import ConsistencyError, SchemaError
from .ingest import Dataset
from .layout import Layout

LINKAGES = ("ward", "single", "complete", "average")
CLUSTERS_FORMAT = "ctxbranch-clusters-v1"


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the non-common categories plus the shared common set.

    ``assignment`` maps each non-common category index to a cluster id in
    [0, k); ``served_classes`` unions every cluster with the common set.
    """

    k: int
    assignment: dict[int, int]
    common: CommonObjectSet | None = None

    def __post_init__(self):
        used = set(self.assignment.values())
        if used != set(range(self.k)):
            raise ConsistencyError(
                f"cluster ids must cover 0..{self.k - 1} exactly, got {sorted(used)}"
            )
        if self.common is not None:
            overlap = self.common.members & self.assignment.keys()
            if overlap:
                raise ConsistencyError(
                    f"common categories also assigned to clusters: {sorted(overlap)}"
                )

    @property
    def common_members(self) -> frozenset[int]:
        return self.common.members if self.common is not None else frozenset()

    def cluster_members(self, cluster_id: int) -> frozenset[int]:
        return frozenset(c for c, g in self.assignment.items() if g == cluster_id)

    @property
    def served_classes(self) -> dict[int, frozenset[int]]:
        common = self.common_members
        served: dict[int, set[int]] = {g: set(common) for g in range(self.k)}
        for c, g in self.assignment.items():
            served[g].add(c)
        return {g: frozenset(s) for g, s in served.items()}

    @property
    def categories(self) -> frozenset[int]:
        return frozenset(self.assignment) | self.common_members


def merge_sequence(points: np.ndarray, labels: list[int], linkage: str = "ward") -> list[tuple[int, int]]:
    """Full agglomeration order as (kept, absorbed) label pairs.

    ``labels`` are the category indices behind each point; ``kept`` is
    always the side holding the smaller minimum label so the merged
    cluster's representative is its minimum category index.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}, expected one of {LINKAGES}")
    n = len(labels)
    if points.shape != (n, 2):
        raise ValueError("points must be an (n, 2) array matching labels")

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    min_label = np.array(labels, dtype=np.int64)
    centroids = points.astype(np.float64).copy()

    diff = points[:, None, :] - points[None, :, :]
    sq = (diff * diff).sum(axis=2)
    if linkage == "ward":
        dist = sq / 2.0  # |A||B|/(|A|+|B|) * ||cA - cB||^2 for singletons
    else:
        dist = np.sqrt(sq)
    np.fill_diagonal(dist, np.inf)

    merges: list[tuple[int, int]] = []
    for _ in range(n - 1):
        best = dist.min()
        ii, jj = np.nonzero(dist == best)
        pairs = [(i, j) for i, j in zip(ii.tolist(), jj.tolist()) if i < j]
        i, j = min(
            pairs,
            key=lambda p: (
                min(min_label[p[0]], min_label[p[1]]),
                max(min_label[p[0]], min_label[p[1]]),
            ),
        )
        if min_label[j] < min_label[i]:
            i, j = j, i
        merges.append((int(min_label[i]), int(min_label[j])))

        if linkage == "ward":
            total = sizes[i] + sizes[j]
            centroids[i] = (sizes[i] * centroids[i] + sizes[j] * centroids[j]) / total
            sizes[i] = total
            others = active.copy()
            others[i] = others[j] = False
            d = centroids[others] - centroids[i]
            dist[i, others] = dist[others, i] = (
                sizes[i] * sizes[others] / (sizes[i] + sizes[others]) * (d * d).sum(axis=1)
            )
        else:
            if linkage == "single":
                row = np.minimum(dist[i], dist[j])
            elif linkage == "complete":
                row = np.maximum(dist[i], dist[j])
            else:  # average
                row = (sizes[i] * dist[i] + sizes[j] * dist[j]) / (sizes[i] + sizes[j])
            sizes[i] += sizes[j]
            dist[i, :] = dist[:, i] = row
            dist[i, i] = np.inf

        min_label[i] = min(min_label[i], min_label[j])
        active[j] = False
        dist[j, :] = dist[:, j] = np.inf
    return merges


def cut_assignment(labels: list[int], merges: list[tuple[int, int]], k: int) -> dict[int, int]:
    """Partition after applying the first len(labels) - k merges.

    Cluster ids are ordered by each cluster's minimum category index.
    """
    parent = {c: c for c in labels}

    def find(c: int) -> int:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for kept, absorbed in merges[: len(labels) - k]:
        parent[find(absorbed)] = find(kept)

    clusters: dict[int, list[int]] = {}
    for c in labels:
        clusters.setdefault(find(c), []).append(c)
    order = sorted(clusters, key=lambda root: min(clusters[root]))
    return {c: cid for cid, root in enumerate(order) for c in clusters[root]}


def agglomerative_cluster(layout: Layout, k: int, linkage: str = "ward") -> ClusterAssignment:
    """Cluster the laid-out categories into exactly k spatial contexts."""
    labels = sorted(layout.positions)
    if not 1 <= k <= len(labels):
        raise ValueError(f"k must be in [1, {len(labels)}], got {k}")
    points = np.array([layout.positions[c] for c in labels], dtype=np.float64)
    merges = merge_sequence(points, labels, linkage)
    return ClusterAssignment(k=k, assignment=cut_assignment(labels, merges, k))


def attach_common(raw: ClusterAssignment, common: CommonObjectSet) -> ClusterAssignment:
    """Replicate the common objects into every cluster's served set."""
    overlap = common.members & raw.assignment.keys()
    if overlap:
        raise ConsistencyError(
            f"common categories already present in clusters: {sorted(overlap)}"
        )
    return ClusterAssignment(k=raw.k, assignment=dict(raw.assignment), common=common)


def write_clusters(
    assignment: ClusterAssignment,
    dataset: Dataset,
    path: str | Path,
    meta: dict | None = None,
) -> None:
    names = dataset.category_names
    doc = {
        "format": CLUSTERS_FORMAT,
        "k": assignment.k,
        "common": sorted(names[c] for c in assignment.common_members),
        "clusters": {
            str(g): sorted(names[c] for c in assignment.cluster_members(g))
            for g in range(assignment.k)
        },
    }
    if assignment.common is not None:
        doc["tau_common"] = assignment.common.tau_common
        doc["quorum"] = assignment.common.quorum
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_clusters(path: str | Path, dataset: Dataset) -> ClusterAssignment:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CLUSTERS_FORMAT:
        raise SchemaError(f"{path}: unsupported cluster file format {doc.get('format')!r}")
    by_name = dataset.index_by_name()

    def lookup(name: str) -> int:
        if name not in by_name:
            raise SchemaError(f"{path}: category {name!r} not in the dataset")
        return by_name[name]

    assignment = {
        lookup(name): int(g) for g, members in doc["clusters"].items() for name in members
    }
    common = CommonObjectSet(
        members=frozenset(lookup(name) for name in doc["common"]),
        tau_common=float(doc.get("tau_common", 0.0)),
        quorum=float(doc.get("quorum", 0.75)),
    )
    return ClusterAssignment(k=int(doc["k"]), assignment=assignment, common=common)
