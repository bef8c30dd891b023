"""Weighted knowledge graph and its 2-D force-directed embedding.

Nodes are the non-common categories; an edge carries the positive part of
the pairwise phi correlation, read as the probability that the two
categories share a scene. The embedding is the classic Fruchterman-Reingold
force simulation, extended so that edge weights multiply the attractive
force: repulsion k^2/d between every node pair, attraction w * d^2/k along
each edge, per-iteration displacement capped by a temperature that cools
linearly to zero.

Runs are deterministic given (graph, params, seed); force accumulation is
single-threaded by design since summation order affects the floating-point
result.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .cooccurrence import CommonObjectSet, CorrelationMatrix
from .errors import NumericalError

_DIST_FLOOR = 1e-9  # avoids division blow-up for coincident points


@dataclass(frozen=True)
class ContextGraph:
    """Undirected weighted graph over non-common category indices."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int, float], ...]  # (a, b, weight), a < b, w in (0, 1]


@dataclass(frozen=True)
class LayoutParams:
    iterations: int = 500
    area: float = 1.0
    initial_temperature: float | None = None  # defaults to 0.1 * sqrt(area)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.area > 0:
            raise ValueError(f"area must be > 0, got {self.area}")

    @property
    def temperature(self) -> float:
        if self.initial_temperature is not None:
            return self.initial_temperature
        return 0.1 * math.sqrt(self.area)

    def k_ideal(self, n_nodes: int) -> float:
        """Equilibrium inter-node distance sqrt(area / n)."""
        return math.sqrt(self.area / n_nodes)


@dataclass(frozen=True)
class Layout:
    positions: dict[int, tuple[float, float]]  # category index -> (x, y)
    params: LayoutParams = field(default_factory=LayoutParams)
    seed: int = 0

    def as_array(self, nodes: tuple[int, ...]) -> np.ndarray:
        return np.array([self.positions[v] for v in nodes], dtype=np.float64)


def build_graph(rho: CorrelationMatrix, common: CommonObjectSet) -> ContextGraph:
    """Keep non-common categories as nodes; connect positively correlated
    pairs with weight max(rho, 0). Negative correlations yield no edge."""
    n = rho.rho.shape[0]
    nodes = tuple(i for i in range(n) if i not in common.members)
    edges = []
    for ai, a in enumerate(nodes):
        for b in nodes[ai + 1 :]:
            w = float(rho.rho[a, b])
            if w > 0.0:
                edges.append((a, b, min(w, 1.0)))
    return ContextGraph(nodes=nodes, edges=tuple(edges))


def fr_layout(graph: ContextGraph, params: LayoutParams | None = None, seed: int = 0) -> Layout:
    """Embed the graph in 2-D with the weighted Fruchterman-Reingold scheme.

    Initial positions are drawn uniformly in the unit square from a
    generator seeded with ``seed``. Raises NumericalError naming the
    iteration if coordinates stop being finite.
    """
    if params is None:
        params = LayoutParams()
    m = len(graph.nodes)
    if m < 1:
        raise ValueError("layout needs at least one node")

    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, 1.0, size=(m, 2))
    if m == 1:
        return Layout({graph.nodes[0]: (float(pos[0, 0]), float(pos[0, 1]))}, params, seed)

    index = {v: i for i, v in enumerate(graph.nodes)}
    edge_a = np.array([index[a] for a, _, _ in graph.edges], dtype=np.intp)
    edge_b = np.array([index[b] for _, b, _ in graph.edges], dtype=np.intp)
    edge_w = np.array([w for _, _, w in graph.edges], dtype=np.float64)

    k = params.k_ideal(m)
    t0 = params.temperature
    iters = params.iterations
    for it in range(iters):
        temp = t0 * (iters - it) / iters
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.maximum(np.sqrt((diff * diff).sum(axis=2)), _DIST_FLOOR)
        np.fill_diagonal(dist, np.inf)

        # Repulsion k^2/d between all pairs, applied along diff/d.
        disp = (diff / dist[:, :, None] * (k * k / dist)[:, :, None]).sum(axis=1)

        if len(edge_w):
            d_ab = diff[edge_a, edge_b]
            dist_ab = dist[edge_a, edge_b]
            pull = d_ab / dist_ab[:, None] * (edge_w * dist_ab * dist_ab / k)[:, None]
            np.subtract.at(disp, edge_a, pull)
            np.add.at(disp, edge_b, pull)

        length = np.maximum(np.sqrt((disp * disp).sum(axis=1)), _DIST_FLOOR)
        pos = pos + disp / length[:, None] * np.minimum(length, temp)[:, None]
        if not np.isfinite(pos).all():
            raise NumericalError(f"non-finite layout coordinates at iteration {it}")

    return Layout(
        positions={v: (float(pos[i, 0]), float(pos[i, 1])) for v, i in index.items()},
        params=params,
        seed=seed,
    )


def layout_to_csv(layout: Layout, names: list[str]) -> str:
    """Render positions as ``category,x,y`` rows for external plotting."""
    buf = io.StringIO()
    buf.write("category,x,y\n")
    for v in sorted(layout.positions):
        x, y = layout.positions[v]
        buf.write(f"{names[v]},{x!r},{y!r}\n")
    return buf.getvalue()
