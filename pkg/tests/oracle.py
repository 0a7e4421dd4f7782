"""Reference implementations the engine is checked against.

The walk oracle here is deliberately naive: it materializes the dense
transition matrix and iterates with matrix-vector products. It shares
no code with the engine's sparse scatter-add implementation, so
agreement between the two is meaningful evidence of correctness.
"""

from __future__ import annotations

import numpy as np

from convmem.retrieval import Subgraph


def dense_walk(
    subgraph: Subgraph,
    damping: float = 0.85,
    tolerance: float = 1e-10,
    max_iterations: int = 100,
) -> tuple[dict, int, bool]:
    """Dense personalized PageRank over an undirected weighted subgraph.

    Returns (scores by node, iterations, converged). Matches the
    documented contract: column-normalized weights, dangling mass
    redistributed proportionally to the seed vector, L1 stopping rule.
    """
    nodes = subgraph.nodes
    n = len(nodes)
    index = {node: i for i, node in enumerate(nodes)}
    dense = np.zeros((n, n), dtype=np.float64)
    for _, u, v, w in subgraph.edges:
        iu, iv = index[u], index[v]
        dense[iv, iu] += w
        dense[iu, iv] += w
    out = dense.sum(axis=0)
    transition = np.divide(
        dense, out[np.newaxis, :], out=np.zeros_like(dense), where=out > 0.0
    )
    dangling = out == 0.0
    seed = np.array([subgraph.seed_values[node] for node in nodes], dtype=np.float64)

    x = seed.copy()
    iterations = 0
    converged = False
    for _ in range(max_iterations):
        iterations += 1
        x_next = (1.0 - damping) * seed + damping * (
            transition @ x + float(x[dangling].sum()) * seed
        )
        delta = float(np.abs(x_next - x).sum())
        x = x_next
        if delta < tolerance:
            converged = True
            break
    return {node: float(x[i]) for i, node in enumerate(nodes)}, iterations, converged


def random_subgraph(
    rng: np.random.Generator,
    max_nodes: int = 200,
    *,
    isolated: bool = False,
    min_weight: float = 0.1,
) -> Subgraph:
    """A random connected mixed-kind subgraph with random weights.

    Built as a random spanning tree plus extra chords, which keeps the
    walk well mixed so it converges comfortably within the iteration
    budget. With ``isolated`` one extra node gets no edges, exercising
    the dangling-mass path.
    """
    n = int(rng.integers(5, max_nodes + 1))
    nodes = []
    for i in range(n):
        kind = ("turn", "segment", "entity")[int(rng.integers(3))]
        if kind == "turn":
            nodes.append(("turn", f"s{i % 7}", i))
        elif kind == "segment":
            nodes.append(("segment", f"seg{i}"))
        else:
            nodes.append(("entity", f"ent{i}"))
    nodes = sorted(set(nodes))
    n = len(nodes)

    def weight() -> float:
        return float(rng.uniform(min_weight, 1.0))

    linkable = n - 1 if isolated and n > 2 else n
    edges = []
    order = rng.permutation(linkable)
    for pos in range(1, linkable):
        u = nodes[order[pos]]
        v = nodes[order[int(rng.integers(pos))]]
        edges.append(("link", u, v, weight()))
    extra = int(rng.integers(linkable, 3 * linkable))
    for _ in range(extra):
        i, j = rng.integers(linkable), rng.integers(linkable)
        if i == j:
            continue
        edges.append(("link", nodes[int(i)], nodes[int(j)], weight()))

    raw = rng.uniform(0.0, 1.0, n)
    raw /= raw.sum()
    drift = raw.sum() - 1.0
    raw[int(np.argmax(raw))] -= drift
    seed_values = {node: float(raw[i]) for i, node in enumerate(nodes)}
    return Subgraph(nodes=tuple(nodes), edges=tuple(edges), seed_values=seed_values)
