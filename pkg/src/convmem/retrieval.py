"""Query-adaptive retrieval over the memory graph.

The pipeline is: multi-aspect seed search (segment summaries, entity
descriptions, relation descriptions), one-hop subgraph assembly,
query-conditioned edge weighting, personalized PageRank with those
dynamic weights, turn ranking, and triplet enrichment.

Edge weights follow the query-similarity rule: a mention edge weighs
the entity description's similarity to the query, a relation edge the
relation description's similarity, and a turn-segment edge the mean
similarity of the entities mentioned in that turn. Similarities clamp
at zero and every included edge gets a small positive floor so the walk
matrix stays well defined. The graph is treated as undirected: each
edge contributes its weight in both directions.

All node and edge iteration happens in canonical sorted order, so two
stores holding the same graph (for example before and after a snapshot
round-trip) produce bit-identical scores.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embedding import Embedder, cosine
from .errors import EmptyGraph, InternalInvariantError, InvalidInput
from .model import (
    EvidenceBundle,
    NodeId,
    QueryContext,
    RelationEdge,
    RetrievalConfig,
    SubgraphStats,
    Turn,
    TurnRef,
    entity_node,
    segment_node,
    turn_node,
)
from .store import GraphStore, MemoryGraph

logger = logging.getLogger(__name__)

_SEED_SUM_TOL = 1e-12
_MASS_TOL = 1e-9


@dataclass(frozen=True)
class SeedSet:
    """Top-k anchors per aspect, each as (id, cosine) sorted descending."""

    segment_seeds: tuple[tuple[str, float], ...]
    entity_seeds: tuple[tuple[str, float], ...]
    relation_seeds: tuple[tuple[int, float], ...]

    @property
    def is_empty(self) -> bool:
        return not (self.segment_seeds or self.entity_seeds or self.relation_seeds)


@dataclass(frozen=True)
class Subgraph:
    """Query-focused slice of the graph, ready for the random walk.

    ``edges`` holds undirected entries (kind, u, v, weight); the walk
    applies each weight in both directions. ``seed_values`` assigns
    every node its normalized non-negative query affinity.
    """

    nodes: tuple[NodeId, ...]
    edges: tuple[tuple[str, NodeId, NodeId, float], ...]
    seed_values: Mapping[NodeId, float]

    def __post_init__(self) -> None:
        if not self.nodes:
            raise InvalidInput("subgraph must contain at least one node")
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise InvalidInput("subgraph nodes must be unique")
        if set(self.seed_values) != node_set:
            raise InvalidInput("seed_values must cover exactly the subgraph nodes")
        for _, u, v, w in self.edges:
            if u not in node_set or v not in node_set:
                raise InvalidInput("subgraph edge endpoint outside node set")
            if not (0.0 < w <= 1.0 + 1e-12):
                raise InvalidInput(f"edge weight {w!r} outside (0, 1]")
        total = float(sum(self.seed_values.values()))
        if abs(total - 1.0) > _SEED_SUM_TOL:
            raise InvalidInput(f"seed values must sum to 1, got {total!r}")
        if any(value < 0.0 for value in self.seed_values.values()):
            raise InvalidInput("seed values must be non-negative")

    @property
    def turn_refs(self) -> tuple[TurnRef, ...]:
        return tuple(
            (node[1], node[2]) for node in self.nodes if node[0] == "turn"
        )


@dataclass(frozen=True)
class ScoreVector:
    """Stationary scores of the walk plus convergence facts."""

    scores: Mapping[NodeId, float]
    iterations: int
    converged: bool
    mass_trace: tuple[float, ...] = ()


class RetrievalEngine:
    """Runs the full retrieval pipeline against one store."""

    def __init__(
        self,
        store: GraphStore,
        embedder: Embedder | None = None,
        config: RetrievalConfig | None = None,
    ) -> None:
        self._store = store
        self._embedder = embedder or store.embedder
        self._config = config or RetrievalConfig()

    @property
    def config(self) -> RetrievalConfig:
        return self._config

    def make_query(self, query_text: str) -> QueryContext:
        return QueryContext(query_text=query_text, embedding=self._embedder.embed(query_text))

    # --- seeding ---

    def _top_k(self, kind: str, query: QueryContext, k: int) -> tuple[tuple, ...]:
        ids, matrix = self._store.aspect_vectors(kind)
        if not ids:
            return ()
        sims = matrix @ query.embedding.values
        # Stable argsort on the negated sims: ties fall back to position,
        # and positions are already in canonical id order.
        order = np.argsort(-sims, kind="stable")[:k]
        return tuple((ids[i], float(sims[i])) for i in order)

    def seed_search(self, query: QueryContext, cfg: RetrievalConfig | None = None) -> SeedSet:
        """Exact top-k scan per aspect. Turns are not seeded directly;
        they enter through one-hop expansion."""
        cfg = cfg or self._config
        with self._store.read_lease() as graph:
            if graph.is_empty:
                raise EmptyGraph("cannot seed an empty graph")
            return SeedSet(
                segment_seeds=self._top_k("segment", query, cfg.k_seed),
                entity_seeds=self._top_k("entity", query, cfg.k_seed),
                relation_seeds=self._top_k("relation", query, cfg.k_seed),
            )

    # --- subgraph assembly ---

    def _entity_sim(
        self, graph: MemoryGraph, query: QueryContext, entity_id: str, memo: dict[str, float]
    ) -> float:
        sim = memo.get(entity_id)
        if sim is None:
            sim = cosine(query.embedding, graph.entities[entity_id].embedding)
            memo[entity_id] = sim
        return sim

    def edge_weight(
        self,
        query: QueryContext,
        edge: tuple,
        cfg: RetrievalConfig | None = None,
        *,
        _graph: MemoryGraph | None = None,
        _memo: dict[str, float] | None = None,
    ) -> float:
        """Weight of one edge under the current query.

        ``edge`` is ("mention", entity_id, turn_ref),
        ("hierarchy", turn_ref, segment_id) or ("relation", index).
        Raw similarity clamps at zero, then the configured floor applies;
        with ``uniform_weights`` every edge weighs 1.
        """
        cfg = cfg or self._config
        if cfg.uniform_weights:
            return 1.0
        memo = _memo if _memo is not None else {}

        def compute(graph: MemoryGraph) -> float:
            kind = edge[0]
            if kind == "mention":
                sim = self._entity_sim(graph, query, edge[1], memo)
            elif kind == "relation":
                sim = cosine(query.embedding, graph.relation_edges[edge[1]].embedding)
            elif kind == "hierarchy":
                entity_ids = graph.entities_of_turn(edge[1])
                if not entity_ids:
                    return cfg.weight_floor
                sim = sum(
                    self._entity_sim(graph, query, eid, memo) for eid in sorted(entity_ids)
                ) / len(entity_ids)
            else:
                raise InvalidInput(f"unknown edge kind: {kind!r}")
            return max(max(sim, 0.0), cfg.weight_floor)

        if _graph is not None:
            return compute(_graph)
        with self._store.read_lease() as graph:
            return compute(graph)

    def assemble_subgraph(
        self, seeds: SeedSet, query: QueryContext, cfg: RetrievalConfig | None = None
    ) -> Subgraph:
        """Expand seeds one hop and induce the weighted subgraph.

        Relation seeds inject both endpoint entities into the expansion
        frontier. With ``full_graph`` the entire graph is used and only
        the weighting stays query-dependent.
        """
        cfg = cfg or self._config
        with self._store.read_lease() as graph:
            if graph.is_empty:
                raise EmptyGraph("cannot assemble a subgraph over an empty graph")
            if cfg.full_graph:
                included: set[NodeId] = set()
                included.update(turn_node(*ref) for ref in graph.turns)
                included.update(segment_node(sid) for sid in graph.segments)
                included.update(entity_node(eid) for eid in graph.entities)
            else:
                if seeds.is_empty:
                    raise InvalidInput("cannot assemble a subgraph from an empty seed set")
                frontier: set[NodeId] = set()
                for segment_id, _ in seeds.segment_seeds:
                    frontier.add(segment_node(segment_id))
                for entity_id, _ in seeds.entity_seeds:
                    frontier.add(entity_node(entity_id))
                for index, _ in seeds.relation_seeds:
                    edge = graph.relation_edges[index]
                    frontier.add(entity_node(edge.subject))
                    frontier.add(entity_node(edge.object))
                included = set(frontier)
                for node in frontier:
                    kind = node[0]
                    if kind == "segment":
                        included.update(turn_node(*ref) for ref in graph.turns_of_segment(node[1]))
                    elif kind == "entity":
                        entity_id = node[1]
                        included.update(turn_node(*ref) for ref in graph.turns_of_entity(entity_id))
                        for index in graph.relations_of_entity(entity_id):
                            edge = graph.relation_edges[index]
                            included.add(entity_node(edge.subject))
                            included.add(entity_node(edge.object))

            nodes = tuple(sorted(included))
            node_set = set(nodes)
            memo: dict[str, float] = {}
            edges: list[tuple[str, NodeId, NodeId, float]] = []
            for entity_id, ref in sorted(graph.mention_edges):
                u, v = entity_node(entity_id), turn_node(*ref)
                if u in node_set and v in node_set:
                    w = self.edge_weight(
                        query, ("mention", entity_id, ref), cfg, _graph=graph, _memo=memo
                    )
                    edges.append(("mention", u, v, w))
            for ref, segment_id in sorted(graph.hierarchy_edges):
                u, v = turn_node(*ref), segment_node(segment_id)
                if u in node_set and v in node_set:
                    w = self.edge_weight(
                        query, ("hierarchy", ref, segment_id), cfg, _graph=graph, _memo=memo
                    )
                    edges.append(("hierarchy", u, v, w))
            for index, edge in enumerate(graph.relation_edges):
                u, v = entity_node(edge.subject), entity_node(edge.object)
                if u in node_set and v in node_set:
                    w = self.edge_weight(query, ("relation", index), cfg, _graph=graph, _memo=memo)
                    edges.append((f"relation:{index}", u, v, w))

            raw_affinity: dict[NodeId, float] = {}
            for node in nodes:
                kind = node[0]
                if kind == "turn":
                    embedding = graph.turns[(node[1], node[2])].embedding
                elif kind == "segment":
                    embedding = graph.segments[node[1]].embedding
                else:
                    embedding = graph.entities[node[1]].embedding
                raw_affinity[node] = max(cosine(query.embedding, embedding), 0.0)
            total = sum(raw_affinity.values())
            if total > 0.0:
                seed_values = {node: value / total for node, value in raw_affinity.items()}
            else:
                uniform = 1.0 / len(nodes)
                seed_values = {node: uniform for node in nodes}
            return Subgraph(nodes=nodes, edges=tuple(edges), seed_values=seed_values)

    # --- the walk ---

    def dw_pagerank(self, subgraph: Subgraph, cfg: RetrievalConfig | None = None) -> ScoreVector:
        """Personalized PageRank over the weighted subgraph.

        Transition probabilities are the row-normalized edge weights;
        mass on nodes without outgoing weight is redistributed in
        proportion to the seed values. Iteration stops when the L1
        change drops below the tolerance or after max_iterations.
        """
        cfg = cfg or self._config
        nodes = subgraph.nodes
        n = len(nodes)
        index = {node: i for i, node in enumerate(nodes)}
        seed = np.array([subgraph.seed_values[node] for node in nodes], dtype=np.float64)
        seed_sum = float(seed.sum())
        if abs(seed_sum - 1.0) > _SEED_SUM_TOL:
            raise InternalInvariantError(f"seed vector sums to {seed_sum!r}, expected 1")

        m = len(subgraph.edges)
        src = np.empty(2 * m, dtype=np.int64)
        dst = np.empty(2 * m, dtype=np.int64)
        weight = np.empty(2 * m, dtype=np.float64)
        for position, (_, u, v, w) in enumerate(subgraph.edges):
            iu, iv = index[u], index[v]
            src[2 * position] = iu
            dst[2 * position] = iv
            src[2 * position + 1] = iv
            dst[2 * position + 1] = iu
            weight[2 * position] = w
            weight[2 * position + 1] = w

        out_weight = np.bincount(src, weights=weight, minlength=n)
        has_out = out_weight > 0.0
        normalized = weight / out_weight[src] if m else weight
        dangling = ~has_out

        d = cfg.damping
        x = seed.copy()
        iterations = 0
        converged = False
        mass_trace: list[float] = []
        for _ in range(cfg.max_iterations):
            iterations += 1
            if m:
                flow = np.bincount(dst, weights=normalized * x[src], minlength=n)
            else:
                flow = np.zeros(n, dtype=np.float64)
            dangling_mass = float(x[dangling].sum()) if dangling.any() else 0.0
            x_next = (1.0 - d) * seed + d * (flow + dangling_mass * seed)
            mass = float(x_next.sum())
            mass_trace.append(mass)
            if abs(mass - 1.0) > _MASS_TOL:
                raise InternalInvariantError(
                    f"score mass drifted to {mass!r} at iteration {iterations}"
                )
            delta = float(np.abs(x_next - x).sum())
            x = x_next
            if delta < cfg.tolerance:
                converged = True
                break

        scores = {node: float(x[i]) for i, node in enumerate(nodes)}
        return ScoreVector(
            scores=scores,
            iterations=iterations,
            converged=converged,
            mass_trace=tuple(mass_trace),
        )

    # --- ranking and enrichment ---

    def rank_turns(
        self, scores: ScoreVector, cfg: RetrievalConfig | None = None
    ) -> list[tuple[Turn, float]]:
        """Order turn nodes by score, ties by (session_id, turn_id)."""
        cfg = cfg or self._config
        turn_scores = [
            (node, value) for node, value in scores.scores.items() if node[0] == "turn"
        ]
        turn_scores.sort(key=lambda item: (-item[1], item[0]))
        with self._store.read_lease() as graph:
            return [
                (graph.turns[(node[1], node[2])], value)
                for node, value in turn_scores[: cfg.top_m_turns]
            ]

    def enrich_with_triplets(
        self,
        ranked: Sequence[tuple[Turn, float]],
        cfg: RetrievalConfig | None = None,
    ) -> tuple[tuple[RelationEdge, ...], dict[str, str]]:
        """Relation edges citing any ranked turn, ordered by best citing rank."""
        cfg = cfg or self._config
        if cfg.disable_triplet_enrichment or not ranked:
            return (), {}
        rank_of: dict[TurnRef, int] = {}
        for position, (turn, _) in enumerate(ranked):
            rank_of.setdefault(turn.ref, position)
        hits: list[tuple[int, int, RelationEdge]] = []
        with self._store.read_lease() as graph:
            for position, edge in enumerate(graph.relation_edges):
                cited = [rank_of[ref] for ref in edge.source_turns if ref in rank_of]
                if cited:
                    hits.append((min(cited), position, edge))
            hits.sort(key=lambda item: (item[0], item[1]))
            names: dict[str, str] = {}
            for _, _, edge in hits:
                names[edge.subject] = graph.entities[edge.subject].name
                names[edge.object] = graph.entities[edge.object].name
        return tuple(edge for _, _, edge in hits), names

    # --- orchestration ---

    def retrieve(
        self, query: str | QueryContext, cfg: RetrievalConfig | None = None
    ) -> EvidenceBundle:
        """Full pipeline: seeds, subgraph, walk, ranking, enrichment."""
        cfg = cfg or self._config
        context = query if isinstance(query, QueryContext) else self.make_query(query)
        with self._store.read_lease() as graph:
            seeds = self.seed_search(context, cfg)
            subgraph = self.assemble_subgraph(seeds, context, cfg)
            started = time.perf_counter()
            scores = self.dw_pagerank(subgraph, cfg)
            pagerank_ms = (time.perf_counter() - started) * 1000.0
            ranked = self.rank_turns(scores, cfg)
            triplets, names = self.enrich_with_triplets(ranked, cfg)
            stats = SubgraphStats(
                node_count=len(subgraph.nodes),
                edge_count=len(subgraph.edges),
                turn_count=len(subgraph.turn_refs),
                graph_turn_count=len(graph.turns),
                subgraph_turn_refs=tuple(sorted(subgraph.turn_refs)),
                iterations=scores.iterations,
                converged=scores.converged,
                pagerank_ms=pagerank_ms,
            )
        logger.debug(
            "retrieve: %d nodes, %d edges, %d iterations, %.2f ms",
            stats.node_count,
            stats.edge_count,
            stats.iterations,
            pagerank_ms,
        )
        return EvidenceBundle(
            query_text=context.query_text,
            ranked_turns=tuple(ranked),
            triplets=triplets,
            entity_names=names,
            stats=stats,
        )
