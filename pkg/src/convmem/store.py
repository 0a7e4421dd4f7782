"""Heterogeneous memory graph: ownership, mutation, persistence.

``MemoryGraph`` is the plain data container plus integrity checking;
``GraphStore`` layers concurrency control, embedding upkeep, and the
snapshot format on top. Readers and writers follow a reader-writer
discipline: any number of concurrent readers or one writer. Session
ingestion commits through ``transaction()``, which builds on a cloned
graph and swaps it in atomically, so queries keep being served from the
previous committed graph until the swap.
"""

from __future__ import annotations

import json
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .embedding import Embedder, Embedding
from .errors import (
    DimensionError,
    IntegrityError,
    InvalidInput,
    SnapshotCorrupt,
    SnapshotVersionError,
)
from .model import (
    Entity,
    NodeId,
    RelationEdge,
    SegmentRecord,
    Turn,
    TurnRef,
    normalize_name,
)

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
SNAPSHOT_SUFFIX = ".memgraph.json"

DESCRIPTION_SEPARATOR = "; "


@dataclass(frozen=True)
class GraphStats:
    """Node and edge counts plus mean entity degree."""

    turn_count: int
    segment_count: int
    entity_count: int
    relation_edge_count: int
    mention_edge_count: int
    hierarchy_edge_count: int
    mean_entity_degree: float

    @property
    def node_count(self) -> int:
        return self.turn_count + self.segment_count + self.entity_count

    def as_dict(self) -> dict:
        return {
            "turn_count": self.turn_count,
            "segment_count": self.segment_count,
            "entity_count": self.entity_count,
            "relation_edge_count": self.relation_edge_count,
            "mention_edge_count": self.mention_edge_count,
            "hierarchy_edge_count": self.hierarchy_edge_count,
            "mean_entity_degree": self.mean_entity_degree,
        }


class _ReadWriteLock:
    """Many readers or a single writer."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    @contextmanager
    def read(self) -> Iterator[None]:
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self) -> Iterator[None]:
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True
        try:
            yield
        finally:
            with self._cond:
                self._writing = False
                self._cond.notify_all()


class MemoryGraph:
    """Raw graph state: three node maps, three edge collections, indexes.

    Mutators enforce referential integrity locally; ``validate()`` runs
    the full cross-structure audit and returns human-readable violation
    strings (empty list means the graph is consistent).
    """

    def __init__(self, dim: int | None = None) -> None:
        self.dim = dim
        self.turns: dict[TurnRef, Turn] = {}
        self.segments: dict[str, SegmentRecord] = {}
        self.entities: dict[str, Entity] = {}
        self.relation_edges: list[RelationEdge] = []
        self.mention_edges: set[tuple[str, TurnRef]] = set()
        self.hierarchy_edges: set[tuple[TurnRef, str]] = set()
        self.sessions: set[str] = set()
        self._relation_key_index: dict[tuple[str, str, str], int] = {}
        self._turn_segment: dict[TurnRef, str] = {}
        self._turns_of_segment: dict[str, set[TurnRef]] = {}
        self._turns_of_entity: dict[str, set[TurnRef]] = {}
        self._entities_of_turn: dict[TurnRef, set[str]] = {}
        self._relations_of_entity: dict[str, set[int]] = {}

    # --- shape ---

    @property
    def node_count(self) -> int:
        return len(self.turns) + len(self.segments) + len(self.entities)

    @property
    def is_empty(self) -> bool:
        return self.node_count == 0

    def stats(self) -> GraphStats:
        degree_total = len(self.mention_edges) + sum(
            len(edges) for edges in self._relations_of_entity.values()
        )
        entity_count = len(self.entities)
        return GraphStats(
            turn_count=len(self.turns),
            segment_count=len(self.segments),
            entity_count=entity_count,
            relation_edge_count=len(self.relation_edges),
            mention_edge_count=len(self.mention_edges),
            hierarchy_edge_count=len(self.hierarchy_edges),
            mean_entity_degree=degree_total / entity_count if entity_count else 0.0,
        )

    # --- adjacency ---

    def entities_of_turn(self, ref: TurnRef) -> set[str]:
        return self._entities_of_turn.get(ref, set())

    def turns_of_entity(self, entity_id: str) -> set[TurnRef]:
        return self._turns_of_entity.get(entity_id, set())

    def turns_of_segment(self, segment_id: str) -> set[TurnRef]:
        return self._turns_of_segment.get(segment_id, set())

    def segment_of_turn(self, ref: TurnRef) -> str | None:
        return self._turn_segment.get(ref)

    def relations_of_entity(self, entity_id: str) -> set[int]:
        return self._relations_of_entity.get(entity_id, set())

    def clone(self) -> "MemoryGraph":
        fork = MemoryGraph(dim=self.dim)
        fork.turns = dict(self.turns)
        fork.segments = dict(self.segments)
        fork.entities = dict(self.entities)
        fork.relation_edges = list(self.relation_edges)
        fork.mention_edges = set(self.mention_edges)
        fork.hierarchy_edges = set(self.hierarchy_edges)
        fork.sessions = set(self.sessions)
        fork._relation_key_index = dict(self._relation_key_index)
        fork._turn_segment = dict(self._turn_segment)
        fork._turns_of_segment = {k: set(v) for k, v in self._turns_of_segment.items()}
        fork._turns_of_entity = {k: set(v) for k, v in self._turns_of_entity.items()}
        fork._entities_of_turn = {k: set(v) for k, v in self._entities_of_turn.items()}
        fork._relations_of_entity = {k: set(v) for k, v in self._relations_of_entity.items()}
        return fork

    # --- mutation ---

    def _check_embedding(self, embedding: Embedding | None, what: str) -> Embedding:
        if embedding is None:
            raise InvalidInput(f"{what} needs an embedding")
        if self.dim is None:
            self.dim = embedding.dim
        elif embedding.dim != self.dim:
            raise DimensionError(
                f"{what} embedding dim {embedding.dim} does not match graph dim {self.dim}"
            )
        return embedding

    def add_segment(self, segment: SegmentRecord) -> None:
        if segment.segment_id in self.segments:
            raise IntegrityError(f"segment {segment.segment_id!r} already exists")
        if not segment.summary.strip():
            raise InvalidInput("segment must carry a summary when committed")
        self._check_embedding(segment.embedding, "segment")
        self.segments[segment.segment_id] = segment
        self._turns_of_segment.setdefault(segment.segment_id, set())
        self.sessions.add(segment.session_id)

    def add_turn(self, turn: Turn) -> None:
        if turn.ref in self.turns:
            raise IntegrityError(f"turn {turn.ref} already exists")
        if turn.segment_id is None:
            raise InvalidInput("turn must be assigned to a segment when committed")
        segment = self.segments.get(turn.segment_id)
        if segment is None:
            raise IntegrityError(f"turn {turn.ref} references unknown segment {turn.segment_id!r}")
        if turn.session_id != segment.session_id:
            raise IntegrityError(f"turn {turn.ref} belongs to a different session than its segment")
        if turn.turn_id not in segment.retained_turns:
            raise IntegrityError(
                f"turn {turn.ref} is not in the retained set of segment {turn.segment_id!r}"
            )
        self._check_embedding(turn.embedding, "turn")
        self.turns[turn.ref] = turn
        self.sessions.add(turn.session_id)
        self._link_hierarchy(turn.ref, turn.segment_id)

    def _link_hierarchy(self, ref: TurnRef, segment_id: str) -> None:
        assigned = self._turn_segment.get(ref)
        if assigned is not None and assigned != segment_id:
            raise IntegrityError(
                f"turn {ref} is already linked to segment {assigned!r}, refusing {segment_id!r}"
            )
        self._turn_segment[ref] = segment_id
        self.hierarchy_edges.add((ref, segment_id))
        self._turns_of_segment.setdefault(segment_id, set()).add(ref)

    def link_hierarchy(self, ref: TurnRef, segment_id: str) -> None:
        """Idempotently link a turn to its segment."""
        if ref not in self.turns:
            raise IntegrityError(f"unknown turn {ref}")
        if segment_id not in self.segments:
            raise IntegrityError(f"unknown segment {segment_id!r}")
        self._link_hierarchy(ref, segment_id)

    def link_mention(self, entity_id: str, ref: TurnRef) -> None:
        """Idempotently link an entity to a turn that mentions it."""
        entity = self.entities.get(entity_id)
        if entity is None:
            raise IntegrityError(f"unknown entity {entity_id!r}")
        if ref not in self.turns:
            raise IntegrityError(f"unknown turn {ref}")
        self.mention_edges.add((entity_id, ref))
        self._turns_of_entity.setdefault(entity_id, set()).add(ref)
        self._entities_of_turn.setdefault(ref, set()).add(entity_id)
        if ref not in entity.turn_ids:
            self.entities[entity_id] = replace(entity, turn_ids=entity.turn_ids | {ref})

    def _check_turn_refs(self, refs: Iterable[TurnRef], what: str) -> frozenset[TurnRef]:
        refs = frozenset((session_id, turn_id) for session_id, turn_id in refs)
        missing = [ref for ref in refs if ref not in self.turns]
        if missing:
            raise IntegrityError(f"{what} references unknown turns: {sorted(missing)}")
        return refs

    def upsert_entity(
        self,
        name: str,
        description: str,
        turn_refs: Iterable[TurnRef],
        embed,
    ) -> str:
        """Create or merge an entity; returns its stable id.

        Merging unions provenance and appends the new description with
        ``DESCRIPTION_SEPARATOR``, re-embedding the merged text. ``embed``
        is the text-to-Embedding callable of the owning store.
        """
        if not description or not description.strip():
            raise InvalidInput("entity description must be non-empty")
        entity_id = normalize_name(name)
        refs = self._check_turn_refs(turn_refs, f"entity {name!r}")
        if not refs:
            raise InvalidInput("entity needs at least one source turn")
        existing = self.entities.get(entity_id)
        if existing is None:
            entity = Entity(
                entity_id=entity_id,
                name=name.strip(),
                norm_name=entity_id,
                description=description.strip(),
                turn_ids=refs,
                embedding=self._check_embedding(embed(description.strip()), "entity"),
            )
            self.entities[entity_id] = entity
        else:
            merged_description = (
                existing.description + DESCRIPTION_SEPARATOR + description.strip()
            )
            self.entities[entity_id] = replace(
                existing,
                description=merged_description,
                turn_ids=existing.turn_ids | refs,
                embedding=self._check_embedding(embed(merged_description), "entity"),
            )
        for ref in refs:
            self.link_mention(entity_id, ref)
        return entity_id

    def _resolve_entity(self, name: str, refs: frozenset[TurnRef], embed) -> str:
        """Resolve a relation endpoint, auto-creating unseen entities.

        Unlike ``upsert_entity`` this never touches an existing
        description; it only unions the provenance.
        """
        entity_id = normalize_name(name)
        existing = self.entities.get(entity_id)
        if existing is None:
            surface = name.strip()
            self.entities[entity_id] = Entity(
                entity_id=entity_id,
                name=surface,
                norm_name=entity_id,
                description=surface,
                turn_ids=refs,
                embedding=self._check_embedding(embed(surface), "entity"),
            )
        for ref in refs:
            self.link_mention(entity_id, ref)
        return entity_id

    def add_relation_edge(
        self,
        subject: str,
        relation: str,
        obj: str,
        source_turns: Iterable[TurnRef],
        embed,
        description: str | None = None,
    ) -> int:
        """Add or merge a typed entity-entity edge; returns its index.

        Duplicate (subject, relation, object) triples union their
        source turns instead of creating parallel edges.
        """
        relation = relation.strip()
        if not relation:
            raise InvalidInput("relation label must be non-empty")
        refs = self._check_turn_refs(source_turns, f"relation {relation!r}")
        if not refs:
            raise InvalidInput("relation edge needs at least one source turn")
        subject_id = self._resolve_entity(subject, refs, embed)
        object_id = self._resolve_entity(obj, refs, embed)
        key = (subject_id, relation, object_id)
        index = self._relation_key_index.get(key)
        if index is not None:
            edge = self.relation_edges[index]
            if not refs <= edge.source_turns:
                self.relation_edges[index] = replace(
                    edge, source_turns=edge.source_turns | refs
                )
            return index
        text = description.strip() if description and description.strip() else (
            f"{subject.strip()} {relation} {obj.strip()}"
        )
        edge = RelationEdge(
            subject=subject_id,
            relation=relation,
            object=object_id,
            description=text,
            source_turns=refs,
            embedding=self._check_embedding(embed(text), "relation edge"),
        )
        index = len(self.relation_edges)
        self.relation_edges.append(edge)
        self._relation_key_index[key] = index
        self._relations_of_entity.setdefault(subject_id, set()).add(index)
        self._relations_of_entity.setdefault(object_id, set()).add(index)
        if edge.is_self_loop:
            logger.warning("self-loop relation kept: %s %s", subject_id, relation)
        return index

    # --- integrity audit ---

    def validate(self) -> list[str]:
        """Full cross-structure audit; returns violation descriptions."""
        problems: list[str] = []

        def check(condition: bool, message: str) -> None:
            if not condition:
                problems.append(message)

        for ref, turn in self.turns.items():
            check(turn.ref == ref, f"turn {ref} keyed under wrong ref")
            check(turn.segment_id is not None, f"turn {ref} has no segment")
            segment = self.segments.get(turn.segment_id or "")
            check(segment is not None, f"turn {ref} references missing segment {turn.segment_id!r}")
            if segment is not None:
                check(
                    turn.turn_id in segment.retained_turns,
                    f"turn {ref} absent from retained set of {segment.segment_id!r}",
                )
                check(
                    turn.session_id == segment.session_id,
                    f"turn {ref} session differs from segment {segment.segment_id!r}",
                )
            check(self._turn_segment.get(ref) == turn.segment_id, f"turn {ref} hierarchy index stale")
            check(turn.embedding is not None, f"turn {ref} has no embedding")
            if turn.embedding is not None and self.dim is not None:
                check(turn.embedding.dim == self.dim, f"turn {ref} embedding dim mismatch")

        for segment_id, segment in self.segments.items():
            check(segment.segment_id == segment_id, f"segment {segment_id!r} keyed under wrong id")
            check(bool(segment.summary.strip()), f"segment {segment_id!r} has empty summary")
            check(segment.embedding is not None, f"segment {segment_id!r} has no embedding")
            for turn_id in segment.retained_turns:
                check(
                    (segment.session_id, turn_id) in self.turns,
                    f"segment {segment_id!r} retains missing turn {turn_id}",
                )

        for entity_id, entity in self.entities.items():
            check(entity.entity_id == entity_id, f"entity {entity_id!r} keyed under wrong id")
            for ref in entity.turn_ids:
                check(ref in self.turns, f"entity {entity_id!r} cites missing turn {ref}")
                check(
                    (entity_id, ref) in self.mention_edges,
                    f"entity {entity_id!r} lacks mention edge for {ref}",
                )
            if self.dim is not None:
                check(entity.embedding.dim == self.dim, f"entity {entity_id!r} embedding dim mismatch")

        for entity_id, ref in self.mention_edges:
            entity = self.entities.get(entity_id)
            check(entity is not None, f"mention edge cites missing entity {entity_id!r}")
            check(ref in self.turns, f"mention edge cites missing turn {ref}")
            if entity is not None:
                check(
                    ref in entity.turn_ids,
                    f"mention edge ({entity_id!r}, {ref}) not mirrored in entity provenance",
                )

        for ref, segment_id in self.hierarchy_edges:
            check(ref in self.turns, f"hierarchy edge cites missing turn {ref}")
            check(segment_id in self.segments, f"hierarchy edge cites missing segment {segment_id!r}")
            check(
                self._turn_segment.get(ref) == segment_id,
                f"turn {ref} linked to more than one segment",
            )

        for position, edge in enumerate(self.relation_edges):
            check(edge.subject in self.entities, f"relation {position} cites missing subject")
            check(edge.object in self.entities, f"relation {position} cites missing object")
            for ref in edge.source_turns:
                check(ref in self.turns, f"relation {position} cites missing turn {ref}")
            if self.dim is not None:
                check(edge.embedding.dim == self.dim, f"relation {position} embedding dim mismatch")

        return problems

    # --- serialization ---

    def to_snapshot_dict(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "dim": self.dim,
            "turns": [
                {
                    "session_id": turn.session_id,
                    "turn_id": turn.turn_id,
                    "speaker": turn.speaker,
                    "text": turn.text,
                    "timestamp": turn.timestamp,
                    "segment_id": turn.segment_id,
                    "embedding": turn.embedding.to_list(),
                }
                for _, turn in sorted(self.turns.items())
            ],
            "segments": [
                {
                    "segment_id": segment.segment_id,
                    "session_id": segment.session_id,
                    "member_turns": list(segment.member_turns),
                    "retained_turns": sorted(segment.retained_turns),
                    "summary": segment.summary,
                    "embedding": segment.embedding.to_list(),
                }
                for _, segment in sorted(self.segments.items())
            ],
            "entities": [
                {
                    "entity_id": entity.entity_id,
                    "name": entity.name,
                    "description": entity.description,
                    "turn_ids": [list(ref) for ref in sorted(entity.turn_ids)],
                    "embedding": entity.embedding.to_list(),
                }
                for _, entity in sorted(self.entities.items())
            ],
            "relation_edges": [
                {
                    "subject": edge.subject,
                    "relation": edge.relation,
                    "object": edge.object,
                    "description": edge.description,
                    "source_turns": [list(ref) for ref in sorted(edge.source_turns)],
                    "embedding": edge.embedding.to_list(),
                }
                for edge in self.relation_edges
            ],
            "mention_edges": [
                [entity_id, list(ref)] for entity_id, ref in sorted(self.mention_edges)
            ],
            "hierarchy_edges": [
                [list(ref), segment_id] for ref, segment_id in sorted(self.hierarchy_edges)
            ],
        }


class GraphStore:
    """Thread-safe owner of one MemoryGraph."""

    def __init__(self, embedder: Embedder, graph: MemoryGraph | None = None) -> None:
        self._embedder = embedder
        self._graph = graph if graph is not None else MemoryGraph(dim=embedder.dim)
        if self._graph.dim is not None and self._graph.dim != embedder.dim:
            raise DimensionError(
                f"graph dim {self._graph.dim} does not match embedder dim {embedder.dim}"
            )
        self._rw = _ReadWriteLock()
        self._writer_mutex = threading.Lock()
        self._revision = 0
        self._matrix_cache: dict[str, tuple[int, list, np.ndarray]] = {}
        self._cache_lock = threading.Lock()

    @property
    def embedder(self) -> Embedder:
        return self._embedder

    @property
    def graph(self) -> MemoryGraph:
        return self._graph

    @property
    def revision(self) -> int:
        return self._revision

    def embed(self, text: str) -> Embedding:
        return self._embedder.embed(text)

    @contextmanager
    def read_lease(self) -> Iterator[MemoryGraph]:
        with self._rw.read():
            yield self._graph

    @contextmanager
    def _write(self) -> Iterator[MemoryGraph]:
        with self._writer_mutex:
            with self._rw.write():
                try:
                    yield self._graph
                finally:
                    # A failed op may still have touched the graph; bump the
                    # revision unconditionally so caches never serve stale rows.
                    self._revision += 1

    @contextmanager
    def transaction(self) -> Iterator[MemoryGraph]:
        """All-or-nothing bulk mutation on a cloned graph.

        The clone is built and validated outside the read/write lock, so
        concurrent queries keep hitting the previous graph; only the
        final reference swap excludes readers.
        """
        with self._writer_mutex:
            fork = self._graph.clone()
            yield fork
            violations = fork.validate()
            if violations:
                raise IntegrityError(
                    "transaction would commit an inconsistent graph: " + "; ".join(violations[:5])
                )
            with self._rw.write():
                self._graph = fork
                self._revision += 1

    # --- single-operation mutators ---

    def add_segment(self, segment: SegmentRecord) -> None:
        with self._write() as graph:
            if segment.embedding is None:
                segment = replace(segment, embedding=self.embed(segment.summary))
            graph.add_segment(segment)

    def add_turn(self, turn: Turn) -> None:
        with self._write() as graph:
            if turn.embedding is None:
                turn = replace(turn, embedding=self.embed(turn.text))
            graph.add_turn(turn)

    def upsert_entity(self, name: str, description: str, turn_refs: Iterable[TurnRef]) -> str:
        with self._write() as graph:
            return graph.upsert_entity(name, description, turn_refs, self.embed)

    def add_relation_edge(
        self,
        subject: str,
        relation: str,
        obj: str,
        source_turns: Iterable[TurnRef],
        description: str | None = None,
    ) -> int:
        with self._write() as graph:
            return graph.add_relation_edge(
                subject, relation, obj, source_turns, self.embed, description
            )

    def link_mention(self, entity_id: str, ref: TurnRef) -> None:
        with self._write() as graph:
            graph.link_mention(entity_id, ref)

    def link_hierarchy(self, ref: TurnRef, segment_id: str) -> None:
        with self._write() as graph:
            graph.link_hierarchy(ref, segment_id)

    # --- reads ---

    def stats(self) -> GraphStats:
        with self.read_lease() as graph:
            return graph.stats()

    def validate(self) -> list[str]:
        with self.read_lease() as graph:
            return graph.validate()

    def has_session(self, session_id: str) -> bool:
        with self.read_lease() as graph:
            return session_id in graph.sessions

    def aspect_vectors(self, kind: str) -> tuple[list, np.ndarray]:
        """Stacked embeddings for one node aspect, cached per revision.

        Returns (ids, matrix) where row i is the embedding of ids[i].
        Ids are in canonical sorted order (relation edges keep their
        insertion index) so downstream numerics do not depend on
        ingestion history.
        """
        with self._cache_lock:
            cached = self._matrix_cache.get(kind)
            if cached is not None and cached[0] == self._revision:
                return cached[1], cached[2]
        with self.read_lease() as graph:
            revision = self._revision
            if kind == "segment":
                ids = sorted(graph.segments)
                rows = [graph.segments[i].embedding.values for i in ids]
            elif kind == "entity":
                ids = sorted(graph.entities)
                rows = [graph.entities[i].embedding.values for i in ids]
            elif kind == "relation":
                ids = list(range(len(graph.relation_edges)))
                rows = [edge.embedding.values for edge in graph.relation_edges]
            elif kind == "turn":
                ids = sorted(graph.turns)
                rows = [graph.turns[i].embedding.values for i in ids]
            else:
                raise InvalidInput(f"unknown aspect kind: {kind!r}")
            dim = graph.dim or self._embedder.dim
            matrix = np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.float64)
        with self._cache_lock:
            self._matrix_cache[kind] = (revision, ids, matrix)
        return ids, matrix

    # --- snapshots ---

    def snapshot_save(self, path: str | Path) -> Path:
        """Write the graph to a versioned, byte-stable JSON snapshot."""
        path = Path(path)
        with self.read_lease() as graph:
            violations = graph.validate()
            if violations:
                raise IntegrityError(
                    "refusing to snapshot an inconsistent graph: " + "; ".join(violations[:5])
                )
            payload = graph.to_snapshot_dict()
        text = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        path.write_text(text, encoding="utf-8")
        logger.info("snapshot saved to %s (%d nodes)", path, self._graph.node_count)
        return path

    @classmethod
    def snapshot_load(cls, path: str | Path, embedder: Embedder) -> "GraphStore":
        """Rebuild a store from a snapshot file."""
        path = Path(path)
        if not path.exists():
            raise SnapshotCorrupt(f"snapshot file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise SnapshotCorrupt(f"unreadable snapshot {path}: {exc}") from exc
        if not isinstance(payload, dict) or "version" not in payload:
            raise SnapshotCorrupt(f"snapshot {path} has no version field")
        if payload["version"] != SNAPSHOT_VERSION:
            raise SnapshotVersionError(
                f"snapshot version {payload['version']!r} unsupported (expected {SNAPSHOT_VERSION})"
            )
        graph = MemoryGraph(dim=payload.get("dim"))
        try:
            for record in payload["segments"]:
                graph.add_segment(
                    SegmentRecord(
                        segment_id=record["segment_id"],
                        session_id=record["session_id"],
                        member_turns=tuple(record["member_turns"]),
                        retained_turns=frozenset(record["retained_turns"]),
                        summary=record["summary"],
                        embedding=Embedding(record["embedding"]),
                    )
                )
            for record in payload["turns"]:
                graph.add_turn(
                    Turn(
                        session_id=record["session_id"],
                        turn_id=record["turn_id"],
                        speaker=record["speaker"],
                        text=record["text"],
                        timestamp=record["timestamp"],
                        segment_id=record["segment_id"],
                        embedding=Embedding(record["embedding"]),
                    )
                )
            for record in payload["entities"]:
                entity = Entity(
                    entity_id=record["entity_id"],
                    name=record["name"],
                    norm_name=record["entity_id"],
                    description=record["description"],
                    turn_ids=frozenset((s, t) for s, t in record["turn_ids"]),
                    embedding=Embedding(record["embedding"]),
                )
                graph.entities[entity.entity_id] = entity
                for ref in entity.turn_ids:
                    graph.link_mention(entity.entity_id, ref)
            for record in payload["relation_edges"]:
                refs = frozenset((s, t) for s, t in record["source_turns"])
                edge = RelationEdge(
                    subject=record["subject"],
                    relation=record["relation"],
                    object=record["object"],
                    description=record["description"],
                    source_turns=refs,
                    embedding=Embedding(record["embedding"]),
                )
                index = len(graph.relation_edges)
                graph.relation_edges.append(edge)
                graph._relation_key_index[edge.key] = index
                graph._relations_of_entity.setdefault(edge.subject, set()).add(index)
                graph._relations_of_entity.setdefault(edge.object, set()).add(index)
            for entity_id, ref in payload["mention_edges"]:
                graph.link_mention(entity_id, tuple(ref))
            for ref, segment_id in payload["hierarchy_edges"]:
                graph.link_hierarchy(tuple(ref), segment_id)
        except (KeyError, TypeError, ValueError, InvalidInput, IntegrityError) as exc:
            raise SnapshotCorrupt(f"snapshot {path} failed to rebuild: {exc}") from exc
        violations = graph.validate()
        if violations:
            raise SnapshotCorrupt(
                f"snapshot {path} is inconsistent: " + "; ".join(violations[:5])
            )
        return cls(embedder, graph=graph)
