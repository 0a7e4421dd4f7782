"""Core value types of the conversational memory graph.

Node identity scheme used across the engine:

* turn node      ``("turn", session_id, turn_id)``
* segment node   ``("segment", segment_id)``
* entity node    ``("entity", entity_id)`` where entity_id is the
  normalized entity name (names merge case- and whitespace-insensitively)

All value types are frozen dataclasses; graph mutation happens through
the store, which replaces instances instead of editing them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .embedding import Embedding
from .errors import InvalidInput, InvalidName

TurnRef = tuple[str, int]
NodeId = tuple

_WHITESPACE_RE = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Canonical entity-merge key: trimmed, lowercased, inner whitespace collapsed."""
    collapsed = _WHITESPACE_RE.sub(" ", name.strip()).lower()
    if not collapsed:
        raise InvalidName(f"entity name is empty after normalization: {name!r}")
    return collapsed


def turn_node(session_id: str, turn_id: int) -> NodeId:
    return ("turn", session_id, turn_id)


def segment_node(segment_id: str) -> NodeId:
    return ("segment", segment_id)


def entity_node(entity_id: str) -> NodeId:
    return ("entity", entity_id)


@dataclass(frozen=True)
class Turn:
    """One conversational message.

    ``turn_id`` is the ordinal of the message within its session;
    ``segment_id`` is assigned when the turn is committed to a graph.
    """

    session_id: str
    turn_id: int
    speaker: str
    text: str
    timestamp: str | None = None
    segment_id: str | None = None
    embedding: Embedding | None = None

    def __post_init__(self) -> None:
        if not self.session_id:
            raise InvalidInput("turn needs a session_id")
        if not isinstance(self.turn_id, int) or isinstance(self.turn_id, bool):
            raise InvalidInput("turn_id must be an integer")
        if not self.speaker or not self.speaker.strip():
            raise InvalidInput("turn needs a speaker label")
        if not self.text or not self.text.strip():
            raise InvalidInput("turn text must be non-empty")

    @property
    def ref(self) -> TurnRef:
        return (self.session_id, self.turn_id)

    @property
    def node_id(self) -> NodeId:
        return turn_node(self.session_id, self.turn_id)


@dataclass(frozen=True)
class SegmentRecord:
    """A topically coherent span of one session.

    ``member_turns`` is the full ordered span; ``retained_turns`` is the
    subset that passed the selective memory gate and therefore exists as
    turn nodes in the graph. The summary covers the whole span.
    """

    segment_id: str
    session_id: str
    member_turns: tuple[int, ...]
    retained_turns: frozenset[int]
    summary: str = ""
    embedding: Embedding | None = None

    def __post_init__(self) -> None:
        if not self.segment_id:
            raise InvalidInput("segment needs a segment_id")
        if not self.member_turns:
            raise InvalidInput("segment must contain at least one turn")
        members = tuple(self.member_turns)
        if any(b <= a for a, b in zip(members, members[1:])):
            raise InvalidInput("member_turns must be strictly ascending")
        if not frozenset(self.retained_turns) <= frozenset(members):
            raise InvalidInput("retained_turns must be a subset of member_turns")
        object.__setattr__(self, "member_turns", members)
        object.__setattr__(self, "retained_turns", frozenset(self.retained_turns))

    @property
    def node_id(self) -> NodeId:
        return segment_node(self.segment_id)


@dataclass(frozen=True)
class Entity:
    """An entity node with its accumulated description and provenance."""

    entity_id: str
    name: str
    norm_name: str
    description: str
    turn_ids: frozenset[TurnRef]
    embedding: Embedding

    def __post_init__(self) -> None:
        if normalize_name(self.name) != self.norm_name:
            raise InvalidInput(
                f"norm_name {self.norm_name!r} does not match name {self.name!r}"
            )
        if self.entity_id != self.norm_name:
            raise InvalidInput("entity_id must equal the normalized name")
        if not self.description or not self.description.strip():
            raise InvalidInput("entity description must be non-empty")
        if not self.turn_ids:
            raise InvalidInput("entity must cite at least one turn")
        object.__setattr__(self, "turn_ids", frozenset(self.turn_ids))

    @property
    def node_id(self) -> NodeId:
        return entity_node(self.entity_id)


@dataclass(frozen=True)
class RelationEdge:
    """Typed edge between two entities, with turn provenance.

    ``subject`` and ``object`` are entity ids. Self-loops are allowed
    but exposed through ``is_self_loop`` so callers can flag them.
    """

    subject: str
    relation: str
    object: str
    description: str
    source_turns: frozenset[TurnRef]
    embedding: Embedding

    def __post_init__(self) -> None:
        if not self.subject or not self.object:
            raise InvalidInput("relation edge needs both endpoints")
        if not self.relation or not self.relation.strip():
            raise InvalidInput("relation label must be non-empty")
        if not self.source_turns:
            raise InvalidInput("relation edge needs at least one source turn")
        if not self.description or not self.description.strip():
            raise InvalidInput("relation description must be non-empty")
        object.__setattr__(self, "source_turns", frozenset(self.source_turns))

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)

    @property
    def is_self_loop(self) -> bool:
        return self.subject == self.object


@dataclass(frozen=True)
class QueryContext:
    """A query string with its unit embedding."""

    query_text: str
    embedding: Embedding

    def __post_init__(self) -> None:
        if not self.query_text or not self.query_text.strip():
            raise InvalidInput("query text must be non-empty")


@dataclass(frozen=True)
class RetrievalConfig:
    """Tunable knobs of the retrieval stack, including ablation switches."""

    damping: float = 0.85
    tolerance: float = 1e-10
    max_iterations: int = 100
    k_seed: int = 10
    top_m_turns: int = 10
    weight_floor: float = 1e-6
    uniform_weights: bool = False
    full_graph: bool = False
    disable_triplet_enrichment: bool = False
    disable_selective_filter: bool = False

    def __post_init__(self) -> None:
        if not (0.0 < self.damping < 1.0):
            raise InvalidInput("damping must lie strictly between 0 and 1")
        if self.tolerance <= 0.0:
            raise InvalidInput("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be at least 1")
        if self.k_seed < 1:
            raise InvalidInput("k_seed must be at least 1")
        if self.top_m_turns < 1:
            raise InvalidInput("top_m_turns must be at least 1")
        if self.weight_floor <= 0.0:
            raise InvalidInput("weight_floor must be positive")


@dataclass(frozen=True)
class SubgraphStats:
    """Shape and runtime facts about one retrieval pass."""

    node_count: int
    edge_count: int
    turn_count: int
    graph_turn_count: int
    subgraph_turn_refs: tuple[TurnRef, ...]
    iterations: int
    converged: bool
    pagerank_ms: float

    def to_dict(self, *, include_timing: bool = True) -> dict:
        data = {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "turn_count": self.turn_count,
            "graph_turn_count": self.graph_turn_count,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if include_timing:
            data["pagerank_ms"] = self.pagerank_ms
        return data


@dataclass(frozen=True)
class EvidenceBundle:
    """Result of one retrieval: ranked turns plus supporting triplets.

    ``entity_names`` maps the entity ids appearing in ``triplets`` back
    to their display names so the bundle renders without store access.
    """

    query_text: str
    ranked_turns: tuple[tuple[Turn, float], ...]
    triplets: tuple[RelationEdge, ...]
    entity_names: Mapping[str, str]
    stats: SubgraphStats

    def __post_init__(self) -> None:
        scores = [score for _, score in self.ranked_turns]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise InvalidInput("ranked turn scores must be non-increasing")
        ranked_refs = {turn.ref for turn, _ in self.ranked_turns}
        for edge in self.triplets:
            if not (edge.source_turns & ranked_refs):
                raise InvalidInput(
                    f"triplet {edge.key} cites no turn from the ranked list"
                )

    @property
    def turn_refs(self) -> tuple[TurnRef, ...]:
        return tuple(turn.ref for turn, _ in self.ranked_turns)

    def to_dict(self, *, include_timing: bool = True) -> dict:
        return {
            "query": self.query_text,
            "ranked_turns": [
                {
                    "session_id": turn.session_id,
                    "turn_id": turn.turn_id,
                    "speaker": turn.speaker,
                    "text": turn.text,
                    "timestamp": turn.timestamp,
                    "segment_id": turn.segment_id,
                    "score": score,
                }
                for turn, score in self.ranked_turns
            ],
            "triplets": [
                {
                    "subject": self.entity_names.get(edge.subject, edge.subject),
                    "subject_id": edge.subject,
                    "relation": edge.relation,
                    "object": self.entity_names.get(edge.object, edge.object),
                    "object_id": edge.object,
                    "description": edge.description,
                    "source_turns": sorted(edge.source_turns),
                }
                for edge in self.triplets
            ],
            "stats": self.stats.to_dict(include_timing=include_timing),
        }


@dataclass(frozen=True)
class RawTriplet:
    """A parsed triplet line, indices still local to the prompt numbering."""

    subject: str
    relation: str
    object: str
    indices: tuple[int, ...]


@dataclass(frozen=True)
class RawEntityDescription:
    """A parsed entity-description line.

    ``expected`` is False when the model described an entity that was
    not in the requested list; such lines are kept but flagged.
    """

    entity: str
    description: str
    indices: tuple[int, ...]
    expected: bool = True


def format_turn_refs(refs: Sequence[TurnRef]) -> str:
    """Render turn provenance as "session:turn" pairs, sorted."""
    return ", ".join(f"{session_id}:{turn_id}" for session_id, turn_id in sorted(refs))
