"""Session ingestion: segmentation, selective gating, summarization, extraction.

Model outputs drive every stage, but each stage has a deterministic
fallback (single whole-session segment, retain-all, concatenated first
sentences) so ingestion stays total under provider failure. Prompts
number messages 0-based within the presented window; parse results are
rebased to (session_id, turn_id) provenance immediately.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from .errors import InvalidInput, ProviderUnavailable, StructuredOutputError
from .gateway import LlmGateway
from .model import RetrievalConfig, SegmentRecord, Turn, TurnRef
from .store import GraphStore

logger = logging.getLogger(__name__)

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_FALLBACK_SUMMARY_LIMIT = 512


@dataclass(frozen=True)
class ExtractedTriplet:
    """A triplet with provenance already rebased to absolute turn refs."""

    subject: str
    relation: str
    object: str
    source_turns: tuple[TurnRef, ...]


@dataclass(frozen=True)
class ExtractedEntity:
    """An entity description with rebased provenance."""

    name: str
    description: str
    source_turns: tuple[TurnRef, ...]
    expected: bool = True


@dataclass
class IngestReport:
    """What one session ingestion did."""

    session_id: str
    segment_count: int = 0
    turn_count: int = 0
    retained_turn_count: int = 0
    entity_count: int = 0
    triplet_count: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    structured_failures: int = 0
    provider_failures: int = 0
    fallbacks: dict[str, int] = field(default_factory=dict)

    @property
    def retained_ratio(self) -> float:
        return self.retained_turn_count / self.turn_count if self.turn_count else 0.0

    def as_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "segment_count": self.segment_count,
            "turn_count": self.turn_count,
            "retained_turn_count": self.retained_turn_count,
            "retained_ratio": self.retained_ratio,
            "entity_count": self.entity_count,
            "triplet_count": self.triplet_count,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "structured_failures": self.structured_failures,
            "provider_failures": self.provider_failures,
            "fallbacks": dict(self.fallbacks),
        }


def _format_numbered(turns: Sequence[Turn]) -> str:
    return "\n".join(f"Message {i}: {t.speaker}: {t.text}" for i, t in enumerate(turns))


def _format_indexed(turns: Sequence[Turn]) -> str:
    return "\n".join(f"[{i}] {t.speaker}: {t.text}" for i, t in enumerate(turns))


def _format_plain(turns: Sequence[Turn]) -> str:
    return "\n".join(f"{t.speaker}: {t.text}" for t in turns)


def _format_turn_lines(turns: Sequence[Turn]) -> str:
    return "\n".join(f"Turn {i}: {t.speaker}: {t.text}" for i, t in enumerate(turns))


def _first_sentence(text: str) -> str:
    return _SENTENCE_SPLIT_RE.split(text.strip(), maxsplit=1)[0].strip()


class IngestPipeline:
    """Turns raw session transcripts into committed graph updates."""

    def __init__(
        self,
        store: GraphStore,
        gateway: LlmGateway,
        config: RetrievalConfig | None = None,
    ) -> None:
        self._store = store
        self._gateway = gateway
        self._config = config or RetrievalConfig()

    # --- stage helpers ---

    def _ask(self, report: IngestReport, template_id: str, **bindings: str) -> str | None:
        """One completion; transport failure returns None and is tallied."""
        prompt = self._gateway.render(template_id, **bindings)
        try:
            result = self._gateway.complete(prompt, session_id=report.session_id)
        except ProviderUnavailable as exc:
            report.provider_failures += 1
            logger.warning("provider failure during %s: %s", template_id, exc)
            return None
        report.input_tokens += result.input_tokens
        report.output_tokens += result.output_tokens
        return result.text

    def _note_fallback(self, report: IngestReport, stage: str) -> None:
        report.fallbacks[stage] = report.fallbacks.get(stage, 0) + 1

    # --- stages ---

    def segment_session(self, session: Sequence[Turn], report: IngestReport) -> list[SegmentRecord]:
        """Partition a session into topical segments.

        Falls back to one whole-session segment when the model output
        fails the gate or the provider is down.
        """
        if not session:
            raise InvalidInput("cannot segment an empty session")
        session_id = session[0].session_id
        position_groups: list[list[int]] | None = None
        text = self._ask(report, "segmentation", numbered_messages_str=_format_numbered(session))
        if text is not None:
            try:
                position_groups = self._gateway.parse_segment_indices(text, len(session))
            except StructuredOutputError as exc:
                report.structured_failures += 1
                logger.warning("segmentation output rejected (%s): %s", exc.kind, exc)
        if position_groups is None:
            self._note_fallback(report, "segmentation")
            position_groups = [list(range(len(session)))]
        segments = []
        for ordinal, positions in enumerate(position_groups):
            member_ids = tuple(session[p].turn_id for p in positions)
            segments.append(
                SegmentRecord(
                    segment_id=f"{session_id}:seg{ordinal}",
                    session_id=session_id,
                    member_turns=member_ids,
                    retained_turns=frozenset(),
                )
            )
        return segments

    def filter_segment(
        self, segment: SegmentRecord, members: Sequence[Turn], report: IngestReport
    ) -> frozenset[int]:
        """Select the turn ids worth keeping as graph nodes.

        Falls back to retaining everything; the ablation switch
        ``disable_selective_filter`` short-circuits to retain-all.
        """
        all_ids = frozenset(segment.member_turns)
        if self._config.disable_selective_filter:
            return all_ids
        text = self._ask(report, "selective_filter", formatted_conv=_format_indexed(members))
        if text is None:
            self._note_fallback(report, "selective_filter")
            return all_ids
        try:
            positions = self._gateway.parse_index_array(text, len(members))
        except StructuredOutputError as exc:
            report.structured_failures += 1
            logger.warning("selective filter output rejected (%s): %s", exc.kind, exc)
            self._note_fallback(report, "selective_filter")
            return all_ids
        return frozenset(members[p].turn_id for p in positions)

    def summarize_segment(
        self, segment: SegmentRecord, members: Sequence[Turn], report: IngestReport
    ) -> str:
        """Produce the segment summary, or a concatenated-sentence fallback."""
        text = self._ask(report, "segment_summary", segment_content=_format_plain(members))
        summary = text.strip() if text else ""
        if not summary:
            self._note_fallback(report, "segment_summary")
            summary = " ".join(_first_sentence(t.text) for t in members)[:_FALLBACK_SUMMARY_LIMIT]
        return summary

    def extract_triplets(
        self, retained: Sequence[Turn], report: IngestReport
    ) -> list[ExtractedTriplet]:
        """Extract relation triplets from the retained turns of one segment."""
        if not retained:
            return []
        session_id = retained[0].session_id
        text = self._ask(report, "triplet_extraction", segment_text=_format_numbered(retained))
        if text is None:
            return []
        try:
            raw = self._gateway.parse_pipe_triplets(text, range(len(retained)))
        except StructuredOutputError as exc:
            report.structured_failures += 1
            logger.warning("triplet output rejected (%s): %s", exc.kind, exc)
            return []
        return [
            ExtractedTriplet(
                subject=t.subject,
                relation=t.relation,
                object=t.object,
                source_turns=tuple((session_id, retained[p].turn_id) for p in t.indices),
            )
            for t in raw
        ]

    def extract_entities(
        self,
        retained: Sequence[Turn],
        entity_names: Sequence[str],
        report: IngestReport,
    ) -> list[ExtractedEntity]:
        """Describe the given entities from the retained turns of one segment."""
        if not retained or not entity_names:
            return []
        session_id = retained[0].session_id
        text = self._ask(
            report,
            "entity_description",
            segment=_format_turn_lines(retained),
            entity_list=", ".join(entity_names),
        )
        if text is None:
            return []
        try:
            raw = self._gateway.parse_entity_descriptions(
                text, entity_names, range(len(retained))
            )
        except StructuredOutputError as exc:
            report.structured_failures += 1
            logger.warning("entity description output rejected (%s): %s", exc.kind, exc)
            return []
        return [
            ExtractedEntity(
                name=e.entity,
                description=e.description,
                source_turns=tuple((session_id, retained[p].turn_id) for p in e.indices),
                expected=e.expected,
            )
            for e in raw
        ]

    # --- orchestration ---

    def _validate_session(self, session: Sequence[Turn]) -> str:
        if not session:
            raise InvalidInput("session must contain at least one turn")
        session_id = session[0].session_id
        if any(t.session_id != session_id for t in session):
            raise InvalidInput("all turns of a session must share one session_id")
        ids = [t.turn_id for t in session]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise InvalidInput("turn ids must be strictly ascending within a session")
        if self._store.has_session(session_id):
            raise InvalidInput(f"session {session_id!r} is already ingested")
        return session_id

    def ingest_session(self, session: Sequence[Turn]) -> IngestReport:
        """Run the full pipeline for one session and commit atomically.

        Model-facing stages degrade to fallbacks on failure; any hard
        failure (embedding provider down, integrity violation) aborts
        the transaction and leaves the graph untouched.
        """
        session_id = self._validate_session(session)
        report = IngestReport(session_id=session_id, turn_count=len(session))
        turns_by_id = {t.turn_id: t for t in session}

        segments = self.segment_session(session, report)
        report.segment_count = len(segments)

        plan: list[tuple[SegmentRecord, list[Turn], list[ExtractedTriplet], list[ExtractedEntity]]] = []
        for segment in segments:
            members = [turns_by_id[i] for i in segment.member_turns]
            retained_ids = self.filter_segment(segment, members, report)
            summary = self.summarize_segment(segment, members, report)
            segment = replace(segment, retained_turns=retained_ids, summary=summary)
            retained = [t for t in members if t.turn_id in retained_ids]
            report.retained_turn_count += len(retained)

            triplets = self.extract_triplets(retained, report)
            speakers = list(dict.fromkeys(t.speaker for t in retained))
            mentioned = list(
                dict.fromkeys(
                    [t.subject for t in triplets] + [t.object for t in triplets] + speakers
                )
            )
            entities = self.extract_entities(retained, mentioned, report)
            plan.append((segment, retained, triplets, entities))

        touched_entities: set[str] = set()
        with self._store.transaction() as graph:
            embed = self._store.embed
            for segment, retained, triplets, entities in plan:
                graph.add_segment(replace(segment, embedding=embed(segment.summary)))
                for turn in retained:
                    graph.add_turn(
                        replace(turn, segment_id=segment.segment_id, embedding=embed(turn.text))
                    )
            for segment, retained, triplets, entities in plan:
                for entity in entities:
                    touched_entities.add(
                        graph.upsert_entity(
                            entity.name, entity.description, entity.source_turns, embed
                        )
                    )
                for triplet in triplets:
                    index = graph.add_relation_edge(
                        triplet.subject,
                        triplet.relation,
                        triplet.object,
                        triplet.source_turns,
                        embed,
                    )
                    edge = graph.relation_edges[index]
                    touched_entities.update((edge.subject, edge.object))
                    report.triplet_count += 1

        report.entity_count = len(touched_entities)
        logger.info(
            "ingested session %s: %d segments, %d/%d turns retained, %d entities, %d triplets",
            session_id,
            report.segment_count,
            report.retained_turn_count,
            report.turn_count,
            report.entity_count,
            report.triplet_count,
        )
        return report
