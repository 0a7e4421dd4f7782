"""Evaluation harness: corpus loading, retrieval metrics, end-to-end runs.

The corpus is a versioned JSON file of multi-session conversations plus
questions with gold evidence annotations. The harness ingests each
conversation into its own fresh store, retrieves for every question,
and aggregates recall at session and turn granularity, subgraph turn
coverage, walk latency, token usage, structured-output error rate, and
optionally lexical F1 and judge verdicts for generated answers.

Recall is gold-fraction: |gold hit in top-k| / |gold|, so retrieving
half the evidence scores 0.5. The stricter hit-rate variant (any gold
in top-k) is reported alongside under its own name.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Collection, Iterable, Mapping, Sequence

from .answer import AnswerComposer
from .embedding import Embedder
from .errors import (
    CorpusFormatError,
    InvalidInput,
    ProviderUnavailable,
    StructuredOutputError,
)
from .gateway import LlmGateway
from .ingest import IngestPipeline, IngestReport
from .model import RetrievalConfig, Turn, TurnRef
from .retrieval import RetrievalEngine
from .store import GraphStore

logger = logging.getLogger(__name__)

CORPUS_VERSION = 1
RECALL_KS = (3, 5, 10)


# --- corpus types ---


@dataclass(frozen=True)
class SessionRecord:
    """One session transcript within a conversation."""

    session_id: str
    turns: tuple[Turn, ...]
    date: str | None = None


@dataclass(frozen=True)
class Conversation:
    """A multi-session history ingested into one store."""

    conversation_id: str
    sessions: tuple[SessionRecord, ...]

    @property
    def session_ids(self) -> tuple[str, ...]:
        return tuple(s.session_id for s in self.sessions)


@dataclass(frozen=True)
class Question:
    """A query with gold evidence annotations.

    ``gold_turns`` lists (session_id, turn_id) evidence; ``gold_sessions``
    must cover at least the sessions those turns come from. A question
    binds to exactly one conversation, either explicitly via
    ``conversation_id`` or through its gold sessions.
    """

    question_id: str
    query: str
    reference_answer: str
    gold_turns: tuple[TurnRef, ...]
    gold_sessions: tuple[str, ...]
    category: str | None = None
    conversation_id: str | None = None


@dataclass(frozen=True)
class Corpus:
    """A validated evaluation corpus."""

    name: str
    conversations: tuple[Conversation, ...]
    questions: tuple[Question, ...]

    def conversation_of(self, question: Question) -> Conversation:
        """The single conversation a question evaluates against."""
        by_id = {c.conversation_id: c for c in self.conversations}
        if question.conversation_id is not None:
            return by_id[question.conversation_id]
        owners = {
            c.conversation_id
            for c in self.conversations
            if set(question.gold_sessions) & set(c.session_ids)
        }
        # load_corpus guarantees exactly one owner
        return by_id[owners.pop()]


# --- corpus loading ---


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise CorpusFormatError(path, message)


def _string_field(obj: Mapping, key: str, path: str, *, required: bool = True) -> str | None:
    value = obj.get(key)
    if value is None:
        _expect(not required, f"{path}.{key}", "missing required field")
        return None
    _expect(isinstance(value, str), f"{path}.{key}", "expected a string")
    if required:
        _expect(bool(value.strip()), f"{path}.{key}", "must be non-empty")
    return value


def _load_turn(obj: dict, path: str, session_id: str, date: str | None) -> Turn:
    _expect(isinstance(obj, dict), path, "expected an object")
    turn_id = obj.get("turn_id")
    _expect(
        isinstance(turn_id, int) and not isinstance(turn_id, bool),
        f"{path}.turn_id",
        "expected an integer",
    )
    speaker = _string_field(obj, "speaker", path)
    text = _string_field(obj, "text", path)
    timestamp = _string_field(obj, "timestamp", path, required=False)
    try:
        return Turn(
            session_id=session_id,
            turn_id=turn_id,
            speaker=speaker,
            text=text,
            # missing per-turn timestamps inherit the session date
            timestamp=timestamp if timestamp is not None else date,
        )
    except InvalidInput as exc:
        raise CorpusFormatError(path, str(exc)) from exc


def _load_session(obj: dict, path: str) -> SessionRecord:
    _expect(isinstance(obj, dict), path, "expected an object")
    session_id = _string_field(obj, "session_id", path)
    date = _string_field(obj, "date", path, required=False)
    raw_turns = obj.get("turns")
    _expect(isinstance(raw_turns, list) and raw_turns, f"{path}.turns", "expected a non-empty list")
    turns = tuple(
        _load_turn(t, f"{path}.turns[{i}]", session_id, date) for i, t in enumerate(raw_turns)
    )
    ids = [t.turn_id for t in turns]
    _expect(
        all(b > a for a, b in zip(ids, ids[1:])),
        f"{path}.turns",
        "turn_id values must be strictly ascending",
    )
    return SessionRecord(session_id=session_id, turns=turns, date=date)


# the HTTP service validates ingest bodies against the same session schema
def session_record_from_dict(obj: dict, path: str = "$") -> SessionRecord:
    return _load_session(obj, path)


def _load_question(obj: dict, path: str) -> Question:
    _expect(isinstance(obj, dict), path, "expected an object")
    question_id = _string_field(obj, "question_id", path)
    query = _string_field(obj, "query", path)
    reference = _string_field(obj, "reference_answer", path)
    category = _string_field(obj, "category", path, required=False)
    conversation_id = _string_field(obj, "conversation_id", path, required=False)

    raw_turns = obj.get("gold_turns", [])
    _expect(isinstance(raw_turns, list), f"{path}.gold_turns", "expected a list")
    gold_turns: list[TurnRef] = []
    for i, item in enumerate(raw_turns):
        item_path = f"{path}.gold_turns[{i}]"
        _expect(
            isinstance(item, (list, tuple)) and len(item) == 2,
            item_path,
            "expected a [session_id, turn_id] pair",
        )
        sid, tid = item
        _expect(isinstance(sid, str) and bool(sid), item_path, "session_id must be a string")
        _expect(
            isinstance(tid, int) and not isinstance(tid, bool),
            item_path,
            "turn_id must be an integer",
        )
        gold_turns.append((sid, tid))

    raw_sessions = obj.get("gold_sessions", [])
    _expect(isinstance(raw_sessions, list), f"{path}.gold_sessions", "expected a list")
    for i, sid in enumerate(raw_sessions):
        _expect(
            isinstance(sid, str) and bool(sid),
            f"{path}.gold_sessions[{i}]",
            "expected a session_id string",
        )

    return Question(
        question_id=question_id,
        query=query,
        reference_answer=reference,
        gold_turns=tuple(gold_turns),
        gold_sessions=tuple(raw_sessions),
        category=category,
        conversation_id=conversation_id,
    )


def corpus_from_dict(data: dict, *, source: str = "<dict>") -> Corpus:
    """Validate a parsed corpus document into a Corpus."""
    _expect(isinstance(data, dict), "$", "corpus document must be an object")
    version = data.get("version")
    _expect(version is not None, "$.version", "missing required field")
    _expect(
        version == CORPUS_VERSION,
        "$.version",
        f"unsupported corpus version {version!r}, expected {CORPUS_VERSION}",
    )
    name = _string_field(data, "name", "$", required=False) or Path(source).stem or "corpus"

    raw_conversations = data.get("conversations")
    _expect(
        isinstance(raw_conversations, list) and raw_conversations,
        "$.conversations",
        "expected a non-empty list",
    )
    conversations: list[Conversation] = []
    session_owner: dict[str, str] = {}
    turn_index: dict[TurnRef, str] = {}
    for ci, raw in enumerate(raw_conversations):
        path = f"$.conversations[{ci}]"
        _expect(isinstance(raw, dict), path, "expected an object")
        conversation_id = _string_field(raw, "conversation_id", path)
        raw_sessions = raw.get("sessions")
        _expect(
            isinstance(raw_sessions, list) and raw_sessions,
            f"{path}.sessions",
            "expected a non-empty list",
        )
        sessions = tuple(
            _load_session(s, f"{path}.sessions[{si}]") for si, s in enumerate(raw_sessions)
        )
        for si, session in enumerate(sessions):
            _expect(
                session.session_id not in session_owner,
                f"{path}.sessions[{si}].session_id",
                f"duplicate session_id {session.session_id!r}",
            )
            session_owner[session.session_id] = conversation_id
            for turn in session.turns:
                turn_index[turn.ref] = conversation_id
        _expect(
            conversation_id not in {c.conversation_id for c in conversations},
            f"{path}.conversation_id",
            f"duplicate conversation_id {conversation_id!r}",
        )
        conversations.append(Conversation(conversation_id=conversation_id, sessions=sessions))

    raw_questions = data.get("questions", [])
    _expect(isinstance(raw_questions, list), "$.questions", "expected a list")
    questions: list[Question] = []
    seen_question_ids: set[str] = set()
    for qi, raw in enumerate(raw_questions):
        path = f"$.questions[{qi}]"
        question = _load_question(raw, path)
        _expect(
            question.question_id not in seen_question_ids,
            f"{path}.question_id",
            f"duplicate question_id {question.question_id!r}",
        )
        seen_question_ids.add(question.question_id)

        owners: set[str] = set()
        for i, ref in enumerate(question.gold_turns):
            _expect(
                ref in turn_index,
                f"{path}.gold_turns[{i}]",
                f"references unknown turn {ref[0]}:{ref[1]}",
            )
            owners.add(turn_index[ref])
        gold_turn_sessions = {sid for sid, _ in question.gold_turns}
        for i, sid in enumerate(question.gold_sessions):
            _expect(
                sid in session_owner,
                f"{path}.gold_sessions[{i}]",
                f"references unknown session {sid!r}",
            )
            owners.add(session_owner[sid])
        _expect(
            gold_turn_sessions <= set(question.gold_sessions),
            f"{path}.gold_sessions",
            "must include every session referenced by gold_turns",
        )
        if question.conversation_id is not None:
            _expect(
                question.conversation_id in session_owner.values()
                or question.conversation_id in {c.conversation_id for c in conversations},
                f"{path}.conversation_id",
                f"references unknown conversation {question.conversation_id!r}",
            )
            owners.add(question.conversation_id)
        _expect(
            len(owners) == 1,
            f"{path}",
            "question must resolve to exactly one conversation"
            + (" (add conversation_id or gold_sessions)" if not owners else ""),
        )
        questions.append(question)

    return Corpus(name=name, conversations=tuple(conversations), questions=tuple(questions))


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a corpus JSON file."""
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError("$", f"corpus file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusFormatError("$", f"cannot parse corpus file: {exc}") from exc
    return corpus_from_dict(data, source=str(path))


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "version": CORPUS_VERSION,
        "name": corpus.name,
        "conversations": [
            {
                "conversation_id": c.conversation_id,
                "sessions": [
                    {
                        "session_id": s.session_id,
                        **({"date": s.date} if s.date is not None else {}),
                        "turns": [
                            {
                                "turn_id": t.turn_id,
                                "speaker": t.speaker,
                                "text": t.text,
                                **(
                                    {"timestamp": t.timestamp}
                                    if t.timestamp is not None
                                    else {}
                                ),
                            }
                            for t in s.turns
                        ],
                    }
                    for s in c.sessions
                ],
            }
            for c in corpus.conversations
        ],
        "questions": [
            {
                "question_id": q.question_id,
                "query": q.query,
                "reference_answer": q.reference_answer,
                "gold_turns": [list(ref) for ref in q.gold_turns],
                "gold_sessions": list(q.gold_sessions),
                **({"category": q.category} if q.category is not None else {}),
                **(
                    {"conversation_id": q.conversation_id}
                    if q.conversation_id is not None
                    else {}
                ),
            }
            for q in corpus.questions
        ],
    }


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(corpus_to_dict(corpus), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


# --- metrics ---


def recall_at_k(retrieved: Sequence, gold: Collection, k: int) -> float:
    """Fraction of gold items present in the top-k of the ranking."""
    if k < 1:
        raise InvalidInput("k must be at least 1")
    if not gold:
        raise InvalidInput("gold set must be non-empty")
    top = set(list(retrieved)[:k])
    return len(top & set(gold)) / len(gold)


def hit_at_k(retrieved: Sequence, gold: Collection, k: int) -> float:
    """1.0 when any gold item appears in the top-k, else 0.0."""
    if k < 1:
        raise InvalidInput("k must be at least 1")
    if not gold:
        raise InvalidInput("gold set must be non-empty")
    top = set(list(retrieved)[:k])
    return 1.0 if top & set(gold) else 0.0


def sessions_from_turns(refs: Iterable[TurnRef]) -> list[str]:
    """Session ranking induced by a turn ranking: first occurrence wins."""
    return list(dict.fromkeys(sid for sid, _ in refs))


def turn_coverage(subgraph_turns: Collection[TurnRef], gold: Collection[TurnRef]) -> float:
    """Fraction of gold turns that survived into the subgraph."""
    if not gold:
        raise InvalidInput("gold set must be non-empty")
    return len(set(subgraph_turns) & set(gold)) / len(gold)


def token_f1(prediction: str, reference: str) -> float:
    """Harmonic mean of token precision and recall, lowercased whitespace split."""
    if not reference or not reference.strip():
        raise InvalidInput("reference must be non-empty")
    pred_tokens = Counter(prediction.lower().split())
    ref_tokens = Counter(reference.lower().split())
    overlap = sum((pred_tokens & ref_tokens).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(pred_tokens.values())
    recall = overlap / sum(ref_tokens.values())
    return 2.0 * precision * recall / (precision + recall)


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


# --- reports ---


@dataclass
class QuestionResult:
    """Metrics for one evaluated question."""

    question_id: str
    conversation_id: str
    category: str | None = None
    turn_recall: dict[int, float] = field(default_factory=dict)
    session_recall: dict[int, float] = field(default_factory=dict)
    turn_hit: dict[int, float] = field(default_factory=dict)
    session_hit: dict[int, float] = field(default_factory=dict)
    coverage: float | None = None
    pagerank_ms: float | None = None
    iterations: int | None = None
    answer: str | None = None
    f1: float | None = None
    judged_correct: bool | None = None
    skipped: bool = False
    error: str | None = None

    def to_dict(self, *, include_timing: bool = True) -> dict:
        data: dict = {
            "question_id": self.question_id,
            "conversation_id": self.conversation_id,
            "category": self.category,
            "turn_recall": {str(k): v for k, v in sorted(self.turn_recall.items())},
            "session_recall": {str(k): v for k, v in sorted(self.session_recall.items())},
            "turn_hit": {str(k): v for k, v in sorted(self.turn_hit.items())},
            "session_hit": {str(k): v for k, v in sorted(self.session_hit.items())},
            "coverage": self.coverage,
            "skipped": self.skipped,
            "error": self.error,
        }
        if self.answer is not None:
            data["answer"] = self.answer
        if self.f1 is not None:
            data["f1"] = self.f1
        if self.judged_correct is not None:
            data["judged_correct"] = self.judged_correct
        if include_timing:
            data["pagerank_ms"] = self.pagerank_ms
            data["iterations"] = self.iterations
        return data


@dataclass
class EvalReport:
    """Aggregated metrics for one harness run."""

    corpus_name: str
    label: str
    question_count: int
    evaluated_count: int
    skipped_count: int
    failed_count: int
    turn_recall: dict[int, float | None]
    session_recall: dict[int, float | None]
    turn_hit: dict[int, float | None]
    session_hit: dict[int, float | None]
    mean_coverage: float | None
    mean_pagerank_ms: float | None
    error_rate: float
    session_tokens: dict[str, dict[str, int]]
    ingest_reports: list[dict]
    results: list[QuestionResult]
    mean_f1: float | None = None
    judge_accuracy: float | None = None

    def to_dict(self, *, include_timing: bool = True) -> dict:
        data: dict = {
            "corpus": self.corpus_name,
            "label": self.label,
            "question_count": self.question_count,
            "evaluated_count": self.evaluated_count,
            "skipped_count": self.skipped_count,
            "failed_count": self.failed_count,
            "turn_recall": {str(k): v for k, v in sorted(self.turn_recall.items())},
            "session_recall": {str(k): v for k, v in sorted(self.session_recall.items())},
            "turn_hit": {str(k): v for k, v in sorted(self.turn_hit.items())},
            "session_hit": {str(k): v for k, v in sorted(self.session_hit.items())},
            "mean_coverage": self.mean_coverage,
            "structured_error_rate": self.error_rate,
            "session_tokens": {k: dict(v) for k, v in sorted(self.session_tokens.items())},
            "ingest": self.ingest_reports,
            "questions": [r.to_dict(include_timing=include_timing) for r in self.results],
        }
        if self.mean_f1 is not None:
            data["mean_f1"] = self.mean_f1
        if self.judge_accuracy is not None:
            data["judge_accuracy"] = self.judge_accuracy
        if include_timing:
            data["mean_pagerank_ms"] = self.mean_pagerank_ms
        return data

    def canonical_dict(self) -> dict:
        """Deterministic view: identical runs produce identical bytes."""
        return self.to_dict(include_timing=False)

    def canonical_json(self) -> str:
        return json.dumps(
            self.canonical_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )

    def to_text(self) -> str:
        """Fixed-width summary table."""

        def fmt(value: float | None) -> str:
            return f"{value:7.4f}" if value is not None else "      -"

        lines = [
            f"corpus: {self.corpus_name}    mode: {self.label}",
            f"questions: {self.question_count}  evaluated: {self.evaluated_count}"
            f"  skipped: {self.skipped_count}  failed: {self.failed_count}",
            "",
            f"{'k':>3} | {'turn R@k':>8} | {'sess R@k':>8} | {'turn hit':>8} | {'sess hit':>8}",
            "-" * 49,
        ]
        for k in RECALL_KS:
            lines.append(
                f"{k:>3} | {fmt(self.turn_recall.get(k)):>8} | {fmt(self.session_recall.get(k)):>8}"
                f" | {fmt(self.turn_hit.get(k)):>8} | {fmt(self.session_hit.get(k)):>8}"
            )
        lines.append("-" * 49)
        lines.append(f"mean turn coverage : {fmt(self.mean_coverage)}")
        if self.mean_pagerank_ms is not None:
            lines.append(f"mean walk latency  : {self.mean_pagerank_ms:9.3f} ms")
        lines.append(f"structured errors  : {self.error_rate:7.4f}")
        if self.mean_f1 is not None:
            lines.append(f"mean token F1      : {fmt(self.mean_f1)}")
        if self.judge_accuracy is not None:
            lines.append(f"judge accuracy     : {fmt(self.judge_accuracy)}")
        total_in = sum(v.get("input_tokens", 0) for v in self.session_tokens.values())
        total_out = sum(v.get("output_tokens", 0) for v in self.session_tokens.values())
        lines.append(f"ingest tokens      : {total_in} in / {total_out} out")
        return "\n".join(lines)


def _config_label(cfg: RetrievalConfig) -> str:
    parts = []
    if cfg.uniform_weights:
        parts.append("uniform")
    if cfg.full_graph:
        parts.append("full-graph")
    if cfg.disable_selective_filter:
        parts.append("no-selective")
    if cfg.disable_triplet_enrichment:
        parts.append("no-triplets")
    return "+".join(parts) if parts else "dynamic"


# --- harness ---


class EvalHarness:
    """Runs ingestion plus retrieval over a corpus and aggregates metrics."""

    def __init__(
        self,
        embedder: Embedder,
        gateway: LlmGateway,
        config: RetrievalConfig | None = None,
    ) -> None:
        self._embedder = embedder
        self._gateway = gateway
        self._config = config or RetrievalConfig()

    def run(
        self,
        corpus: Corpus,
        cfg: RetrievalConfig | None = None,
        *,
        generate: bool = False,
        judge: bool = False,
        stores: dict[str, GraphStore] | None = None,
    ) -> EvalReport:
        """Evaluate the corpus end to end.

        Each conversation is ingested into its own fresh store. Pass
        ``stores`` to receive the per-conversation stores back (useful
        for snapshots and inspection). Judge implies an answer is
        generated for comparison, so ``judge=True`` forces generation.
        """
        cfg = cfg or self._config
        generate = generate or judge
        # retrieval must rank at least max(k) turns for recall to be fair
        eval_cfg = replace(cfg, top_m_turns=max(cfg.top_m_turns, max(RECALL_KS)))
        before = self._gateway.accounting()

        ingest_reports: list[IngestReport] = []
        engines: dict[str, RetrievalEngine] = {}
        for conversation in corpus.conversations:
            store = GraphStore(self._embedder)
            if stores is not None:
                stores[conversation.conversation_id] = store
            pipeline = IngestPipeline(store, self._gateway, eval_cfg)
            for session in conversation.sessions:
                ingest_reports.append(pipeline.ingest_session(list(session.turns)))
            engines[conversation.conversation_id] = RetrievalEngine(
                store, self._embedder, eval_cfg
            )

        composer = AnswerComposer(self._gateway)
        results: list[QuestionResult] = []
        for question in sorted(corpus.questions, key=lambda q: q.question_id):
            conversation = corpus.conversation_of(question)
            result = QuestionResult(
                question_id=question.question_id,
                conversation_id=conversation.conversation_id,
                category=question.category,
            )
            results.append(result)
            if not question.gold_turns and not question.gold_sessions:
                result.skipped = True
                continue
            engine = engines[conversation.conversation_id]
            try:
                bundle = engine.retrieve(question.query, eval_cfg)
            except ProviderUnavailable as exc:
                result.error = str(exc)
                logger.warning("question %s failed: %s", question.question_id, exc)
                continue

            ranked_refs = list(bundle.turn_refs)
            ranked_sessions = sessions_from_turns(ranked_refs)
            gold_turns = set(question.gold_turns)
            gold_sessions = set(question.gold_sessions)
            for k in RECALL_KS:
                if gold_turns:
                    result.turn_recall[k] = recall_at_k(ranked_refs, gold_turns, k)
                    result.turn_hit[k] = hit_at_k(ranked_refs, gold_turns, k)
                if gold_sessions:
                    result.session_recall[k] = recall_at_k(ranked_sessions, gold_sessions, k)
                    result.session_hit[k] = hit_at_k(ranked_sessions, gold_sessions, k)
            if gold_turns:
                result.coverage = turn_coverage(bundle.stats.subgraph_turn_refs, gold_turns)
            result.pagerank_ms = bundle.stats.pagerank_ms
            result.iterations = bundle.stats.iterations

            if generate:
                try:
                    result.answer = composer.answer(bundle)
                    result.f1 = token_f1(result.answer, question.reference_answer)
                    if judge:
                        result.judged_correct = composer.judge(
                            question.query, question.reference_answer, result.answer
                        )
                except (ProviderUnavailable, StructuredOutputError) as exc:
                    result.error = str(exc)
                    logger.warning(
                        "generation for %s failed: %s", question.question_id, exc
                    )

        after = self._gateway.accounting()
        session_tokens: dict[str, dict[str, int]] = {}
        for session_id, (inp, out) in after.session_tokens.items():
            prev = before.session_tokens.get(session_id, (0, 0))
            delta_in, delta_out = inp - prev[0], out - prev[1]
            if delta_in or delta_out:
                session_tokens[session_id] = {
                    "input_tokens": delta_in,
                    "output_tokens": delta_out,
                }
        attempts = after.structured_attempts - before.structured_attempts
        failures = after.structured_failures - before.structured_failures
        error_rate = failures / max(attempts, 1)

        evaluated = [r for r in results if not r.skipped and r.error is None]
        f1_values = [r.f1 for r in evaluated if r.f1 is not None]
        verdicts = [r.judged_correct for r in evaluated if r.judged_correct is not None]
        report = EvalReport(
            corpus_name=corpus.name,
            label=_config_label(cfg),
            question_count=len(results),
            evaluated_count=len(evaluated),
            skipped_count=sum(1 for r in results if r.skipped),
            failed_count=sum(1 for r in results if r.error is not None),
            turn_recall={
                k: _mean([r.turn_recall[k] for r in evaluated if k in r.turn_recall])
                for k in RECALL_KS
            },
            session_recall={
                k: _mean([r.session_recall[k] for r in evaluated if k in r.session_recall])
                for k in RECALL_KS
            },
            turn_hit={
                k: _mean([r.turn_hit[k] for r in evaluated if k in r.turn_hit])
                for k in RECALL_KS
            },
            session_hit={
                k: _mean([r.session_hit[k] for r in evaluated if k in r.session_hit])
                for k in RECALL_KS
            },
            mean_coverage=_mean([r.coverage for r in evaluated if r.coverage is not None]),
            mean_pagerank_ms=_mean(
                [r.pagerank_ms for r in evaluated if r.pagerank_ms is not None]
            ),
            error_rate=error_rate,
            session_tokens=session_tokens,
            ingest_reports=[r.as_dict() for r in ingest_reports],
            results=results,
            mean_f1=_mean(f1_values),
            judge_accuracy=(
                sum(1 for v in verdicts if v) / len(verdicts) if verdicts else None
            ),
        )
        return report
