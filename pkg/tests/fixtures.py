"""Engineered corpora, scripted providers, and synthetic graphs.

Every fixture is deterministic: corpora are pure functions, mock rules
use single repeating responses, and graph builders take the embedder
explicitly. Token vocabularies are chosen so that each question shares
words exactly with its own evidence (descriptions repeat the entity
name, the verb, and the object), which keeps the walk well conditioned
on the relevant cluster.
"""

from __future__ import annotations

import numpy as np

from convmem import (
    Conversation,
    Corpus,
    GraphStore,
    LlmGateway,
    MockChatProvider,
    Question,
    SegmentRecord,
    SessionRecord,
    Turn,
)

VERBS = (
    "collect", "restore", "paint", "catalog", "trade",
    "carve", "photograph", "archive", "repair", "display",
    "sketch", "polish", "frame", "varnish", "assemble",
    "curate", "auction", "appraise", "bind", "glaze",
    "etch", "weave", "mend", "forge", "mold",
    "print", "stitch", "tune", "wax", "sand",
    "stain", "label", "shelve", "pack", "ship",
    "insure", "lend", "admire", "study", "research",
    "track", "hunt", "barter", "bid", "sell",
    "donate", "exhibit", "restock", "inherit", "treasure",
)

PLANTED_FACTS = 50
PLANTED_SESSIONS = 20


def planted_fact(i: int) -> tuple[str, str, str]:
    """(person, verb, object) vocabulary for planted fact ``i``."""
    return f"resident{i:02d}", VERBS[i], f"artifact{i:02d}"


def _facts_of_session(s: int) -> list[int]:
    return [i for i in (s, s + PLANTED_SESSIONS, s + 2 * PLANTED_SESSIONS) if i < PLANTED_FACTS]


def planted_question_text(i: int) -> str:
    # query-only function words (what/does/like/to) stay out of filler
    # turns and summaries, so unrelated sessions score exactly zero
    person, verb, obj = planted_fact(i)
    return f"what does {person} like to {verb}"


def planted_corpus() -> Corpus:
    """20 sessions, 50 planted facts, one question per fact.

    Each session holds an opening filler turn, one turn per fact, and a
    closing filler turn; the filter mock keeps only the fact turns.
    """
    sessions = []
    questions = []
    for s in range(PLANTED_SESSIONS):
        session_id = f"sess{s:02d}"
        facts = _facts_of_session(s)
        turns = [Turn(session_id, 0, "user", "good catching up again, busy week all around.")]
        for j, i in enumerate(facts):
            person, verb, obj = planted_fact(i)
            speaker = "user" if j % 2 == 0 else "friend"
            turns.append(
                Turn(
                    session_id,
                    j + 1,
                    speaker,
                    f"{person} will {verb} another {obj} piece at the fair next weekend.",
                )
            )
            questions.append(
                Question(
                    question_id=f"q{i:02d}",
                    query=planted_question_text(i),
                    reference_answer=f"{obj} pieces",
                    gold_turns=((session_id, j + 1),),
                    gold_sessions=(session_id,),
                    category="planted",
                )
            )
        turns.append(
            Turn(session_id, len(facts) + 1, "friend", "anyway, see you soon, take care.")
        )
        sessions.append(
            SessionRecord(session_id=session_id, turns=tuple(turns), date=f"2025-03-{s + 1:02d}")
        )
    conversation = Conversation(conversation_id="conv0", sessions=tuple(sessions))
    return Corpus(name="planted", conversations=(conversation,), questions=tuple(questions))


def planted_provider() -> MockChatProvider:
    """Scripted model outputs for every planted session.

    Rules key on the session's first fact token, which appears in the
    rendered prompt of every stage for that session and nowhere else.
    Every fact also ties its turn to the shared fairground and pavilion
    entities; the relation between those two closes a triangle through
    each fact turn, so any seeded fragment of the graph mixes instead
    of oscillating between the two sides of a star.
    """
    provider = MockChatProvider()
    for s in range(PLANTED_SESSIONS):
        facts = _facts_of_session(s)
        tag = f"resident{s:02d} "
        n_turns = len(facts) + 2
        provider.respond("segmentation", f"[{list(range(n_turns))}]", contains=tag)
        provider.respond(
            "selective_filter", str(list(range(1, len(facts) + 1))), contains=tag
        )
        plans = ", ".join(
            f"{planted_fact(i)[0]} plans {planted_fact(i)[1]} trips" for i in facts
        )
        provider.respond(
            "segment_summary",
            f"Caught up where {plans} ahead of the fair.",
            contains=tag,
        )
        triplet_lines = []
        entity_lines = []
        for j, i in enumerate(facts):
            person, verb, obj = planted_fact(i)
            triplet_lines.append(f"{person}|likes to {verb}|{obj}|{j}")
            triplet_lines.append(f"{person}|visits|fairground|{j}")
            triplet_lines.append(f"fairground|stands beside|pavilion|{j}")
            entity_lines.append(f"{person}|{person} fancies {verb} trips for {obj} pieces|{j}")
            entity_lines.append(f"{obj}|{obj} pieces {person} fancies on {verb} trips|{j}")
        provider.respond("triplet_extraction", "\n".join(triplet_lines), contains=tag)
        provider.respond("entity_description", "\n".join(entity_lines), contains=tag)
    for i in range(PLANTED_FACTS):
        person, verb, obj = planted_fact(i)
        # keyed on the question text so stray context mentions of other
        # residents cannot satisfy an earlier rule first; no trailing
        # punctuation so whitespace tokens line up with the reference
        provider.respond(
            "answer_generation", f"{person} likes to {verb} {obj} pieces",
            contains=f"does {person} like",
        )
    provider.respond("judge", "[[yes]]")
    return provider


def planted_gateway() -> LlmGateway:
    return LlmGateway(planted_provider())


# --- hub-distractor fixture ---

HUB_COUNT = 8
HUB_SESSION = "hub00"
HUB_QUERY = "who maintains the lantern room"
HUB_GOLD_TURN = (HUB_SESSION, 0)


def hub_corpus() -> Corpus:
    """One session where popularity and relevance disagree.

    The gold turn is the only one touching the keeper entity, whose
    description matches the query. Eight junk hub entities each mention
    every distractor turn, so with uniform weights sheer degree pushes
    the distractors above the gold turn; query-conditioned weights
    starve the hub mentions instead.
    """
    turns = (
        Turn(HUB_SESSION, 0, "user", "the keeper repainted the brass fittings this spring."),
        Turn(HUB_SESSION, 1, "friend", "the crew swapped shift schedules again."),
        Turn(HUB_SESSION, 2, "user", "the crew restocked supplies at the dock."),
        Turn(HUB_SESSION, 3, "friend", "the crew logged the weather readings."),
    )
    question = Question(
        question_id="hub-q0",
        query=HUB_QUERY,
        reference_answer="the keeper maintains the lantern room",
        gold_turns=(HUB_GOLD_TURN,),
        gold_sessions=(HUB_SESSION,),
        category="hub",
    )
    conversation = Conversation(
        conversation_id="hubconv",
        sessions=(SessionRecord(session_id=HUB_SESSION, turns=turns, date="2025-04-01"),),
    )
    return Corpus(name="hub", conversations=(conversation,), questions=(question,))


def hub_provider() -> MockChatProvider:
    provider = MockChatProvider()
    provider.respond("segmentation", "[[0, 1, 2, 3]]", contains="keeper repainted")
    provider.respond("selective_filter", "[0, 1, 2, 3]", contains="keeper repainted")
    provider.respond(
        "segment_summary",
        "Notes about the lantern room upkeep and the harbor crew.",
        contains="keeper repainted",
    )
    # the lantern room entity closes a strong triangle at the gold turn
    # and the dock ledger pair closes mild triangles at the distractor
    # turns, so neither region trades mass through the keeper alone
    triplet_lines = ["keeper|maintains the lantern room at|lanternroom|0"]
    entity_lines = [
        "keeper|keeper who maintains the lantern room|0",
        "lanternroom|the lantern room by the tower stairs|0",
        "dockhand|notes from the dock ledger|1,2,3",
        "tidechart|tide tables kept with the dock ledger|1,2,3",
    ]
    triplet_lines.append("dockhand|keeps the dock ledger beside|tidechart|1,2,3")
    for j in range(HUB_COUNT):
        # relation text carries query vocabulary so the hub's strongest
        # outgoing edge points back toward the keeper under dynamic weights
        triplet_lines.append(
            f"keeper|tends the lantern room alongside|crewalpha{j}|{(j % 3) + 1}"
        )
        entity_lines.append(f"crewalpha{j}|harbor roster notes for shift {j}|1,2,3")
    provider.respond("triplet_extraction", "\n".join(triplet_lines), contains="keeper repainted")
    provider.respond("entity_description", "\n".join(entity_lines), contains="keeper repainted")
    provider.respond("answer_generation", "the keeper maintains the lantern room.")
    provider.respond("judge", "[[yes]]")
    return provider


def hub_gateway() -> LlmGateway:
    return LlmGateway(hub_provider())


# --- selective-filter fixture ---


def filtering_corpus() -> Corpus:
    """Two sessions full of low-value chatter around a few real facts."""
    sessions = []
    questions = []
    for s in range(2):
        session_id = f"chat{s:02d}"
        person, verb, obj = planted_fact(45 + s)
        turns = (
            Turn(session_id, 0, "user", "hey, are you around later today?"),
            Turn(session_id, 1, "friend", "sure, give me an hour or so."),
            Turn(session_id, 2, "user", f"{person} likes to {verb} {obj} pieces these days."),
            Turn(session_id, 3, "friend", "nice. also, did you see the rain outside?"),
            Turn(session_id, 4, "user", "yeah, it has not stopped all morning."),
            Turn(session_id, 5, "friend", f"the {obj} pieces {person} keeps are quite rare."),
        )
        questions.append(
            Question(
                question_id=f"chatq{s}",
                query=f"which pieces does {person} like to {verb}?",
                reference_answer=f"{obj} pieces",
                gold_turns=((session_id, 2), (session_id, 5)),
                gold_sessions=(session_id,),
            )
        )
        sessions.append(SessionRecord(session_id=session_id, turns=turns))
    conversation = Conversation(conversation_id="chatconv", sessions=tuple(sessions))
    return Corpus(name="chatter", conversations=(conversation,), questions=tuple(questions))


def filtering_provider() -> MockChatProvider:
    provider = MockChatProvider()
    for s in range(2):
        person, verb, obj = planted_fact(45 + s)
        tag = f"{person} "
        provider.respond("segmentation", "[[0, 1, 2], [3, 4, 5]]", contains=tag)
        provider.respond("selective_filter", ["[2]", "[2]"], contains=tag)
        provider.respond(
            "segment_summary",
            [
                f"Plans to meet, and {person} now likes to {verb} {obj} pieces.",
                f"Rain chatter; the {obj} pieces {person} keeps are rare.",
            ],
            contains=tag,
        )
        provider.respond("triplet_extraction", f"{person}|likes to {verb}|{obj}|0", contains=tag)
        provider.respond(
            "entity_description",
            f"{person}|{person} likes to {verb} {obj} pieces|0\n"
            f"{obj}|{obj} pieces {person} likes to {verb}|0",
            contains=tag,
        )
    return provider


def filtering_gateway() -> LlmGateway:
    return LlmGateway(filtering_provider())


# --- synthetic big graph ---

BIG_QUERY = "which pieces does resident99 like to hoard"


def build_big_store(embedder, n_segments: int = 400, turns_per: int = 12,
                    entities_per: int = 12) -> GraphStore:
    """A 10k-node graph built directly against the store.

    Segment 0 carries a planted fact reachable from the query tokens;
    every other segment is filler with its own private vocabulary.
    """
    store = GraphStore(embedder)
    with store.transaction() as graph:
        embed = store.embed
        for s in range(n_segments):
            session_id = f"big{s:04d}"
            segment_id = f"{session_id}:seg0"
            if s == 0:
                summary = "resident99 talked about the artifact99 pieces they like to hoard."
            else:
                summary = f"filler chat number {s} about topic{s} affairs."
            member = tuple(range(turns_per))
            graph.add_segment(
                SegmentRecord(
                    segment_id=segment_id,
                    session_id=session_id,
                    member_turns=member,
                    retained_turns=frozenset(member),
                    summary=summary,
                    embedding=embed(summary),
                )
            )
            for t in range(turns_per):
                if s == 0 and t == 0:
                    text = "resident99 likes to hoard artifact99 pieces and showed me one."
                else:
                    text = f"segment {s} filler message {t} about topic{s} things."
                graph.add_turn(
                    Turn(session_id, t, "user" if t % 2 == 0 else "friend", text,
                         segment_id=segment_id, embedding=embed(text))
                )
            names = []
            for e in range(entities_per):
                if s == 0 and e == 0:
                    name, desc = "resident99", "resident99 likes to hoard artifact99 pieces"
                elif s == 0 and e == 1:
                    name, desc = "artifact99", "artifact99 pieces resident99 likes to hoard"
                else:
                    name = f"widget{s:04d}x{e}"
                    desc = f"{name} gadget from topic{s} supply batch {e}"
                names.append(name)
                graph.upsert_entity(
                    name, desc, [(session_id, e % turns_per), (session_id, (e + 1) % turns_per)],
                    embed,
                )
            for e in range(entities_per - 1):
                graph.add_relation_edge(
                    names[e], "paired with", names[e + 1],
                    [(session_id, e % turns_per)], embed,
                )
    return store


BIG_GOLD_TURN = ("big0000", 0)
