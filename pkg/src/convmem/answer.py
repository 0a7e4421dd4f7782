"""Answer generation over retrieved evidence.

Turns an evidence bundle into a prompt context block, asks the chat
model for an answer, and optionally scores a response against a
reference with the yes/no judge.
"""

from __future__ import annotations

import logging

from .gateway import LlmGateway
from .model import EvidenceBundle, format_turn_refs

logger = logging.getLogger(__name__)


def compose_context(bundle: EvidenceBundle) -> str:
    """Render ranked turns and supporting facts as prompt context.

    Turns appear in rank order as "[session | timestamp | speaker]: text";
    the facts block is omitted when the bundle carries no triplets. An
    empty bundle renders as the empty string.
    """
    sections: list[str] = []
    if bundle.ranked_turns:
        lines = ["Conversation excerpts:"]
        for turn, _ in bundle.ranked_turns:
            if turn.timestamp:
                prefix = f"[{turn.session_id} | {turn.timestamp} | {turn.speaker}]"
            else:
                prefix = f"[{turn.session_id} | {turn.speaker}]"
            lines.append(f"{prefix}: {turn.text}")
        sections.append("\n".join(lines))
    if bundle.triplets:
        lines = ["Known facts:"]
        for edge in bundle.triplets:
            subject = bundle.entity_names.get(edge.subject, edge.subject)
            obj = bundle.entity_names.get(edge.object, edge.object)
            refs = format_turn_refs(sorted(edge.source_turns))
            lines.append(f"{subject} | {edge.relation} | {obj} (turns: {refs})")
        sections.append("\n".join(lines))
    return "\n\n".join(sections)


class AnswerComposer:
    """Produces grounded answers and judge verdicts via the gateway."""

    def __init__(self, gateway: LlmGateway) -> None:
        self._gateway = gateway

    def answer(self, bundle: EvidenceBundle, *, session_id: str | None = None) -> str:
        """Answer the bundle's query from its evidence, deterministically."""
        prompt = self._gateway.render(
            "answer_generation",
            context=compose_context(bundle),
            query=bundle.query_text,
        )
        result = self._gateway.complete(prompt, temperature=0.0, session_id=session_id)
        return result.text.strip()

    def judge(
        self,
        question: str,
        reference: str,
        response: str,
        *,
        session_id: str | None = None,
    ) -> bool:
        """True when the judge marks the response correct ([[yes]])."""
        prompt = self._gateway.render(
            "judge",
            question=question,
            answer=reference,
            response=response,
        )
        result = self._gateway.complete(prompt, temperature=0.0, session_id=session_id)
        return self._gateway.parse_judge_verdict(result.text)
