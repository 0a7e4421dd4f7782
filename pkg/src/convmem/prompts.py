"""Prompt template registry and rendering."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .errors import InvalidInput

TEMPLATE_IDS = (
    "segmentation",
    "selective_filter",
    "segment_summary",
    "entity_description",
    "triplet_extraction",
    "answer_generation",
    "judge",
)

# Every placeholder any template may declare. Rendering checks that no
# marker from this vocabulary survives substitution.
PLACEHOLDERS = (
    "numbered_messages_str",
    "formatted_conv",
    "segment_content",
    "segment",
    "entity_list",
    "segment_text",
    "context",
    "query",
    "question",
    "answer",
    "response",
)

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


@dataclass(frozen=True)
class PromptInstance:
    """A rendered prompt, carrying its template id and bindings."""

    template_id: str
    rendered_text: str
    bindings: Mapping[str, str] = field(default_factory=dict)


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise InvalidInput(f"unknown template id: {template_id!r}")
    return (
        resources.files("convmem.templates").joinpath(f"{template_id}.txt").read_text("utf-8")
    )


@lru_cache(maxsize=None)
def template_placeholders(template_id: str) -> frozenset[str]:
    return frozenset(_PLACEHOLDER_RE.findall(load_template(template_id)))


def render_template(template_id: str, **bindings: str) -> PromptInstance:
    """Substitute placeholder bindings into a template.

    Raises InvalidInput when a binding is unknown to the template or a
    declared placeholder is left unbound.
    """
    template = load_template(template_id)
    expected = template_placeholders(template_id)
    provided = set(bindings)
    if provided - expected:
        raise InvalidInput(
            f"template {template_id!r} does not take placeholders {sorted(provided - expected)}"
        )
    if expected - provided:
        raise InvalidInput(
            f"template {template_id!r} is missing bindings for {sorted(expected - provided)}"
        )
    rendered = template
    for name, value in bindings.items():
        rendered = rendered.replace("{" + name + "}", str(value))
    leftover = _PLACEHOLDER_RE.findall(rendered)
    if leftover:
        raise InvalidInput(f"unbound placeholder markers remain: {sorted(set(leftover))}")
    return PromptInstance(template_id=template_id, rendered_text=rendered, bindings=dict(bindings))
