"""Structured-output parsers for model responses.

These are pure functions with a hard schema gate: decorated output is
tolerated (code fences, prose around the first balanced bracket
expression, stray lines in pipe formats), but anything that violates
the expected shape is rejected via StructuredOutputError rather than
repaired. ``kind`` distinguishes unparseable syntax ("malformed") from
syntactically valid output with the wrong shape ("schema").
"""

from __future__ import annotations

import json
import re
from typing import Iterable, Sequence

from .errors import InvalidInput, JudgeUnparseable, StructuredOutputError
from .model import RawEntityDescription, RawTriplet, normalize_name

_CODE_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*$")


def strip_code_fences(text: str) -> str:
    """Drop Markdown code-fence lines, keeping their contents."""
    lines = [line for line in text.splitlines() if not _CODE_FENCE_RE.match(line)]
    return "\n".join(lines)


def extract_bracket_payload(text: str) -> str:
    """Return the first balanced top-level ``[...]`` expression in text.

    String literals are honored while scanning so brackets inside quotes
    do not count. Raises StructuredOutputError("malformed") when no
    balanced expression exists.
    """
    start = text.find("[")
    if start < 0:
        raise StructuredOutputError("malformed", "no JSON array found in output")
    depth = 0
    in_string = False
    escaped = False
    for position in range(start, len(text)):
        char = text[position]
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
            continue
        if char == '"':
            in_string = True
        elif char == "[":
            depth += 1
        elif char == "]":
            depth -= 1
            if depth == 0:
                return text[start : position + 1]
    raise StructuredOutputError("malformed", "unbalanced brackets in output")


def _load_json_array(text: str):
    payload = extract_bracket_payload(strip_code_fences(text))
    try:
        return json.loads(payload)
    except ValueError as exc:
        raise StructuredOutputError("malformed", f"invalid JSON: {exc}") from exc


def _require_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise StructuredOutputError("schema", f"{what} must be an integer, got {value!r}")
    return value


def parse_segment_indices(text: str, n_messages: int) -> list[list[int]]:
    """Parse a topic-segmentation response into a partition of message indices.

    The result is a list of segments that together partition
    ``range(n_messages)``: inner lists non-empty, strictly ascending,
    pairwise disjoint, ordered by first element. Violations are not
    repaired.
    """
    if n_messages < 1:
        raise InvalidInput("n_messages must be at least 1")
    data = _load_json_array(text)
    if not isinstance(data, list) or not data:
        raise StructuredOutputError("schema", "expected a non-empty list of segments")
    segments: list[list[int]] = []
    seen: set[int] = set()
    for position, inner in enumerate(data):
        if not isinstance(inner, list) or not inner:
            raise StructuredOutputError("schema", f"segment {position} is not a non-empty list")
        indices = [_require_int(value, f"segment {position} index") for value in inner]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise StructuredOutputError(
                "schema", f"segment {position} indices are not strictly ascending"
            )
        if seen & set(indices):
            raise StructuredOutputError("schema", "segments overlap")
        seen.update(indices)
        segments.append(indices)
    if seen != set(range(n_messages)):
        raise StructuredOutputError(
            "schema", f"segments do not partition 0..{n_messages - 1}"
        )
    firsts = [segment[0] for segment in segments]
    if firsts != sorted(firsts):
        raise StructuredOutputError("schema", "segments are not in chronological order")
    return segments


def parse_index_array(text: str, n_messages: int) -> list[int]:
    """Parse a selective-filter response into a strictly ascending index list.

    An empty array is valid: it means no message was worth retaining.
    """
    if n_messages < 1:
        raise InvalidInput("n_messages must be at least 1")
    data = _load_json_array(text)
    if not isinstance(data, list):
        raise StructuredOutputError("schema", "expected a JSON array of indices")
    indices = [_require_int(value, "index") for value in data]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise StructuredOutputError("schema", "indices are not strictly ascending")
    if any(i < 0 or i >= n_messages for i in indices):
        raise StructuredOutputError("schema", f"index out of range 0..{n_messages - 1}")
    return indices


def _pipe_lines(text: str) -> list[str]:
    return [line.strip() for line in strip_code_fences(text).splitlines() if line.strip()]


def _parse_index_field(field: str) -> list[int] | None:
    indices = []
    for token in field.split(","):
        token = token.strip()
        if not token or not re.fullmatch(r"-?\d+", token):
            return None
        indices.append(int(token))
    return indices


def parse_pipe_triplets(text: str, valid_indices: Iterable[int]) -> list[RawTriplet]:
    """Parse ``entity1|relation|entity2|message_indices`` lines.

    Lines that do not match the four-field shape are dropped
    individually; provenance indices are clipped to ``valid_indices``
    and a triplet whose provenance clips to nothing is dropped. If the
    response is non-empty but not a single line parses, the whole
    output is rejected. An empty response means "no facts" and is valid.
    """
    valid = set(valid_indices)
    if not valid:
        raise InvalidInput("valid_indices must be non-empty")
    lines = _pipe_lines(text)
    if not lines:
        return []
    triplets: list[RawTriplet] = []
    parsed_any = False
    for line in lines:
        parts = [part.strip() for part in line.split("|")]
        if len(parts) != 4 or not all(parts[:3]):
            continue
        indices = _parse_index_field(parts[3])
        if indices is None:
            continue
        parsed_any = True
        kept = sorted(set(indices) & valid)
        if not kept:
            continue
        triplets.append(
            RawTriplet(subject=parts[0], relation=parts[1], object=parts[2], indices=tuple(kept))
        )
    if not parsed_any:
        raise StructuredOutputError("schema", "no line matched entity|relation|entity|indices")
    return triplets


def parse_entity_descriptions(
    text: str, expected_entities: Sequence[str], valid_indices: Iterable[int]
) -> list[RawEntityDescription]:
    """Parse ``entity | description | indices`` lines.

    Entities outside ``expected_entities`` are kept but flagged via
    ``expected=False``. Indices are filtered to ``valid_indices``; a
    line left without provenance is dropped.
    """
    if not expected_entities:
        raise InvalidInput("expected_entities must be non-empty")
    valid = set(valid_indices)
    if not valid:
        raise InvalidInput("valid_indices must be non-empty")
    expected_keys = set()
    for name in expected_entities:
        try:
            expected_keys.add(normalize_name(name))
        except InvalidInput:
            continue
    lines = _pipe_lines(text)
    if not lines:
        return []
    descriptions: list[RawEntityDescription] = []
    parsed_any = False
    for line in lines:
        parts = [part.strip() for part in line.split("|")]
        if len(parts) != 3 or not parts[0] or not parts[1]:
            continue
        indices = _parse_index_field(parts[2])
        if indices is None:
            continue
        parsed_any = True
        kept = sorted(set(indices) & valid)
        if not kept:
            continue
        try:
            known = normalize_name(parts[0]) in expected_keys
        except InvalidInput:
            continue
        descriptions.append(
            RawEntityDescription(
                entity=parts[0],
                description=parts[1],
                indices=tuple(kept),
                expected=known,
            )
        )
    if not parsed_any:
        raise StructuredOutputError("schema", "no line matched entity | description | indices")
    return descriptions


def parse_judge_verdict(text: str) -> bool:
    """Extract the [[yes]]/[[no]] verdict; first marker wins."""
    lowered = text.lower()
    yes_at = lowered.find("[[yes]]")
    no_at = lowered.find("[[no]]")
    if yes_at < 0 and no_at < 0:
        raise JudgeUnparseable("judge response contains neither [[yes]] nor [[no]]")
    if yes_at < 0:
        return False
    if no_at < 0:
        return True
    return yes_at < no_at
