"""LLM access layer: providers, retries, token and error accounting.

All pipeline calls go through ``LlmGateway`` so that token usage and
structured-output failures are tallied in one place. Parsers from
:mod:`convmem.parsing` stay pure; the gateway wraps them with
accounting (one attempt per call, one failure per raised gate error).
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

from . import parsing
from .errors import ProviderRejected, ProviderUnavailable, StructuredOutputError
from .model import RawEntityDescription, RawTriplet
from .prompts import PromptInstance, render_template

logger = logging.getLogger(__name__)

_GLOBAL_SESSION = "_global"


@dataclass(frozen=True)
class CompletionResult:
    """Text plus token usage for one completion call."""

    text: str
    input_tokens: int
    output_tokens: int


def _approx_tokens(text: str) -> int:
    return len(text.split())


class ChatProvider(Protocol):
    """Anything that can answer a rendered prompt."""

    def complete(self, prompt: PromptInstance, temperature: float) -> CompletionResult: ...


class NullChatProvider:
    """Placeholder used when no provider is configured; never retried."""

    def complete(self, prompt: PromptInstance, temperature: float) -> CompletionResult:
        raise ProviderUnavailable("no chat provider configured", retryable=False)


class MockChatProvider:
    """Table-driven provider for tests and offline runs.

    Rules are matched in registration order on template id plus an
    optional substring of the rendered prompt. Each rule holds a queue
    of responses; the last response repeats once the queue drains.
    """

    def __init__(self) -> None:
        self._rules: list[dict] = []
        self.calls: list[PromptInstance] = []

    def respond(
        self, template_id: str, text: str | Sequence[str], *, contains: str | None = None
    ) -> "MockChatProvider":
        queue = [text] if isinstance(text, str) else list(text)
        if not queue:
            raise ValueError("mock rule needs at least one response")
        self._rules.append({"template_id": template_id, "contains": contains, "queue": queue})
        return self

    def complete(self, prompt: PromptInstance, temperature: float) -> CompletionResult:
        self.calls.append(prompt)
        for rule in self._rules:
            if rule["template_id"] != prompt.template_id:
                continue
            if rule["contains"] is not None and rule["contains"] not in prompt.rendered_text:
                continue
            queue = rule["queue"]
            text = queue.pop(0) if len(queue) > 1 else queue[0]
            return CompletionResult(
                text=text,
                input_tokens=_approx_tokens(prompt.rendered_text),
                output_tokens=_approx_tokens(text),
            )
        raise LookupError(
            f"no mock response registered for template {prompt.template_id!r}"
        )


class FlakyChatProvider:
    """Fails a fixed number of times before delegating; for retry tests."""

    def __init__(self, inner: ChatProvider, failures: int) -> None:
        self._inner = inner
        self.failures_left = failures
        self.attempts = 0

    def complete(self, prompt: PromptInstance, temperature: float) -> CompletionResult:
        self.attempts += 1
        if self.failures_left > 0:
            self.failures_left -= 1
            raise ProviderUnavailable("simulated transport failure")
        return self._inner.complete(prompt, temperature)


class HttpChatProvider:
    """Client for an OpenAI-compatible /chat/completions endpoint."""

    def __init__(
        self,
        endpoint: str,
        *,
        model: str = "",
        api_key: str = "",
        timeout: float = 120.0,
    ) -> None:
        self._endpoint = endpoint.rstrip("/")
        self._model = model
        self._api_key = api_key
        self._timeout = timeout
        self._client = None

    def _http(self):
        if self._client is None:
            import httpx

            headers = {}
            if self._api_key:
                headers["Authorization"] = f"Bearer {self._api_key}"
            self._client = httpx.Client(
                base_url=self._endpoint, headers=headers, timeout=self._timeout
            )
        return self._client

    def complete(self, prompt: PromptInstance, temperature: float) -> CompletionResult:
        import httpx

        payload = {
            "model": self._model,
            "messages": [{"role": "user", "content": prompt.rendered_text}],
            "temperature": temperature,
        }
        try:
            response = self._http().post("/chat/completions", json=payload)
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"chat endpoint unreachable: {exc}") from exc
        if response.status_code >= 500:
            raise ProviderUnavailable(f"chat endpoint returned {response.status_code}")
        if response.status_code >= 400:
            raise ProviderRejected(
                f"chat endpoint rejected request: {response.status_code} {response.text[:200]}"
            )
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderRejected(f"malformed chat response: {exc}") from exc
        usage = body.get("usage") or {}
        return CompletionResult(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", _approx_tokens(prompt.rendered_text))),
            output_tokens=int(usage.get("completion_tokens", _approx_tokens(text))),
        )


@dataclass
class AccountingSnapshot:
    """Point-in-time view of the gateway counters."""

    completions: int
    input_tokens: int
    output_tokens: int
    structured_attempts: int
    structured_failures: int
    session_tokens: dict[str, tuple[int, int]]

    @property
    def error_rate(self) -> float:
        return self.structured_failures / max(self.structured_attempts, 1)


class LlmGateway:
    """Single entry point for completions and structured-output parsing."""

    def __init__(
        self,
        provider: ChatProvider | None = None,
        *,
        max_attempts: int = 3,
        retry_base_delay: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        self._provider = provider or NullChatProvider()
        self._max_attempts = max_attempts
        self._retry_base_delay = retry_base_delay
        self._sleep = sleep
        self._lock = threading.Lock()
        self._completions = 0
        self._input_tokens = 0
        self._output_tokens = 0
        self._structured_attempts = 0
        self._structured_failures = 0
        self._session_tokens: dict[str, list[int]] = {}

    # --- completions ---

    def render(self, template_id: str, **bindings: str) -> PromptInstance:
        return render_template(template_id, **bindings)

    def complete(
        self,
        prompt: PromptInstance,
        *,
        temperature: float = 0.0,
        session_id: str | None = None,
    ) -> CompletionResult:
        """Run one completion with retry on transient transport failures.

        Up to ``max_attempts`` tries with exponential backoff; provider
        rejections (error bodies) are never retried.
        """
        last_error: ProviderUnavailable | None = None
        for attempt in range(self._max_attempts):
            try:
                result = self._provider.complete(prompt, temperature)
            except ProviderUnavailable as exc:
                last_error = exc
                if not exc.retryable:
                    raise
                if attempt + 1 < self._max_attempts:
                    delay = self._retry_base_delay * (2**attempt)
                    logger.warning(
                        "provider unavailable (attempt %d/%d), retrying in %.2fs: %s",
                        attempt + 1,
                        self._max_attempts,
                        delay,
                        exc,
                    )
                    self._sleep(delay)
                continue
            self._record_completion(result, session_id)
            return result
        raise ProviderUnavailable(
            f"provider unavailable after {self._max_attempts} attempts: {last_error}"
        )

    def _record_completion(self, result: CompletionResult, session_id: str | None) -> None:
        key = session_id or _GLOBAL_SESSION
        with self._lock:
            self._completions += 1
            self._input_tokens += result.input_tokens
            self._output_tokens += result.output_tokens
            tally = self._session_tokens.setdefault(key, [0, 0])
            tally[0] += result.input_tokens
            tally[1] += result.output_tokens

    # --- counting parser wrappers ---

    def _count_parse(self, parse: Callable[[], object]):
        with self._lock:
            self._structured_attempts += 1
        try:
            return parse()
        except StructuredOutputError:
            with self._lock:
                self._structured_failures += 1
            raise

    def parse_segment_indices(self, text: str, n_messages: int) -> list[list[int]]:
        return self._count_parse(lambda: parsing.parse_segment_indices(text, n_messages))

    def parse_index_array(self, text: str, n_messages: int) -> list[int]:
        return self._count_parse(lambda: parsing.parse_index_array(text, n_messages))

    def parse_pipe_triplets(self, text: str, valid_indices: Iterable[int]) -> list[RawTriplet]:
        valid = list(valid_indices)
        return self._count_parse(lambda: parsing.parse_pipe_triplets(text, valid))

    def parse_entity_descriptions(
        self, text: str, expected_entities: Sequence[str], valid_indices: Iterable[int]
    ) -> list[RawEntityDescription]:
        valid = list(valid_indices)
        return self._count_parse(
            lambda: parsing.parse_entity_descriptions(text, expected_entities, valid)
        )

    def parse_judge_verdict(self, text: str) -> bool:
        return self._count_parse(lambda: parsing.parse_judge_verdict(text))

    # --- accounting ---

    def error_rate(self) -> float:
        with self._lock:
            return self._structured_failures / max(self._structured_attempts, 1)

    def accounting(self) -> AccountingSnapshot:
        with self._lock:
            return AccountingSnapshot(
                completions=self._completions,
                input_tokens=self._input_tokens,
                output_tokens=self._output_tokens,
                structured_attempts=self._structured_attempts,
                structured_failures=self._structured_failures,
                session_tokens={k: (v[0], v[1]) for k, v in self._session_tokens.items()},
            )

    @property
    def provider(self) -> ChatProvider:
        return self._provider

    @property
    def provider_kind(self) -> str:
        name = type(self._provider).__name__
        return {
            "NullChatProvider": "none",
            "MockChatProvider": "mock",
            "HttpChatProvider": "http",
        }.get(name, name)


def gateway_from_env(env: dict[str, str] | None = None, **kwargs) -> LlmGateway:
    """Build a gateway from CONVMEM_LLM_* environment configuration."""
    env = dict(os.environ if env is None else env)
    endpoint = env.get("CONVMEM_LLM_ENDPOINT", "")
    if not endpoint:
        return LlmGateway(NullChatProvider(), **kwargs)
    provider = HttpChatProvider(
        endpoint,
        model=env.get("CONVMEM_LLM_MODEL", ""),
        api_key=env.get("CONVMEM_LLM_API_KEY", ""),
    )
    return LlmGateway(provider, **kwargs)
