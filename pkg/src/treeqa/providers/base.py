"""Provider abstraction: roles, transcripts, retries, caching, binary scoring.

A *backend* turns one completion request into one completion result (remote
HTTP endpoint, scripted stub, or world-driven oracle). The *hub* owns the
backends, the prompt templates, the response cache, and the retry policy.
Each evaluated task opens its own *session*, which records an append-only
transcript of every call for auditability.
"""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

from ..errors import (
    MalformedResponseError,
    MissingBackendError,
    MissingLogprobsError,
    ProviderError,
    RateLimitedError,
    TransportError,
)
from ..prompts import REGISTRY, PromptTemplate, ProviderRole, get_template
from .cache import CacheIOError, ResponseCache, cache_key

log = logging.getLogger(__name__)

RETRYABLE = (TransportError, RateLimitedError, MalformedResponseError)


@dataclass(frozen=True)
class CompletionRequest:
    role: ProviderRole
    template: str
    prompt: str
    args: Mapping[str, Any]
    attachments: tuple[str, ...] = ()
    want_logprobs: bool = False


@dataclass(frozen=True)
class CompletionResult:
    text: str
    # Log-probabilities of the first generated token, when the backend exposes them.
    token_logprobs: Mapping[str, float] | None = None


class ProviderBackend(Protocol):
    model_id: str

    def raw_complete(self, request: CompletionRequest) -> CompletionResult: ...


@dataclass
class TranscriptEntry:
    role: ProviderRole
    template: str
    prompt: str
    attachments: tuple[str, ...]
    response_text: str
    token_distribution: dict[str, float] | None
    cache_hit: bool
    latency_ms: float
    retry_count: int
    flags: list[str] = field(default_factory=list)


class ProviderTranscript:
    """Append-only record of every provider call issued for one task."""

    def __init__(self) -> None:
        self._entries: list[TranscriptEntry] = []

    def append(self, entry: TranscriptEntry) -> None:
        self._entries.append(entry)

    @property
    def entries(self) -> Sequence[TranscriptEntry]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def count_by_role(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in self._entries:
            counts[entry.role.value] = counts.get(entry.role.value, 0) + 1
        return counts


def _distribution(result: CompletionResult) -> dict[str, float] | None:
    if result.token_logprobs is None:
        return None
    # Probabilities stay in [0, 1] even if a backend hands out a positive logprob.
    return {tok: min(1.0, math.exp(lp)) for tok, lp in result.token_logprobs.items()}


class ProviderHub:
    """Shared, thread-safe front door to all model backends."""

    def __init__(
        self,
        backends: Mapping[ProviderRole, ProviderBackend],
        cache: ResponseCache | None = None,
        retries: int = 2,
        backoff_base_s: float = 0.25,
        templates: Mapping[str, PromptTemplate] | None = None,
    ):
        self.backends = dict(backends)
        self.cache = cache
        self.retries = retries
        self.backoff_base_s = backoff_base_s
        self.templates = dict(templates or REGISTRY)

    def backend_for(self, role: ProviderRole) -> ProviderBackend:
        try:
            return self.backends[role]
        except KeyError:
            raise MissingBackendError(f"no backend configured for role '{role.value}'") from None

    def session(self) -> "ProviderSession":
        return ProviderSession(self)


class ProviderSession:
    """Per-task call context; not shared across threads."""

    def __init__(self, hub: ProviderHub):
        self.hub = hub
        self.transcript = ProviderTranscript()
        self.backend_calls = 0  # actual backend invocations, i.e. cache misses

    # -- core call ---------------------------------------------------------

    def complete(
        self,
        template: str,
        *,
        attachments: Sequence[str] = (),
        want_logprobs: bool = False,
        use_cache: bool = True,
        **args: Any,
    ) -> CompletionResult:
        """Render the template, call its role's backend with retries, record the call.

        Raises ProviderError subclasses after the retry budget is exhausted; the
        failed call is still appended to the transcript.
        """
        tpl = self.hub.templates.get(template) or get_template(template)
        prompt = tpl.render(**args)
        request = CompletionRequest(
            role=tpl.role,
            template=tpl.name,
            prompt=prompt,
            args=args,
            attachments=tuple(attachments),
            want_logprobs=want_logprobs,
        )
        backend = self.hub.backend_for(tpl.role)

        flags: list[str] = []
        key = None
        if self.hub.cache is not None and use_cache:
            key = cache_key(tpl.role.value, prompt, request.attachments, backend.model_id)
            try:
                cached = self.hub.cache.lookup(key)
            except CacheIOError as exc:
                log.warning("cache lookup degraded to miss: %s", exc)
                flags.append("cache_io_error")
                cached = None
            if cached is not None:
                result = CompletionResult(
                    text=cached["text"],
                    token_logprobs=cached.get("token_logprobs"),
                )
                self._record(request, result, cache_hit=True, latency_ms=0.0,
                             retry_count=0, flags=flags)
                return result

        retry_count = 0
        start = time.perf_counter()
        while True:
            try:
                result = backend.raw_complete(request)
                if not result.text.strip():
                    raise MalformedResponseError("backend returned an empty completion")
                break
            except RETRYABLE as exc:
                if retry_count >= self.hub.retries:
                    elapsed = (time.perf_counter() - start) * 1000.0
                    flags.append(f"failed:{type(exc).__name__}")
                    self._record(
                        request,
                        CompletionResult(text=""),
                        cache_hit=False,
                        latency_ms=elapsed,
                        retry_count=retry_count,
                        flags=flags,
                    )
                    raise
                retry_count += 1
                self._backoff(retry_count)
        elapsed = (time.perf_counter() - start) * 1000.0
        self.backend_calls += 1

        if key is not None:
            entry = {"text": result.text}
            if result.token_logprobs is not None:
                entry["token_logprobs"] = dict(result.token_logprobs)
            try:
                self.hub.cache.store(key, entry)
            except CacheIOError as exc:
                log.warning("cache store failed: %s", exc)
                flags.append("cache_io_error")

        self._record(request, result, cache_hit=False, latency_ms=elapsed,
                     retry_count=retry_count, flags=flags)
        return result

    def _backoff(self, attempt: int) -> None:
        base = self.hub.backoff_base_s
        if base <= 0:
            return
        delay = base * (2 ** (attempt - 1)) * (1.0 + 0.25 * random.random())
        time.sleep(delay)

    def _record(
        self,
        request: CompletionRequest,
        result: CompletionResult,
        *,
        cache_hit: bool,
        latency_ms: float,
        retry_count: int,
        flags: list[str],
    ) -> None:
        self.transcript.append(
            TranscriptEntry(
                role=request.role,
                template=request.template,
                prompt=request.prompt,
                attachments=request.attachments,
                response_text=result.text,
                token_distribution=_distribution(result),
                cache_hit=cache_hit,
                latency_ms=latency_ms,
                retry_count=retry_count,
                flags=flags,
            )
        )

    def flag_last(self, flag: str) -> None:
        if self.transcript.entries:
            self.transcript.entries[-1].flags.append(flag)

    # -- binary confidence scoring ------------------------------------------

    def score_binary(
        self,
        template: str,
        *,
        attachments: Sequence[str] = (),
        positive_token: str = "True",
        negative_token: str = "False",
        allow_text_fallback: bool = True,
        use_cache: bool = True,
        **args: Any,
    ) -> float:
        """Confidence in [0, 1] from the first-token probabilities of two answers.

        The two designated tokens' probabilities are renormalized against each
        other. Without log-probabilities the generated text is parsed instead and
        mapped to coarse constants (flagged as low fidelity).
        """
        result = self.complete(
            template,
            attachments=attachments,
            want_logprobs=True,
            use_cache=use_cache,
            **args,
        )
        if result.token_logprobs:
            p_pos = _token_probability(result.token_logprobs, positive_token)
            p_neg = _token_probability(result.token_logprobs, negative_token)
            if p_pos + p_neg > 0.0:
                return p_pos / (p_pos + p_neg)
        if not allow_text_fallback:
            raise MissingLogprobsError(
                f"no usable log-probabilities for tokens "
                f"'{positive_token}'/'{negative_token}'"
            )
        self.flag_last("low_fidelity_score")
        return _parse_textual_verdict(result.text, positive_token, negative_token)


def _token_probability(logprobs: Mapping[str, float], token: str) -> float:
    # Accept common surface variants of the designated token.
    candidates = {token, token.lower(), token.upper(), " " + token, token.capitalize()}
    best = None
    for tok, lp in logprobs.items():
        if tok.strip() in candidates or tok in candidates:
            if best is None or lp > best:
                best = lp
    return math.exp(best) if best is not None else 0.0


def _parse_textual_verdict(text: str, positive_token: str, negative_token: str) -> float:
    first = text.strip().split()
    head = first[0].strip(".,:;!").lower() if first else ""
    if head == positive_token.lower():
        return 0.75
    if head == negative_token.lower():
        return 0.25
    return 0.5


def provider_error(exc: Exception) -> ProviderError:
    """Wrap foreign exceptions so callers can catch one family."""
    if isinstance(exc, ProviderError):
        return exc
    return ProviderError(str(exc))
