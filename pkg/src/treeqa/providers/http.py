"""Remote chat-completion backend over HTTP.

Wire protocol: POST {endpoint_url} with a chat-completion request body
{model, messages, temperature, logprobs, top_logprobs}; the response must
expose the first generated token's top log-probabilities when logprobs are
requested. The API key is read from an environment variable, never from
configuration files.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Any

import httpx

from ..errors import MalformedResponseError, RateLimitedError, TransportError
from .base import CompletionRequest, CompletionResult

log = logging.getLogger(__name__)


class TokenBucket:
    """Thread-safe request budget shared by every backend on one endpoint."""

    def __init__(self, rate_per_s: float, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate_per_s
        self.capacity = max(rate_per_s, 1.0)
        self.tokens = self.capacity
        self.updated = clock()
        self.clock = clock
        self.sleep = sleep
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


_BUCKETS: dict[tuple[str, float], TokenBucket] = {}
_BUCKETS_LOCK = threading.Lock()


def _bucket_for(endpoint_url: str, rate_per_s: float) -> TokenBucket:
    key = (endpoint_url, rate_per_s)
    with _BUCKETS_LOCK:
        if key not in _BUCKETS:
            _BUCKETS[key] = TokenBucket(rate_per_s)
        return _BUCKETS[key]


class HttpChatBackend:
    def __init__(
        self,
        endpoint_url: str,
        model_id: str,
        api_key_env: str | None = None,
        temperature: float = 0.0,
        top_logprobs: int = 8,
        timeout_s: float = 60.0,
        requests_per_second: float | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint_url = endpoint_url
        self.model_id = model_id
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.top_logprobs = top_logprobs
        self._bucket = (
            _bucket_for(endpoint_url, requests_per_second)
            if requests_per_second
            else None
        )
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, request: CompletionRequest) -> dict[str, Any]:
        content: Any
        if request.attachments:
            content = [{"type": "text", "text": request.prompt}]
            content.extend(
                {"type": "image_url", "image_url": {"url": ref}}
                for ref in request.attachments
            )
        else:
            content = request.prompt
        payload: dict[str, Any] = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.temperature,
        }
        if request.want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = self.top_logprobs
        return payload

    def raw_complete(self, request: CompletionRequest) -> CompletionResult:
        if self._bucket is not None:
            self._bucket.acquire()
        try:
            response = self._client.post(
                self.endpoint_url, json=self._payload(request), headers=self._headers()
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {self.endpoint_url} failed: {exc}") from exc
        if response.status_code == 429:
            raise RateLimitedError(f"rate limited by {self.endpoint_url}")
        if response.status_code >= 500:
            raise TransportError(
                f"{self.endpoint_url} returned {response.status_code}"
            )
        if response.status_code != 200:
            raise MalformedResponseError(
                f"{self.endpoint_url} returned {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponseError("response body is not JSON") from exc
        return _parse_chat_completion(body, request.want_logprobs)


def _parse_chat_completion(body: Any, want_logprobs: bool) -> CompletionResult:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(f"unexpected chat-completion shape: {exc}") from exc
    if not isinstance(text, str):
        raise MalformedResponseError("completion content is not a string")

    token_logprobs: dict[str, float] | None = None
    if want_logprobs:
        token_logprobs = _first_token_logprobs(choice)
        if token_logprobs is None:
            log.debug("logprobs requested but absent from response")
    return CompletionResult(text=text, token_logprobs=token_logprobs)


def _first_token_logprobs(choice: Any) -> dict[str, float] | None:
    logprobs = choice.get("logprobs")
    if not logprobs:
        return None
    content = logprobs.get("content")
    if not content:
        return None
    first = content[0]
    out: dict[str, float] = {}
    for item in first.get("top_logprobs", []):
        if "token" in item and "logprob" in item:
            out[str(item["token"])] = float(item["logprob"])
    if "token" in first and "logprob" in first:
        out.setdefault(str(first["token"]), float(first["logprob"]))
    return out or None
