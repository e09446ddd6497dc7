import json
import math

import httpx
import pytest

from treeqa.errors import MalformedResponseError, RateLimitedError, TransportError
from treeqa.prompts import ProviderRole
from treeqa.providers import CompletionRequest, ProviderHub
from treeqa.providers.http import HttpChatBackend, TokenBucket

URL = "http://model.internal/v1/chat/completions"

PROBE = CompletionRequest(
    role=ProviderRole.FACT_EXTRACTOR,
    template="fact_extraction",
    prompt="probe",
    args={},
)


def chat_body(text, logprob_pairs=None):
    choice = {"message": {"role": "assistant", "content": text}}
    if logprob_pairs is not None:
        choice["logprobs"] = {
            "content": [
                {
                    "token": logprob_pairs[0][0],
                    "logprob": logprob_pairs[0][1],
                    "top_logprobs": [
                        {"token": tok, "logprob": lp} for tok, lp in logprob_pairs
                    ],
                }
            ]
        }
    return {"choices": [choice]}


def backend_with(responder, **kwargs):
    return HttpChatBackend(
        URL, model_id="test-model", transport=httpx.MockTransport(responder), **kwargs
    )


def hub_for(backend):
    return ProviderHub({role: backend for role in ProviderRole},
                       retries=2, backoff_base_s=0.0)


def test_rate_limited_twice_then_success():
    calls = {"n": 0}

    def responder(request):
        calls["n"] += 1
        if calls["n"] <= 2:
            return httpx.Response(429)
        return httpx.Response(200, json=chat_body("fine"))

    session = hub_for(backend_with(responder)).session()
    result = session.complete("fact_extraction", question="q")
    assert result.text == "fine"
    assert session.transcript.entries[-1].retry_count == 2


def test_endpoint_down_raises_transport_error():
    def responder(request):
        raise httpx.ConnectError("refused")

    session = hub_for(backend_with(responder)).session()
    with pytest.raises(TransportError):
        session.complete("fact_extraction", question="q")


def test_server_error_is_retryable_transport_error():
    def responder(request):
        return httpx.Response(503)

    backend = backend_with(responder)
    with pytest.raises(TransportError):
        backend.raw_complete(PROBE)


def test_429_maps_to_rate_limited():
    backend = backend_with(lambda request: httpx.Response(429))
    with pytest.raises(RateLimitedError):
        backend.raw_complete(PROBE)


def test_malformed_body():
    backend = backend_with(lambda request: httpx.Response(200, text="not json"))
    with pytest.raises(MalformedResponseError):
        backend.raw_complete(PROBE)


def test_logprobs_parsed_and_scored():
    pairs = [("True", math.log(0.8)), ("False", math.log(0.2))]

    def responder(request):
        payload = json.loads(request.content)
        assert payload["logprobs"] is True
        assert payload["top_logprobs"] >= 2
        return httpx.Response(200, json=chat_body("True", pairs))

    session = hub_for(backend_with(responder)).session()
    score = session.score_binary("verification", statement="s")
    assert score == pytest.approx(0.8)


def test_attachments_become_image_parts_and_auth_header(monkeypatch):
    monkeypatch.setenv("PROVER_KEY", "sekrit")
    seen = {}

    def responder(request):
        seen["payload"] = json.loads(request.content)
        seen["auth"] = request.headers.get("Authorization")
        return httpx.Response(200, json=chat_body("True"))

    backend = backend_with(responder, api_key_env="PROVER_KEY")
    session = hub_for(backend).session()
    session.complete("verification", attachments=["frame-1", "frame-2"], statement="s")
    content = seen["payload"]["messages"][0]["content"]
    images = [part for part in content if part.get("type") == "image_url"]
    assert [img["image_url"]["url"] for img in images] == ["frame-1", "frame-2"]
    assert seen["auth"] == "Bearer sekrit"


def test_token_bucket_spaces_requests():
    clock = {"t": 0.0}
    sleeps = []

    def fake_clock():
        return clock["t"]

    def fake_sleep(seconds):
        sleeps.append(seconds)
        clock["t"] += seconds

    bucket = TokenBucket(2.0, clock=fake_clock, sleep=fake_sleep)
    for _ in range(5):
        bucket.acquire()
    # Capacity 2 covers the first two; the rest wait half a second each.
    assert len(sleeps) == 3
    assert all(s == pytest.approx(0.5) for s in sleeps)
