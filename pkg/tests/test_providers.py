import math

import pytest

from treeqa.errors import (
    MissingBackendError,
    MissingLogprobsError,
    RateLimitedError,
    TransportError,
)
from treeqa.prompts import ProviderRole, get_template
from treeqa.providers import (
    CompletionResult,
    ProviderHub,
    ResponseCache,
    ScriptedBackend,
    binary_logprobs,
    cache_key,
)


def echo_backend():
    return ScriptedBackend(
        {role: (lambda req: f"echo:{req.args.get('question', req.prompt[:20])}")
         for role in ProviderRole}
    )


def hub_with(backend, **kwargs):
    return ProviderHub({role: backend for role in ProviderRole},
                       backoff_base_s=0.0, **kwargs)


class FlakyBackend:
    """Fails with the configured errors before succeeding."""

    model_id = "flaky"

    def __init__(self, failures):
        self.failures = list(failures)
        self.calls = 0

    def raw_complete(self, request):
        self.calls += 1
        if self.failures:
            raise self.failures.pop(0)
        return CompletionResult(text="recovered")


def test_template_render_requires_all_placeholders():
    template = get_template("fact_extraction")
    with pytest.raises(KeyError):
        template.render()
    rendered = template.render(question="Why is the sky blue?")
    assert "Why is the sky blue?" in rendered


def test_complete_echo_deterministic():
    hub = hub_with(echo_backend())
    session = hub.session()
    first = session.complete("fact_extraction", question="What happened?")
    second = session.complete("fact_extraction", question="What happened?")
    assert first.text == second.text == "echo:What happened?"
    assert len(session.transcript) == 2
    assert all(e.role is ProviderRole.FACT_EXTRACTOR for e in session.transcript)


def test_retry_then_success():
    backend = FlakyBackend([RateLimitedError("busy"), RateLimitedError("busy")])
    hub = hub_with(backend, retries=2)
    session = hub.session()
    result = session.complete("fact_extraction", question="q")
    assert result.text == "recovered"
    assert backend.calls == 3
    assert session.transcript.entries[-1].retry_count == 2


def test_transport_error_after_retries():
    backend = FlakyBackend([TransportError("down")] * 10)
    hub = hub_with(backend, retries=2)
    session = hub.session()
    with pytest.raises(TransportError):
        session.complete("fact_extraction", question="q")
    # The failed call is still on the transcript, flagged.
    entry = session.transcript.entries[-1]
    assert entry.response_text == ""
    assert any(f.startswith("failed:") for f in entry.flags)


def test_missing_backend():
    hub = ProviderHub({})
    with pytest.raises(MissingBackendError):
        hub.session().complete("fact_extraction", question="q")


# -- score_binary -------------------------------------------------------------


def prover_hub(p_true=None, text="maybe", logprobs=None):
    def handler(request):
        if logprobs is not None:
            return CompletionResult(text=text, token_logprobs=logprobs)
        if p_true is None:
            return CompletionResult(text=text)
        return CompletionResult(text=text, token_logprobs=binary_logprobs(p_true))

    backend = ScriptedBackend({ProviderRole.PROVER: handler})
    return ProviderHub({ProviderRole.PROVER: backend}, backoff_base_s=0.0)


def test_score_binary_equal_logits():
    session = prover_hub(p_true=0.5).session()
    assert session.score_binary("verification", statement="s") == 0.5


def test_score_binary_point_nine():
    session = prover_hub(p_true=0.9).session()
    assert session.score_binary("verification", statement="s") == pytest.approx(0.9)


def test_score_binary_softmax_spot_check():
    # Two raw logits (2.0, 0.0) softmax to e^2/(e^2+1).
    logprobs = {
        "True": math.log(math.exp(2.0) / (math.exp(2.0) + 1.0)),
        "False": math.log(1.0 / (math.exp(2.0) + 1.0)),
    }
    session = prover_hub(logprobs=logprobs).session()
    score = session.score_binary("verification", statement="s")
    assert score == pytest.approx(0.8808, abs=1e-4)


def test_score_binary_complement_symmetry():
    for p in (0.0, 0.13, 0.5, 0.77, 1.0):
        session = prover_hub(p_true=p).session()
        forward = session.score_binary("verification", statement="s")
        backward = session.score_binary(
            "verification", statement="s",
            positive_token="False", negative_token="True",
        )
        assert forward + backward == pytest.approx(1.0, abs=1e-12)


def test_score_binary_one_sided_logprobs():
    session = prover_hub(logprobs={"True": math.log(0.4)}).session()
    assert session.score_binary("verification", statement="s") == 1.0


@pytest.mark.parametrize(
    "text,expected", [("True", 0.75), ("False.", 0.25), ("unclear", 0.5)]
)
def test_score_binary_text_fallback(text, expected):
    session = prover_hub(text=text).session()
    score = session.score_binary("verification", statement="s")
    assert score == expected
    assert "low_fidelity_score" in session.transcript.entries[-1].flags


def test_score_binary_fallback_disabled():
    session = prover_hub(text="True").session()
    with pytest.raises(MissingLogprobsError):
        session.score_binary("verification", statement="s", allow_text_fallback=False)


# -- cache ---------------------------------------------------------------------


def test_cache_hit_identical_and_no_backend_call(tmp_path):
    cache = ResponseCache(tmp_path)
    hub = hub_with(echo_backend(), cache=cache)
    first_session = hub.session()
    first = first_session.complete("fact_extraction", question="q1")
    assert first_session.backend_calls == 1

    second_session = hub.session()
    second = second_session.complete("fact_extraction", question="q1")
    assert second.text == first.text
    assert second_session.backend_calls == 0
    assert second_session.transcript.entries[-1].cache_hit is True


def test_cache_key_changes_with_prompt(tmp_path):
    key1 = cache_key("captioner", "prompt with fact A", ("f1",), "m")
    key2 = cache_key("captioner", "prompt with fact B", ("f1",), "m")
    key3 = cache_key("captioner", "prompt with fact A", ("f2",), "m")
    assert len({key1, key2, key3}) == 3


def test_cache_corrupted_entry_refetches(tmp_path):
    cache = ResponseCache(tmp_path)
    hub = hub_with(echo_backend(), cache=cache)
    session = hub.session()
    session.complete("fact_extraction", question="q1")
    (corrupted,) = [p for p in tmp_path.iterdir() if not p.name.startswith(".")]
    corrupted.write_text("{broken", encoding="utf-8")

    retry = hub.session()
    result = retry.complete("fact_extraction", question="q1")
    assert result.text == "echo:q1"
    assert retry.backend_calls == 1


def test_cache_store_idempotent(tmp_path):
    cache = ResponseCache(tmp_path)
    key = cache_key("prover", "p", (), "m")
    cache.store(key, {"text": "x"})
    cache.store(key, {"text": "x"})
    assert cache.lookup(key) == {"text": "x"}


def test_transcript_counts_by_role():
    hub = hub_with(echo_backend())
    session = hub.session()
    session.complete("fact_extraction", question="q")
    session.complete("navigation", question="q", question_type="Temporal")
    session.complete("navigation", question="q2", question_type="Causal")
    counts = session.transcript.count_by_role()
    assert counts == {"fact_extractor": 1, "navigator": 2}
