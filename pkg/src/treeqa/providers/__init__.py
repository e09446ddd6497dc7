from ..prompts import ProviderRole
from .base import (
    CompletionRequest,
    CompletionResult,
    ProviderBackend,
    ProviderHub,
    ProviderSession,
    ProviderTranscript,
    TranscriptEntry,
)
from .cache import ResponseCache, cache_key
from .http import HttpChatBackend, TokenBucket
from .scripted import ScriptedBackend, binary_logprobs, verdict

__all__ = [
    "CompletionRequest",
    "CompletionResult",
    "HttpChatBackend",
    "ProviderBackend",
    "ProviderHub",
    "ProviderRole",
    "ProviderSession",
    "ProviderTranscript",
    "ResponseCache",
    "ScriptedBackend",
    "TokenBucket",
    "TranscriptEntry",
    "binary_logprobs",
    "cache_key",
    "verdict",
]
