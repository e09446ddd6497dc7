"""Deterministic in-process backends for tests and offline pipeline runs."""

from __future__ import annotations

import math
from typing import Callable, Mapping

from ..prompts import ProviderRole
from .base import CompletionRequest, CompletionResult

Handler = Callable[[CompletionRequest], "CompletionResult | str"]


def binary_logprobs(p_true: float) -> dict[str, float]:
    """Log-probability pair for a True/False verdict with p(True) = p_true."""

    def _log(p: float) -> float:
        return math.log(p) if p > 0.0 else float("-inf")

    return {"True": _log(p_true), "False": _log(1.0 - p_true)}


def verdict(p_true: float) -> CompletionResult:
    text = "True" if p_true >= 0.5 else "False"
    return CompletionResult(text=text, token_logprobs=binary_logprobs(p_true))


class ScriptedBackend:
    """Backend that dispatches to per-role (or per-template) handler callables.

    Handlers may return a plain string (wrapped into a text-only result) or a
    full CompletionResult when token log-probabilities matter.
    """

    def __init__(
        self,
        handlers: Mapping[ProviderRole | str, Handler],
        model_id: str = "scripted",
    ):
        self.model_id = model_id
        self.handlers: dict[str, Handler] = {}
        for key, handler in handlers.items():
            name = key.value if isinstance(key, ProviderRole) else key
            self.handlers[name] = handler

    def raw_complete(self, request: CompletionRequest) -> CompletionResult:
        handler = self.handlers.get(request.template) or self.handlers.get(
            request.role.value
        )
        if handler is None:
            raise KeyError(
                f"scripted backend has no handler for template "
                f"'{request.template}' or role '{request.role.value}'"
            )
        out = handler(request)
        if isinstance(out, str):
            return CompletionResult(text=out)
        return out
