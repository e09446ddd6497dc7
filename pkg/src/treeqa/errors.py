"""Exception hierarchy shared across the package."""


class TreeQAError(Exception):
    """Base class for all package errors."""


class ConfigError(TreeQAError):
    """Invalid run configuration or config file."""


class SchemaError(TreeQAError):
    """Dataset record violates the canonical schema."""

    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or []


class DuplicateIdError(SchemaError):
    """Two records in one dataset share a task id."""


class ProviderError(TreeQAError):
    """Base class for model-provider failures."""


class TransportError(ProviderError):
    """Endpoint unreachable or returned a non-retryable transport failure."""


class RateLimitedError(TransportError):
    """Endpoint asked us to back off (HTTP 429 or equivalent)."""


class MalformedResponseError(ProviderError):
    """Provider response could not be parsed at the wire level."""


class MalformedCompletionError(ProviderError):
    """Completion text did not match the expected output structure."""


class MissingLogprobsError(ProviderError):
    """Provider exposed no token log-probabilities and fallback is disabled."""


class MissingBackendError(ProviderError):
    """No backend configured for the requested role."""


class CacheIOError(TreeQAError):
    """Response cache read/write failed (degrades to a cache miss)."""


class GroundingError(TreeQAError):
    """Evidence grounding failed for a task."""


class StructuralError(TreeQAError):
    """Entailment forest violates the 0-or-2 children structure."""


class EmptyForestError(TreeQAError):
    """Answer selection requested on a forest with no roots."""


class UngeneratableError(TreeQAError):
    """Synthetic task constraints cannot be met for this world; resample."""


class FailedRewriteError(TreeQAError):
    """No rewrite candidate passed validation within the attempt budget."""

    def __init__(self, message: str, violations_history: list | None = None):
        super().__init__(message)
        self.violations_history = violations_history or []


class MismatchedDatasetsError(TreeQAError):
    """Two reports being compared do not cover the same dataset."""
