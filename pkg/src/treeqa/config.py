"""Run configuration: defaults, INI-style config files, digests.

Config files use a flat key-value format with one [run] section plus one
section per provider role, e.g.:

    [run]
    frames_per_video = 24
    max_depth = 5

    [provider.prover]
    endpoint_url = http://localhost:8080/v1/chat/completions
    model_id = video-llava-7b
    api_key_env = PROVER_API_KEY

API keys are read from the named environment variable, never from the file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .prompts import ProviderRole

GROUNDING_MODES = ("grounded", "full_video", "gt_intervals")
EXPANSION_MODES = ("dynamic", "static")
PROVER_KINDS = ("video", "image")


@dataclass(frozen=True)
class EndpointConfig:
    endpoint_url: str
    model_id: str
    api_key_env: str | None = None


@dataclass
class RunConfig:
    frames_per_video: int = 24
    max_depth: int = 5
    prover_frame_count: int = 8
    look_around_window: int = 8
    prover_kind: str = "video"
    grounding_mode: str = "grounded"
    expansion: str = "dynamic"
    retries: int = 2
    backoff_base_s: float = 0.25
    concurrency: int = 1
    requests_per_second: float | None = None
    cache_dir: str | None = None
    captions_dir: str | None = None
    noise_epsilon: float = 0.0
    failure_threshold: float = 0.25
    providers: dict[str, EndpointConfig] = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("frames_per_video", "max_depth", "prover_frame_count",
                     "look_around_window", "concurrency"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.grounding_mode not in GROUNDING_MODES:
            raise ConfigError(
                f"grounding_mode must be one of {GROUNDING_MODES}, "
                f"got '{self.grounding_mode}'"
            )
        if self.expansion not in EXPANSION_MODES:
            raise ConfigError(
                f"expansion must be one of {EXPANSION_MODES}, got '{self.expansion}'"
            )
        if self.prover_kind not in PROVER_KINDS:
            raise ConfigError(
                f"prover_kind must be one of {PROVER_KINDS}, got '{self.prover_kind}'"
            )
        if not (0.0 <= self.noise_epsilon < 0.5):
            raise ConfigError("noise_epsilon must lie in [0, 0.5)")
        known_roles = {r.value for r in ProviderRole}
        for role in self.providers:
            if role not in known_roles:
                raise ConfigError(f"unknown provider role '{role}' in config")

    def to_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "providers":
                value = {
                    role: {"endpoint_url": ep.endpoint_url, "model_id": ep.model_id,
                           "api_key_env": ep.api_key_env}
                    for role, ep in sorted(value.items())
                }
            doc[f.name] = value
        return doc

    # Fields that change what gets computed, as opposed to how fast or where
    # intermediate artifacts live; only these feed the digest, so reruns with a
    # different concurrency or cache directory stay comparable.
    _RESULT_FIELDS = (
        "frames_per_video", "max_depth", "prover_frame_count",
        "look_around_window", "prover_kind", "grounding_mode", "expansion",
        "noise_epsilon", "providers",
    )

    def digest(self) -> str:
        doc = self.to_dict()
        payload = json.dumps(
            {k: doc[k] for k in self._RESULT_FIELDS}, sort_keys=True
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


_INT_KEYS = {"frames_per_video", "max_depth", "prover_frame_count",
             "look_around_window", "retries", "concurrency"}
_FLOAT_KEYS = {"backoff_base_s", "noise_epsilon", "failure_threshold",
               "requests_per_second"}
_STR_KEYS = {"prover_kind", "grounding_mode", "expansion", "cache_dir", "captions_dir"}


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"config file not found or unreadable: {path}")

    config = RunConfig()
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            try:
                if key in _INT_KEYS:
                    setattr(config, key, int(raw))
                elif key in _FLOAT_KEYS:
                    setattr(config, key, float(raw))
                elif key in _STR_KEYS:
                    setattr(config, key, raw)
                else:
                    raise ConfigError(f"unknown [run] key '{key}'")
            except ValueError as exc:
                raise ConfigError(f"bad value for [run] {key}: {raw}") from exc

    for section in parser.sections():
        if not section.startswith("provider."):
            continue
        role = section.split(".", 1)[1]
        items = dict(parser.items(section))
        if "endpoint_url" not in items or "model_id" not in items:
            raise ConfigError(f"section [{section}] needs endpoint_url and model_id")
        config.providers[role] = EndpointConfig(
            endpoint_url=items["endpoint_url"],
            model_id=items["model_id"],
            api_key_env=items.get("api_key_env"),
        )

    config.validate()
    return config
