"""Content-addressed response cache: one JSON file per key, filename = hex hash."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

from ..errors import CacheIOError

log = logging.getLogger(__name__)


def cache_key(role: str, prompt: str, attachments: tuple[str, ...], model_id: str) -> str:
    payload = json.dumps(
        {
            "role": role,
            "prompt": prompt,
            "attachments": [hashlib.sha256(a.encode("utf-8")).hexdigest() for a in attachments],
            "model_id": model_id,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """File-backed cache; a hit returns the byte-identical stored response."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key

    def lookup(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise CacheIOError(f"cache read failed for {path}: {exc}") from exc
        try:
            entry = json.loads(raw)
        except json.JSONDecodeError:
            log.warning("corrupted cache entry %s, treating as miss", key)
            return None
        if not isinstance(entry, dict) or "text" not in entry:
            log.warning("malformed cache entry %s, treating as miss", key)
            return None
        return entry

    def store(self, key: str, entry: dict) -> None:
        # Atomic write so concurrent evaluators never observe partial entries;
        # re-storing an existing key is a no-op by content addressing.
        path = self._path(key)
        try:
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, sort_keys=True)
            os.replace(tmp, path)
        except OSError as exc:
            raise CacheIOError(f"cache write failed for {path}: {exc}") from exc
