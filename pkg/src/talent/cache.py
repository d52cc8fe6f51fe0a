"""Content-addressed persistent cache of model responses.

One file per entry at <dir>/<first 2 hex>/<digest>.json, canonical JSON,
written atomically (temp file + rename). No eviction: benchmark caches are
bounded by dataset size; `talent cache purge` clears a directory.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .client import (
    ChatResponse,
    EndpointConfig,
    ModelClientError,
    Transport,
    decode_response_record,
    encode_response_record,
    record_to_response,
)


class CacheError(ModelClientError):
    """Corrupt entry file or key mismatch."""


@dataclass
class CacheEntry:
    digest: str
    model: str
    created_at: str
    response: ChatResponse
    prompt_summary: str


class ResponseCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> Optional[CacheEntry]:
        """Entry for a previously put digest, else None. Corrupt files raise."""
        path = self.path_for(digest)
        if not path.exists():
            return None
        record = decode_response_record(path.read_bytes(), str(path))
        if record["digest"] != digest:
            raise CacheError(f"cache entry {path} carries digest {record['digest']}")
        return CacheEntry(
            digest=digest,
            model=record.get("model", ""),
            created_at=record.get("created_at", ""),
            response=record_to_response(record, from_cache=True),
            prompt_summary=record.get("prompt_summary", ""),
        )

    def put(self, digest: str, entry: CacheEntry) -> None:
        """Atomic write; concurrent identical puts converge to one valid entry."""
        if digest != entry.digest:
            raise CacheError(f"key {digest} does not match entry digest {entry.digest}")
        path = self.path_for(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = encode_response_record(
            entry.digest, entry.model, entry.response, entry.prompt_summary, entry.created_at
        )
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def purge(self) -> int:
        """Delete all entries; returns the number removed."""
        removed = 0
        for path in self.root.glob("*/*.json"):
            path.unlink()
            removed += 1
        return removed


class CachingTransport:
    """Get-before-dispatch, put-after-success. Failures are never cached."""

    def __init__(self, inner: Transport, cache: ResponseCache):
        self.inner = inner
        self.cache = cache

    def send(
        self, endpoint: EndpointConfig, body: bytes, digest: str, summary: str
    ) -> ChatResponse:
        hit = self.cache.get(digest)
        if hit is not None:
            return hit.response
        response = self.inner.send(endpoint, body, digest, summary)
        self.cache.put(
            digest,
            CacheEntry(
                digest=digest,
                model=endpoint.model,
                created_at=datetime.now(timezone.utc).isoformat(),
                response=response,
                prompt_summary=summary,
            ),
        )
        return response


def wrap(transport: Transport, cache: ResponseCache) -> CachingTransport:
    return CachingTransport(transport, cache)
