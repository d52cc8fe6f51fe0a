"""Chat-completions client for OpenAI-compatible VLM/LLM endpoints.

Requests go to POST {base_url}/chat/completions with the standard JSON body.
Three transports share one interface: live HTTP (with retries and per-endpoint
rate limiting), record (live + persist fixtures), and replay (fixtures only,
no network). Every request has a content-derived digest used for fixture and
cache addressing.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

import httpx

WIRE_PATH = "/chat/completions"
RETRYABLE_STATUS = frozenset({429} | set(range(500, 600)))
NONRETRYABLE_BODY_EXCERPT = 200
PROMPT_SUMMARY_CHARS = 200


class ModelClientError(Exception):
    """Non-retryable request failure (bad request, auth, malformed response)."""


class RetriesExhaustedError(ModelClientError):
    def __init__(self, attempts: int, last_error: str):
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts


class ReplayMissError(ModelClientError):
    def __init__(self, digest: str, prompt_summary: str):
        super().__init__(
            f"no replay fixture for request {digest}; prompt: {prompt_summary!r}"
        )
        self.digest = digest
        self.prompt_summary = prompt_summary


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    url: str  # data URL


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ChatMessage:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self):
        if self.role not in ("system", "user"):
            raise ValueError(f"unsupported role {self.role!r}")
        if not self.parts:
            raise ValueError("message needs at least one part")
        if self.role != "user" and any(isinstance(p, ImagePart) for p in self.parts):
            raise ValueError("image parts only allowed in user messages")


def system_message(text: str) -> ChatMessage:
    return ChatMessage(role="system", parts=(TextPart(text),))


def user_message(*parts: Part | str) -> ChatMessage:
    norm = tuple(TextPart(p) if isinstance(p, str) else p for p in parts)
    return ChatMessage(role="user", parts=norm)


@dataclass(frozen=True)
class EndpointConfig:
    name: str
    role: str  # "vlm" | "llm"
    base_url: str
    model: str
    api_key: Optional[str] = None
    temperature: float = 0.1
    top_p: float = 0.9
    max_tokens: int = 2048
    timeout: float = 120.0
    max_retries: int = 3
    requests_per_minute: Optional[int] = None
    model_size_b: Optional[float] = None

    def __post_init__(self):
        if self.role not in ("vlm", "llm"):
            raise ValueError(f"endpoint role must be vlm or llm, got {self.role!r}")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p {self.top_p} outside (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.requests_per_minute is not None and self.requests_per_minute < 1:
            raise ValueError("requests_per_minute must be positive")


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0
    from_cache: bool = False


def _part_to_wire(part: Part) -> dict:
    if isinstance(part, TextPart):
        return {"type": "text", "text": part.text}
    return {"type": "image_url", "image_url": {"url": part.url}}


def build_chat_body(endpoint: EndpointConfig, messages: Sequence[ChatMessage]) -> bytes:
    """Serialize the wire request body.

    A message whose sole part is text serializes content as a plain string;
    anything else uses the part-array form. Field order and separators are
    fixed so the bytes are reproducible (golden-tested).
    """
    wire_messages = []
    for msg in messages:
        if len(msg.parts) == 1 and isinstance(msg.parts[0], TextPart):
            content: object = msg.parts[0].text
        else:
            content = [_part_to_wire(p) for p in msg.parts]
        wire_messages.append({"role": msg.role, "content": content})
    body = {
        "model": endpoint.model,
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
        "max_tokens": endpoint.max_tokens,
        "messages": wire_messages,
    }
    return json.dumps(body, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def request_digest(endpoint: EndpointConfig, messages: Sequence[ChatMessage]) -> str:
    """Content hash of the logical request.

    Covers sampling parameters and messages; image parts contribute only the
    hash of their payload, keeping digests short and stable. Canonical JSON
    (sorted keys) makes the digest independent of construction order.
    """
    canon_messages = []
    for msg in messages:
        parts = []
        for part in msg.parts:
            if isinstance(part, TextPart):
                parts.append({"text": part.text})
            else:
                payload_hash = hashlib.sha256(part.url.encode("utf-8")).hexdigest()
                parts.append({"image_sha256": payload_hash})
        canon_messages.append({"role": msg.role, "parts": parts})
    canon = {
        "model": endpoint.model,
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
        "max_tokens": endpoint.max_tokens,
        "messages": canon_messages,
    }
    blob = json.dumps(canon, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def prompt_summary(messages: Sequence[ChatMessage]) -> str:
    """First 200 chars of the rendered text parts; debugging aid for fixtures."""
    texts = []
    for msg in messages:
        for part in msg.parts:
            if isinstance(part, TextPart):
                texts.append(part.text)
            else:
                texts.append("[image]")
    return " | ".join(texts)[:PROMPT_SUMMARY_CHARS]


# Response record codec shared by replay fixtures and the response cache.

def encode_response_record(
    digest: str,
    model: str,
    response: ChatResponse,
    prompt_summary_text: str,
    created_at: Optional[str] = None,
) -> bytes:
    record = {
        "digest": digest,
        "model": model,
        "created_at": created_at or datetime.now(timezone.utc).isoformat(),
        "response_text": response.text,
        "usage": {
            "prompt_tokens": response.prompt_tokens,
            "completion_tokens": response.completion_tokens,
        },
        "prompt_summary": prompt_summary_text,
    }
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode(
        "utf-8"
    )


def decode_response_record(data: bytes, source: str) -> dict:
    try:
        record = json.loads(data.decode("utf-8"))
        if not isinstance(record, dict) or "response_text" not in record or "digest" not in record:
            raise ValueError("missing required fields")
        return record
    except (ValueError, UnicodeDecodeError) as exc:
        raise ModelClientError(f"corrupt response record {source}: {exc}") from exc


def record_to_response(record: dict, from_cache: bool = False) -> ChatResponse:
    usage = record.get("usage", {})
    return ChatResponse(
        text=record["response_text"],
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
        latency=0.0,
        from_cache=from_cache,
    )


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with full jitter: sleep ~ U(0, base * factor^attempt)."""

    base: float = 1.0
    factor: float = 2.0
    rng: Callable[[], float] = random.random
    sleep: Callable[[float], None] = time.sleep

    def backoff(self, attempt: int) -> None:
        self.sleep(self.rng() * self.base * (self.factor**attempt))


class RateLimiter:
    """Sliding 60 s window limiter; thread-safe, blocks until a slot frees up."""

    WINDOW = 60.0

    def __init__(
        self,
        limit_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.limit = limit_per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= self.WINDOW:
                    self._stamps.popleft()
                if len(self._stamps) < self.limit:
                    self._stamps.append(now)
                    return
                wait = self.WINDOW - (now - self._stamps[0])
            self._sleep(max(wait, 0.0))


class Transport(Protocol):
    def send(
        self,
        endpoint: EndpointConfig,
        body: bytes,
        digest: str,
        summary: str,
    ) -> ChatResponse: ...


class LiveTransport:
    """HTTP transport with retry and per-endpoint rate limiting."""

    def __init__(self, retry: Optional[RetryPolicy] = None, http: Optional[httpx.Client] = None):
        self.retry = retry or RetryPolicy()
        self._http = http or httpx.Client()
        self._limiters: dict[str, RateLimiter] = {}
        self._lock = threading.Lock()

    def _limiter(self, endpoint: EndpointConfig) -> Optional[RateLimiter]:
        if endpoint.requests_per_minute is None:
            return None
        with self._lock:
            limiter = self._limiters.get(endpoint.name)
            if limiter is None or limiter.limit != endpoint.requests_per_minute:
                limiter = RateLimiter(endpoint.requests_per_minute)
                self._limiters[endpoint.name] = limiter
            return limiter

    def send(self, endpoint, body, digest, summary) -> ChatResponse:
        url = endpoint.base_url.rstrip("/") + WIRE_PATH
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key:
            headers["Authorization"] = f"Bearer {endpoint.api_key}"
        limiter = self._limiter(endpoint)

        attempts = endpoint.max_retries + 1
        last_error = ""
        for attempt in range(attempts):
            if limiter is not None:
                limiter.acquire()
            started = time.monotonic()
            try:
                resp = self._http.post(
                    url, content=body, headers=headers, timeout=endpoint.timeout
                )
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                if attempt + 1 < attempts:
                    self.retry.backoff(attempt)
                continue
            latency = time.monotonic() - started

            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                if attempt + 1 < attempts:
                    self.retry.backoff(attempt)
                continue
            if resp.status_code != 200:
                excerpt = resp.text[:NONRETRYABLE_BODY_EXCERPT]
                raise ModelClientError(
                    f"endpoint {endpoint.name}: HTTP {resp.status_code}: {excerpt}"
                )
            return _parse_completion(endpoint, resp, latency)
        raise RetriesExhaustedError(attempts, last_error)


def _parse_completion(endpoint: EndpointConfig, resp: httpx.Response, latency: float) -> ChatResponse:
    try:
        payload = resp.json()
        text = payload["choices"][0]["message"]["content"]
        if text is None:
            text = ""
        usage = payload.get("usage") or {}
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        excerpt = resp.text[:NONRETRYABLE_BODY_EXCERPT]
        raise ModelClientError(
            f"endpoint {endpoint.name}: malformed completion response ({exc}): {excerpt}"
        ) from exc
    return ChatResponse(
        text=text,
        prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
        completion_tokens=int(usage.get("completion_tokens", 0) or 0),
        latency=latency,
    )


def fixture_path(fixture_dir: Path, digest: str) -> Path:
    return Path(fixture_dir) / f"{digest}.json"


def write_fixture(
    fixture_dir: Path,
    endpoint: EndpointConfig,
    digest: str,
    response: ChatResponse,
    summary: str,
) -> Path:
    path = fixture_path(fixture_dir, digest)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(encode_response_record(digest, endpoint.model, response, summary))
    tmp.replace(path)
    return path


class RecordTransport:
    """Issues live requests and persists (digest -> response) fixture files."""

    def __init__(self, fixture_dir: str | Path, inner: Optional[Transport] = None):
        self.fixture_dir = Path(fixture_dir)
        self.inner = inner or LiveTransport()

    def send(self, endpoint, body, digest, summary) -> ChatResponse:
        response = self.inner.send(endpoint, body, digest, summary)
        write_fixture(self.fixture_dir, endpoint, digest, response, summary)
        return response


class ReplayTransport:
    """Serves persisted fixtures; never touches the network."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def send(self, endpoint, body, digest, summary) -> ChatResponse:
        path = fixture_path(self.fixture_dir, digest)
        if not path.exists():
            raise ReplayMissError(digest, summary)
        record = decode_response_record(path.read_bytes(), str(path))
        return record_to_response(record)


def transport_of(
    mode: str,
    fixture_dir: Optional[str | Path] = None,
    retry: Optional[RetryPolicy] = None,
) -> Transport:
    if mode == "live":
        return LiveTransport(retry=retry)
    if mode == "record":
        if fixture_dir is None:
            raise ValueError("record transport needs a fixture dir")
        return RecordTransport(fixture_dir, inner=LiveTransport(retry=retry))
    if mode == "replay":
        if fixture_dir is None:
            raise ValueError("replay transport needs a fixture dir")
        return ReplayTransport(fixture_dir)
    raise ValueError(f"unknown transport mode {mode!r}")


def complete(
    endpoint: EndpointConfig,
    messages: Sequence[ChatMessage],
    transport: Transport,
) -> ChatResponse:
    """One chat-completions exchange via the given transport."""
    if not messages:
        raise ValueError("messages must be non-empty")
    body = build_chat_body(endpoint, messages)
    digest = request_digest(endpoint, messages)
    summary = prompt_summary(messages)
    return transport.send(endpoint, body, digest, summary)
