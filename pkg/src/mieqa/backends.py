"""Generation backends: fixtures, transcripts, remote chat servers, and caching.

All backends implement ``generate(GenerationRequest) -> GenerationResult`` and
must tolerate concurrent calls. Wrap any backend in :class:`CachedBackend`
to get content-addressed response caching; a warm cache short-circuits the
inner backend entirely.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import (
    BackendError,
    BackendExhaustedError,
    BackendFatalError,
    ConfigError,
    DataError,
)
from .model import ImageRef


@dataclass(frozen=True)
class DecodingParams:
    greedy: bool = True  # temperature 0; sampling is opt-in
    max_new_tokens: int = 64
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")

    def key_dict(self) -> dict:
        return {
            "greedy": self.greedy,
            "max_new_tokens": self.max_new_tokens,
            "stop": list(self.stop),
        }


@dataclass(frozen=True)
class GenerationRequest:
    prompt_text: str
    image: Optional[ImageRef] = None
    decoding: DecodingParams = field(default_factory=DecodingParams)


@dataclass(frozen=True)
class GenerationResult:
    text: str  # raw completion, no harness post-processing
    backend_id: str
    latency_ms: int
    cached: bool = False


def transcript_key(request: GenerationRequest) -> str:
    """Digest of the logical request (prompt, image bytes, decoding params)."""
    payload = {
        "prompt_text": request.prompt_text,
        "image_hash": request.image.content_hash if request.image else "",
        "decoding": request.decoding.key_dict(),
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def cache_key(backend_id: str, request: GenerationRequest) -> str:
    """Transcript key further scoped by backend identity; stable across processes."""
    blob = f"{backend_id}\x00{transcript_key(request)}".encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class Backend:
    """Base backend: subclasses implement _generate; calls are counted here."""

    backend_id: str = "backend"
    supports_images: bool = True

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.retries = 0

    def generate(self, request: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.calls += 1
        start = time.monotonic()
        text = self._generate(request)
        latency = int((time.monotonic() - start) * 1000)
        return GenerationResult(text=text, backend_id=self.backend_id, latency_ms=latency)

    def _generate(self, request: GenerationRequest) -> str:
        raise NotImplementedError

    def stats(self) -> dict:
        return {"backend_id": self.backend_id, "calls": self.calls, "retries": self.retries}


class StaticBackend(Backend):
    """Returns one fixed completion for every request (smoke tests)."""

    def __init__(self, text: str, backend_id: str = "static"):
        super().__init__()
        self.backend_id = backend_id
        self._text = text

    def _generate(self, request: GenerationRequest) -> str:
        return self._text


class TranscriptBackend(Backend):
    """Replays completions recorded from a real run, keyed by request digest.

    Transcript files are JSONL rows of {"key": <digest>, "text": <completion>}.
    A missing key returns the configured default, or raises when strict.
    """

    def __init__(
        self,
        transcript: str | Path | Mapping[str, str],
        *,
        backend_id: str = "transcript",
        strict: bool = False,
        default: str = "",
        supports_images: bool = True,
    ):
        super().__init__()
        self.backend_id = backend_id
        self.strict = strict
        self.default = default
        self.supports_images = supports_images
        if isinstance(transcript, Mapping):
            self._table = dict(transcript)
        else:
            self._table = {}
            path = Path(transcript)
            try:
                lines = path.read_text(encoding="utf-8").split("\n")  # NEL-safe
            except OSError as exc:
                raise ConfigError(f"cannot read transcript {path}: {exc}") from exc
            for lineno, line in enumerate(lines, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    self._table[row["key"]] = row["text"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataError(f"transcript {path}:{lineno}: bad row: {exc}") from exc

    def _generate(self, request: GenerationRequest) -> str:
        key = transcript_key(request)
        if key in self._table:
            return self._table[key]
        if self.strict:
            raise BackendFatalError(
                f"transcript backend {self.backend_id} has no entry for request "
                f"{key[:12]}... (strict mode)"
            )
        return self.default


class RecordingBackend(Backend):
    """Delegates to an inner backend while appending transcript rows to a file."""

    def __init__(self, inner: Backend, path: str | Path):
        super().__init__()
        self.inner = inner
        self.backend_id = inner.backend_id
        self.supports_images = inner.supports_images
        self._path = Path(path)
        self._write_lock = threading.Lock()

    def _generate(self, request: GenerationRequest) -> str:
        text = self.inner.generate(request).text
        row = {"key": transcript_key(request), "text": text}
        with self._write_lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return text


class CachedBackend(Backend):
    """Content-addressed response cache in front of any backend.

    Hits short-circuit the inner backend and return cached=True; misses
    delegate and persist. Corrupt cache files degrade to misses with a
    warning counter. Writes go through a temp file + atomic rename.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path):
        super().__init__()
        self.inner = inner
        self.backend_id = inner.backend_id
        self.supports_images = inner.supports_images
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self.corrupt = 0

    def _path_for(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.calls += 1
        key = cache_key(self.backend_id, request)
        path = self._path_for(key)
        if path.exists():
            try:
                row = json.loads(path.read_text(encoding="utf-8"))
                text = row["text"]
            except (json.JSONDecodeError, KeyError, OSError):
                with self._lock:
                    self.corrupt += 1
            else:
                with self._lock:
                    self.hits += 1
                return GenerationResult(
                    text=text, backend_id=self.backend_id, latency_ms=0, cached=True
                )
        with self._lock:
            self.misses += 1
        result = self.inner.generate(request)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(
            json.dumps({"key": key, "text": result.text}, ensure_ascii=False),
            encoding="utf-8",
        )
        os.replace(tmp, path)
        return result

    def stats(self) -> dict:
        out = self.inner.stats()
        out.update({"cache_hits": self.hits, "cache_misses": self.misses, "cache_corrupt": self.corrupt})
        return out


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str  # base URL of a chat-completions-compatible server
    model: str
    api_key_env: str = ""  # env var holding the bearer token; empty = none
    timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_s: float = 1.0
    max_in_flight: int = 4
    supports_images: bool = True

    @classmethod
    def from_file(cls, path: str | Path) -> "RemoteConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(**raw)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad backend config {path}: {exc}") from exc


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
_IMAGE_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg", ".gif": "image/gif", ".webp": "image/webp"}


class RemoteBackend(Backend):
    """Chat-completions client: JSON over HTTP, base64 data-URI image parts.

    Retries transport failures, 5xx, and 429 with exponential backoff;
    authentication failures are fatal immediately. A semaphore bounds
    concurrent in-flight requests.
    """

    def __init__(self, config: RemoteConfig, *, transport=None):
        super().__init__()
        import httpx

        self.config = config
        self.backend_id = f"remote:{config.model}"
        self.supports_images = config.supports_images
        self._limiter = threading.Semaphore(config.max_in_flight)
        headers = {}
        if config.api_key_env:
            token = os.environ.get(config.api_key_env, "")
            if not token:
                raise ConfigError(
                    f"backend credential env var {config.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=config.endpoint,
            headers=headers,
            timeout=config.timeout_s,
            transport=transport,
        )

    def _payload(self, request: GenerationRequest) -> dict:
        content: list[dict] | str
        if request.image is not None:
            if not self.supports_images:
                raise BackendFatalError(
                    f"backend {self.backend_id} is text-only but the request carries an image"
                )
            suffix = Path(request.image.path).suffix.lower()
            media = _IMAGE_MEDIA_TYPES.get(suffix, "image/png")
            data = base64.b64encode(Path(request.image.path).read_bytes()).decode("ascii")
            content = [
                {"type": "text", "text": request.prompt_text},
                {"type": "image_url", "image_url": {"url": f"data:{media};base64,{data}"}},
            ]
        else:
            content = request.prompt_text
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": request.decoding.max_new_tokens,
        }
        if request.decoding.greedy:
            payload["temperature"] = 0
        if request.decoding.stop:
            payload["stop"] = list(request.decoding.stop)
        return payload

    def _generate(self, request: GenerationRequest) -> str:
        import httpx

        payload = self._payload(request)
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                with self._lock:
                    self.retries += 1
                time.sleep(self.config.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._limiter:
                    response = self._client.post("/chat/completions", json=payload)
            except httpx.HTTPError as exc:
                last_error = BackendError(f"transport failure: {exc}")
                continue
            if response.status_code in (401, 403):
                raise BackendFatalError(
                    f"authentication failed against {self.config.endpoint} "
                    f"({response.status_code})"
                )
            if response.status_code in _RETRYABLE_STATUS:
                last_error = BackendError(f"server returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendFatalError(
                    f"unexpected status {response.status_code}: {response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendFatalError(f"malformed completion payload: {exc}") from exc
        raise BackendExhaustedError(
            f"backend {self.backend_id} failed after {self.config.max_attempts} attempts: {last_error}"
        )


def write_transcript(path: str | Path, rows: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, text in rows:
            fh.write(json.dumps({"key": key, "text": text}, ensure_ascii=False) + "\n")
