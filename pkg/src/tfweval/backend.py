"""Chat-completions client with record/replay cassettes.

Requests go to `{endpoint_url}/chat/completions` as JSON
`{"model", "temperature", "max_tokens", "messages": [{"role", "content"}]}`
with bearer auth from the configured environment variable; the assistant text
is read from `choices[0].message.content`. Any server speaking that shape
works.

Every request is keyed by a fingerprint: the SHA-256 of the canonical JSON of
`{"model", "temperature", "messages"}`. A cassette maps fingerprints to the
recorded response text (JSONL, one entry per line), which makes whole
experiments replayable offline and bit-deterministic.

Modes: `live` always calls the network; `record` serves cassette hits and
records misses after fetching them; `replay` never touches the network and
raises on a miss.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

logger = logging.getLogger(__name__)

MODES = ("live", "record", "replay")
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class BackendError(Exception):
    pass


class BackendConfigError(BackendError):
    pass


class TransportError(BackendError):
    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class ReplayMissError(BackendError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no cassette entry for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class CassetteError(BackendError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 30.0
    max_retries: int = 3
    api_key_env: str = "OPENAI_API_KEY"
    requests_per_minute: float = 0.0  # 0 = unlimited

    def __post_init__(self):
        if not (math.isfinite(self.temperature) and self.temperature >= 0.0):
            raise BackendConfigError("temperature must be finite and >= 0")
        if self.timeout_s <= 0:
            raise BackendConfigError("timeout_s must be positive")
        if self.max_tokens <= 0:
            raise BackendConfigError("max_tokens must be positive")
        if self.max_retries < 0:
            raise BackendConfigError("max_retries must be >= 0")
        if self.requests_per_minute < 0:
            raise BackendConfigError("requests_per_minute must be >= 0")


@dataclass(frozen=True)
class Completion:
    request_fingerprint: str
    response_text: str
    latency_s: float
    attempt_count: int


def request_fingerprint(model: str, temperature: float, messages: list[dict]) -> str:
    payload = json.dumps(
        {"model": model, "temperature": temperature, "messages": messages},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Cassette:
    """Fingerprint -> recorded response text, persisted as JSONL.

    Writes are serialized behind a lock and an entry becomes visible to
    readers only after its line is fully written and flushed.
    """

    def __init__(self, path: str | Path, model_name: str = ""):
        self.path = Path(path)
        self.model_name = model_name
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CassetteError(
                        f"{self.path}, line {line_no}: invalid JSON ({exc.msg})"
                    ) from exc
                for field_name in ("fingerprint", "response_text"):
                    if field_name not in entry:
                        raise CassetteError(
                            f"{self.path}, line {line_no}: missing {field_name!r}"
                        )
                fp = entry["fingerprint"]
                if fp in self._entries:
                    raise CassetteError(
                        f"{self.path}, line {line_no}: duplicate fingerprint {fp}"
                    )
                self._entries[fp] = entry["response_text"]
                if not self.model_name and entry.get("model"):
                    self.model_name = entry["model"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, fingerprint: str) -> str | None:
        with self._lock:
            return self._entries.get(fingerprint)

    def record(self, fingerprint: str, response_text: str, model: str = "") -> None:
        line = json.dumps(
            {
                "fingerprint": fingerprint,
                "response_text": response_text,
                "model": model or self.model_name,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            },
            ensure_ascii=False,
        )
        with self._lock:
            if fingerprint in self._entries:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
            self._entries[fingerprint] = response_text

    def sha256(self) -> str | None:
        """Digest of the on-disk file; None while nothing has been recorded."""
        if not self.path.exists():
            return None
        return hashlib.sha256(self.path.read_bytes()).hexdigest()


class TokenBucket:
    """Requests-per-minute limiter; acquire() blocks until a slot is free."""

    def __init__(self, per_minute: float, clock=time.monotonic, sleep=time.sleep):
        self.capacity = per_minute
        self.tokens = per_minute
        self.rate = per_minute / 60.0
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


class LLMClient:
    """Mode-aware completion client, shareable across threads."""

    def __init__(
        self,
        config: BackendConfig,
        mode: str = "live",
        cassette: Cassette | None = None,
    ):
        if mode not in MODES:
            raise BackendConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if mode in ("record", "replay") and cassette is None:
            raise BackendConfigError(f"{mode} mode requires a cassette")
        self.config = config
        self.mode = mode
        self.cassette = cassette
        self._bucket = (
            TokenBucket(config.requests_per_minute)
            if config.requests_per_minute > 0
            else None
        )
        self._http: httpx.Client | None = None
        self._http_lock = threading.Lock()
        if mode != "replay":
            if not os.environ.get(config.api_key_env):
                raise BackendConfigError(
                    f"API key environment variable {config.api_key_env!r} is not set"
                )

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _client(self) -> httpx.Client:
        with self._http_lock:
            if self._http is None:
                self._http = httpx.Client(timeout=self.config.timeout_s)
            return self._http

    def complete(self, messages: list[dict]) -> Completion:
        """Resolve one chat request per the client mode.

        Cassette hits return the stored text with zero latency. Network
        fetches retry transport failures and retryable HTTP statuses with
        exponential backoff, never exceeding max_retries + 1 attempts.
        """
        fp = request_fingerprint(self.config.model_name, self.config.temperature, messages)
        if self.cassette is not None and self.mode in ("record", "replay"):
            stored = self.cassette.get(fp)
            if stored is not None:
                return Completion(fp, stored, 0.0, 1)
            if self.mode == "replay":
                raise ReplayMissError(fp)

        text, latency, attempts = self._fetch(messages)
        if self.mode == "record":
            self.cassette.record(fp, text, self.config.model_name)
        return Completion(fp, text, latency, attempts)

    def _fetch(self, messages: list[dict]) -> tuple[str, float, int]:
        cfg = self.config
        body = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "messages": messages,
        }
        headers = {"Authorization": f"Bearer {os.environ.get(cfg.api_key_env, '')}"}
        url = cfg.endpoint_url.rstrip("/") + "/chat/completions"
        start = time.monotonic()
        last_error: str = ""
        last_status: int | None = None
        for attempt in range(1, cfg.max_retries + 2):
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                response = self._client().post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                last_status = None
            else:
                if response.status_code == 200:
                    try:
                        text = response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                        raise TransportError(
                            f"malformed completion response: {exc}", attempts=attempt
                        ) from exc
                    if not isinstance(text, str):
                        text = "" if text is None else str(text)
                    return text, time.monotonic() - start, attempt
                last_error = f"HTTP {response.status_code}"
                last_status = response.status_code
                if response.status_code not in _RETRYABLE_STATUS:
                    raise TransportError(
                        f"request failed with {last_error}",
                        status=last_status,
                        attempts=attempt,
                    )
            if attempt <= cfg.max_retries:
                delay = min(0.25 * (2 ** (attempt - 1)), 8.0)
                logger.warning("attempt %d failed (%s), retrying in %.2fs",
                               attempt, last_error, delay)
                time.sleep(delay)
        raise TransportError(
            f"request failed after {cfg.max_retries + 1} attempts ({last_error})",
            status=last_status,
            attempts=cfg.max_retries + 1,
        )
