"""Chat-completion dispatch with rate limiting, retries and a resumable log."""
from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

from ..errors import AuthError, TerminalTransportError
from ..prompts import DEFAULT_REFUSAL_PHRASES, ParsedResponse, parse_response
from .ratelimit import SlidingWindowLimiter

log = logging.getLogger(__name__)

# 2330 queries in about 13.33 minutes
DEFAULT_RATE_PER_MINUTE = 175


@dataclass
class BackendConfig:
    endpoint_url: str
    model_name: str = "gpt-4"
    api_key_env_var: str = "OPENAI_API_KEY"
    max_requests_per_minute: int = DEFAULT_RATE_PER_MINUTE
    max_concurrent_inflight: int = 4
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_max: float = 60.0
    timeout: float = 60.0
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_requests_per_minute < 1 or self.max_concurrent_inflight < 1:
            raise ValueError("rate and concurrency limits must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env_var) if self.api_key_env_var else None


@dataclass
class AnnotationRecord:
    query_id: str
    prompt_text: str
    response_text: str | None
    parsed: ParsedResponse | None
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0
    attempt_count: int = 1
    timestamp: float | None = None
    error: str | None = None

    @property
    def predicted(self) -> str | None:
        return self.parsed.label if self.parsed and self.parsed.outcome == "label" else None

    @property
    def outcome(self) -> str:
        return self.parsed.outcome if self.parsed else "ambiguous"

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "prompt_text": self.prompt_text,
            "response_text": self.response_text,
            "parsed": self.parsed.to_dict() if self.parsed else None,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "latency_ms": self.latency_ms,
            "attempt_count": self.attempt_count,
            "timestamp": self.timestamp,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationRecord":
        parsed = ParsedResponse.from_dict(d["parsed"]) if d.get("parsed") else None
        return cls(d["query_id"], d["prompt_text"], d.get("response_text"), parsed,
                   int(d.get("prompt_tokens", 0)), int(d.get("completion_tokens", 0)),
                   float(d.get("latency_ms", 0.0)), int(d.get("attempt_count", 1)),
                   d.get("timestamp"), d.get("error"))


def estimate_tokens(text: str, estimator: Callable[[str], int] | None = None) -> int:
    """Pre-flight token estimate: ceil(chars / 4) unless an estimator is given."""
    if estimator is not None:
        return int(estimator(text))
    return math.ceil(len(text) / 4)


def read_log(path) -> dict[str, AnnotationRecord]:
    records = {}
    p = Path(path)
    if not p.exists():
        return records
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = AnnotationRecord.from_dict(json.loads(line))
            except (ValueError, KeyError):
                # a torn final line from an interrupted write
                log.warning("skipping unreadable line in %s", p)
                continue
            records[rec.query_id] = rec
    return records


def write_log(path, records: Sequence[AnnotationRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


class _Retryable(Exception):
    def __init__(self, detail, retry_after=None):
        super().__init__(detail)
        self.retry_after = retry_after


class ChatClient:
    """Sends one user message per prompt to a chat-completion endpoint."""

    def __init__(self, backend: BackendConfig, limiter: SlidingWindowLimiter | None = None,
                 clock=time.monotonic, sleep=time.sleep, http: httpx.Client | None = None):
        self.backend = backend
        self.sleep = sleep
        self.clock = clock
        self.limiter = limiter or SlidingWindowLimiter(backend.max_requests_per_minute, 60.0, clock, sleep)
        self._http = http or httpx.Client(timeout=backend.timeout)

    def close(self):
        self._http.close()

    def _post(self, prompt: str) -> tuple[str, dict]:
        headers = {"Content-Type": "application/json"}
        key = self.backend.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.backend.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.backend.temperature,
        }
        try:
            resp = self._http.post(self.backend.endpoint_url, json=body, headers=headers)
        except httpx.TransportError as exc:
            raise _Retryable(type(exc).__name__) from None
        if resp.status_code in (401, 403):
            raise AuthError(f"backend rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            ra = resp.headers.get("Retry-After")
            try:
                ra = float(ra) if ra is not None else None
            except ValueError:
                ra = None
            raise _Retryable(f"HTTP {resp.status_code}", ra)
        if resp.status_code != 200:
            raise TerminalTransportError([], f"HTTP {resp.status_code}")
        data = resp.json()
        return data["choices"][0]["message"]["content"], data.get("usage") or {}

    def complete(self, prompt: str) -> tuple[str, dict, int, float]:
        """Return (text, usage, attempts, latency_ms) or raise after retries."""
        detail = ""
        for attempt in range(1, self.backend.max_attempts + 1):
            self.limiter.acquire()
            start = time.perf_counter()
            try:
                text, usage = self._post(prompt)
                return text, usage, attempt, (time.perf_counter() - start) * 1000.0
            except _Retryable as exc:
                detail = str(exc)
                if attempt == self.backend.max_attempts:
                    break
                delay = min(self.backend.backoff_max, self.backend.backoff_base * 2 ** (attempt - 1))
                if exc.retry_after is not None:
                    delay = max(delay, exc.retry_after)
                log.info("retrying after %s (attempt %d, sleeping %.2fs)", detail, attempt, delay)
                self.sleep(delay)
        raise TerminalTransportError([], f"after {self.backend.max_attempts} attempts: {detail}")


def annotate_batch(prompts: Sequence[tuple[str, str]], backend: BackendConfig,
                   class_names: Sequence[str], log_path=None,
                   refusal_phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES,
                   client: ChatClient | None = None,
                   on_record: Callable[[AnnotationRecord], None] | None = None,
                   raise_on_error: bool = True) -> list[AnnotationRecord]:
    """Annotate ``(query_id, prompt_text)`` pairs; records come back in input order.

    Completed records are appended to ``log_path`` as they arrive, and ids
    already present there are not queried again.
    """
    if not prompts:
        raise ValueError("no prompts to annotate")
    ids = [q for q, _ in prompts]
    if len(set(ids)) != len(ids):
        raise ValueError("query ids must be unique")
    done = read_log(log_path) if log_path is not None else {}
    pending = [(q, t) for q, t in prompts if q not in done]
    own_client = client is None
    client = client or ChatClient(backend)
    write_lock = threading.Lock()
    stop = threading.Event()
    failures: dict[str, str] = {}
    fh = open(log_path, "a", encoding="utf-8") if log_path is not None else None

    def work(qid, text):
        if stop.is_set():
            return None
        try:
            response, usage, attempts, latency = client.complete(text)
        except AuthError:
            # stop other workers picking up new prompts before the error surfaces
            stop.set()
            raise
        parsed = parse_response(response, class_names, refusal_phrases)
        return AnnotationRecord(
            qid, text, response, parsed,
            int(usage.get("prompt_tokens", estimate_tokens(text))),
            int(usage.get("completion_tokens", estimate_tokens(response))),
            latency, attempts, time.time())

    try:
        with ThreadPoolExecutor(max_workers=backend.max_concurrent_inflight) as pool:
            futures = {pool.submit(work, q, t): q for q, t in pending}
            outstanding = set(futures)
            try:
                while outstanding:
                    finished, outstanding = wait(outstanding, return_when=FIRST_COMPLETED)
                    for fut in finished:
                        qid = futures[fut]
                        try:
                            rec = fut.result()
                        except TerminalTransportError as exc:
                            failures[qid] = str(exc)
                            continue
                        if rec is None:
                            continue
                        done[qid] = rec
                        if fh is not None:
                            with write_lock:
                                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
                                fh.flush()
                        if on_record is not None:
                            on_record(rec)
            except BaseException:
                stop.set()
                pool.shutdown(wait=True, cancel_futures=True)
                raise
    finally:
        if fh is not None:
            fh.close()
        if own_client:
            client.close()

    if failures and raise_on_error:
        raise TerminalTransportError(sorted(failures), "; ".join(sorted(set(failures.values()))))
    out = []
    for q, t in prompts:
        if q in done:
            out.append(done[q])
        else:
            out.append(AnnotationRecord(q, t, None, None, error=failures.get(q, "not attempted")))
    return out
