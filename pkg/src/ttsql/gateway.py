"""Uniform contract for model calls: profiles, backends, retries, tracing.

All model-facing work goes through :class:`Gateway.complete`, which resolves
the request's profile to a configured backend, retries transient failures,
and appends one record per call to the run trace. Two backend families ship
here: an HTTP JSON chat-completion client and a deterministic mock used by
every offline test.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import time
import urllib.error
import urllib.request
import weakref
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

from .errors import BackendError, BackendTimeout, SqlNotFound, UnscriptedMockCall


class Profile(str, Enum):
    UNDERSTANDING = "understanding"
    ICL_GENERATOR = "icl_generator"
    REASONING_GENERATOR = "reasoning_generator"
    FIXER = "fixer"
    REVISER = "reviser"
    SELECTOR = "selector"


Message = tuple[str, str]  # (role, text)


@dataclass(frozen=True)
class ChatRequest:
    profile: Profile
    messages: tuple[Message, ...]
    temperature: float
    seed: int
    max_output_tokens: int = 2048
    backend: str | None = None  # named endpoint override; None uses the profile default

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a request needs at least one message")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str  # "stop" | "length" | "error"
    latency: float
    backend_id: str


def messages_hash(messages: tuple[Message, ...]) -> str:
    payload = json.dumps([list(m) for m in messages], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    id: str
    retries: int
    parallelism: int
    honors_seed: bool  # backends that ignore seeds are flagged in traces

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class MockBackend:
    """Deterministic scripted backend.

    Responses are keyed by (profile, stable hash of messages, seed). A call
    with no matching script entry and no registered responder for its profile
    raises :class:`UnscriptedMockCall`. Responders are plain functions
    registered by the test script for whole-pipeline fixtures where exact
    message hashes are impractical to precompute.
    """

    def __init__(self, backend_id: str = "mock"):
        self.id = backend_id
        self.retries = 0
        self.parallelism = 8
        self.honors_seed = True
        self._entries: dict[tuple[str, str, int], str] = {}
        self._responders: dict[Profile, Callable[[ChatRequest], str]] = {}

    def script(
        self, profile: Profile, messages: tuple[Message, ...], seed: int, text: str
    ) -> None:
        self._entries[(profile.value, messages_hash(messages), seed)] = text

    def script_responder(self, profile: Profile, fn: Callable[[ChatRequest], str]) -> None:
        self._responders[profile] = fn

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = (request.profile.value, messages_hash(request.messages), request.seed)
        if key in self._entries:
            return ChatResponse(self._entries[key], "stop", 0.0, self.id)
        responder = self._responders.get(request.profile)
        if responder is not None:
            return ChatResponse(responder(request), "stop", 0.0, self.id)
        raise UnscriptedMockCall(
            f"no script for profile={request.profile.value} hash={key[1][:12]} seed={request.seed}"
        )


# transport(url, payload, headers, timeout) -> (status_code, body_bytes)
Transport = Callable[[str, dict, dict, float], tuple[int, bytes]]


def _urllib_transport(url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, bytes]:
    data = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(url, data=data, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise BackendTimeout(f"{url}: {exc}") from exc


@dataclass
class EndpointSpec:
    """Wire configuration for one chat-completion endpoint."""

    base_url: str
    model: str
    auth_env: str | None = None
    timeout: float = 60.0
    retries: int = 2
    parallelism: int = 4
    honors_seed: bool = False  # set true only for endpoints with seeded sampling


class HttpBackend:
    """JSON chat-completion client (fields: model, messages, temperature, seed)."""

    def __init__(self, backend_id: str, spec: EndpointSpec, transport: Transport | None = None):
        self.id = backend_id
        self.spec = spec
        self.retries = spec.retries
        self.parallelism = spec.parallelism
        self.honors_seed = spec.honors_seed
        self._transport = transport or _urllib_transport

    def complete(self, request: ChatRequest) -> ChatResponse:
        import os

        headers = {"Content-Type": "application/json"}
        if self.spec.auth_env:
            token = os.environ.get(self.spec.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.spec.model,
            "messages": [{"role": role, "content": text} for role, text in request.messages],
            "temperature": request.temperature,
            "seed": request.seed,
            "max_tokens": request.max_output_tokens,
        }
        start = time.perf_counter()
        status, body = self._transport(self.spec.base_url, payload, headers, self.spec.timeout)
        latency = time.perf_counter() - start
        if status >= 400:
            raise BackendError(f"{self.id}: HTTP {status}: {body[:200]!r}")
        try:
            parsed = json.loads(body)
            choice = parsed["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"{self.id}: malformed response: {exc}") from exc
        reason = "length" if finish == "length" else "stop"
        return ChatResponse(text, reason, latency, self.id)


class TraceSink:
    """Append-only record of every gateway call, optionally mirrored to JSONL."""

    def __init__(self, jsonl_path: str | Path | None = None):
        self.records: list[dict] = []
        self._path = Path(jsonl_path) if jsonl_path else None
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)
            if self._path is not None:
                line = json.dumps(record, ensure_ascii=False)
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    def count(self, profile: Profile | None = None) -> int:
        with self._lock:
            if profile is None:
                return len(self.records)
            return sum(1 for r in self.records if r["profile"] == profile.value)


# One semaphore per backend instance, shared by every Gateway using it, so a
# backend's parallelism cap holds globally even with per-task gateways.
_semaphore_registry: "weakref.WeakKeyDictionary[object, threading.Semaphore]" = (
    weakref.WeakKeyDictionary()
)
_registry_lock = threading.Lock()


def _semaphore_for(backend: Backend) -> threading.Semaphore:
    with _registry_lock:
        semaphore = _semaphore_registry.get(backend)
        if semaphore is None:
            semaphore = threading.Semaphore(max(1, backend.parallelism))
            _semaphore_registry[backend] = semaphore
        return semaphore


class Gateway:
    """Routes requests to backends with retries, caps, and trace capture."""

    def __init__(
        self,
        backends: dict[str, Backend],
        profile_map: dict[Profile, str],
        trace: TraceSink | None = None,
    ):
        for profile, name in profile_map.items():
            if name not in backends:
                raise KeyError(f"profile {profile.value} maps to unknown backend {name!r}")
        self.backends = backends
        self.profile_map = profile_map
        self.trace = trace if trace is not None else TraceSink()

    def _resolve(self, request: ChatRequest) -> tuple[str, Backend]:
        name = request.backend or self.profile_map.get(request.profile)
        if name is None:
            raise BackendError(f"profile {request.profile.value} is not configured")
        backend = self.backends.get(name)
        if backend is None:
            raise BackendError(f"unknown backend {name!r}")
        return name, backend

    def complete(self, request: ChatRequest) -> ChatResponse:
        """At most ``1 + retries`` attempts; exactly one trace record per call."""
        name, backend = self._resolve(request)
        attempts: list[dict] = []
        response: ChatResponse | None = None
        failure: Exception | None = None
        start = time.perf_counter()
        with _semaphore_for(backend):
            for _attempt in range(1 + backend.retries):
                try:
                    response = backend.complete(request)
                    attempts.append({"ok": True, "latency": response.latency})
                    break
                except UnscriptedMockCall as exc:
                    # A script gap is a test bug; retrying cannot help.
                    attempts.append({"ok": False, "error": str(exc)})
                    failure = exc
                    break
                except BackendError as exc:
                    attempts.append({"ok": False, "error": str(exc)})
                    failure = exc
        record = {
            "timestamp": time.time(),
            "profile": request.profile.value,
            "backend": name,
            "request_hash": messages_hash(request.messages),
            "seed": request.seed,
            "seed_honored": getattr(backend, "honors_seed", False),
            "temperature": request.temperature,
            "response": response.text if response else None,
            "finish_reason": response.finish_reason if response else "error",
            "latency": time.perf_counter() - start,
            "attempts": attempts,
            "error": str(failure) if response is None and failure else None,
        }
        self.trace.append(record)
        if response is None:
            assert failure is not None
            raise failure
        return response


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)```", re.DOTALL)
_SQL_VERB_RE = re.compile(
    r"^\s*(select|with|values|insert|update|delete|replace|create|drop|alter|pragma)\b",
    re.IGNORECASE,
)


def parse_sql(response_text: str) -> str:
    """Extract SQL from a model response.

    Takes the last fenced code block when one exists, otherwise the last
    statement starting with a SQL verb; the trailing semicolon is stripped.
    """
    text = response_text or ""
    blocks = _FENCE_RE.findall(text)
    candidate = None
    if blocks:
        candidate = blocks[-1].strip()
    else:
        lines = text.splitlines()
        start = None
        for i, line in enumerate(lines):
            if _SQL_VERB_RE.match(line):
                start = i
        if start is not None:
            candidate = "\n".join(lines[start:]).strip()
    if not candidate:
        raise SqlNotFound("no SQL statement found in response")
    candidate = candidate.rstrip()
    while candidate.endswith(";"):
        candidate = candidate[:-1].rstrip()
    if not candidate:
        raise SqlNotFound("empty SQL statement")
    return candidate
