"""Text-generation backends behind one gateway.

Two backends: ``HttpBackend`` talks to a chat-completions style endpoint,
``MockBackend`` is a scripted stand-in whose output is a pure function of
(script, seed, prompt hash, rollout index).  ``Gateway`` adds the per-backend
in-flight bound, positional batching, and the rollout-cache lookup.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import httpx
import numpy as np

from .errors import BackendError, BackendTimeout, ConfigError, ProtocolError

log = logging.getLogger(__name__)

API_KEY_ENV = "CBU_GATEWAY_API_KEY"
DEFAULT_MAX_NEW_TOKENS = 16384
RETRY_STATUSES = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    seed: Optional[int] = None

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "max_new_tokens": self.max_new_tokens, "seed": self.seed}

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def prompt_hash(template_id: str, prompt: str, sampling: SamplingParams) -> str:
    h = hashlib.sha256()
    for part in (template_id, prompt, json.dumps(sampling.to_dict(), sort_keys=True)):
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    return h.hexdigest()


@dataclass(frozen=True)
class GenerationRequest:
    backend_id: str
    prompt: str
    sampling: SamplingParams = SamplingParams()
    index: int = 0
    template_id: str = ""

    def __post_init__(self):
        if self.index < 0:
            raise ConfigError("rollout index must be >= 0")

    @property
    def prompt_hash(self) -> str:
        return prompt_hash(self.template_id, self.prompt, self.sampling)


@dataclass(frozen=True)
class Generation:
    """Outcome of one request; exactly one of ``completion``/``error`` is set."""

    request: GenerationRequest
    completion: Optional[str] = None
    error: Optional[Exception] = None
    cached: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None


# -- mock -------------------------------------------------------------------
@dataclass(frozen=True)
class MockRule:
    matcher: Union[str, Callable[[str], bool]]
    success_prob: float
    correct_completion: str
    wrong_completion: str

    def __post_init__(self):
        if not 0.0 <= self.success_prob <= 1.0:
            raise ConfigError(f"success_prob {self.success_prob} outside [0, 1]")

    def matches(self, prompt: str) -> bool:
        if callable(self.matcher):
            return bool(self.matcher(prompt))
        return re.search(self.matcher, prompt) is not None


@dataclass(frozen=True)
class MockScript:
    rules: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ConfigError("mock script needs at least one rule")
        last = self.rules[-1]
        if callable(last.matcher) or last.matcher not in ("", ".*", "(?s).*"):
            raise ConfigError("the last mock rule must be a catch-all (matcher '' or '.*')")

    @classmethod
    def from_dict(cls, d: dict) -> "MockScript":
        rules = [
            MockRule(r.get("matcher", ""), float(r["success_prob"]), r["correct_completion"], r["wrong_completion"])
            for r in d["rules"]
        ]
        return cls(tuple(rules), int(d.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "MockScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rules": [
                {
                    "matcher": r.matcher,
                    "success_prob": r.success_prob,
                    "correct_completion": r.correct_completion,
                    "wrong_completion": r.wrong_completion,
                }
                for r in self.rules
            ],
        }


def mock_uniform(seed: int, prompt_digest: str, index: int) -> float:
    """The uniform draw the mock uses for one (prompt, rollout) pair."""
    words = [int(prompt_digest[i:i + 8], 16) for i in range(0, 64, 8)]
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, *words, index])
    return float(np.random.Generator(np.random.PCG64(ss)).random())


class MockBackend:
    def __init__(self, script: MockScript):
        self.script = script

    def rule_for(self, prompt: str) -> MockRule:
        for rule in self.script.rules:
            if rule.matches(prompt):
                return rule
        raise ConfigError("no mock rule matched")  # unreachable with a catch-all

    def complete(self, request: GenerationRequest) -> str:
        rule = self.rule_for(request.prompt)
        u = mock_uniform(self.script.seed, request.prompt_hash, request.index)
        return rule.correct_completion if u < rule.success_prob else rule.wrong_completion


# -- http -------------------------------------------------------------------
@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model_name: str
    max_in_flight: int = 8
    max_attempts: int = 4
    backoff_base_ms: int = 500
    timeout_ms: int = 600_000
    temperature: Optional[float] = None

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "max_in_flight": self.max_in_flight,
            "retry": {"max_attempts": self.max_attempts, "backoff_base_ms": self.backoff_base_ms},
            "timeout_ms": self.timeout_ms,
            "temperature": self.temperature,
        }


class HttpBackend:
    def __init__(self, config: BackendConfig, client: Optional[httpx.Client] = None, sleep=time.sleep):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout_ms / 1000)
        self._sleep = sleep
        self._rng = random.Random()

    def _payload(self, request: GenerationRequest) -> dict:
        s = request.sampling
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": s.max_new_tokens,
            "temperature": s.temperature,
        }
        if s.seed is not None:
            body["seed"] = s.seed + request.index
        return body

    def _backoff(self, attempt: int) -> float:
        # full jitter
        return self._rng.uniform(0, self.config.backoff_base_ms * (2 ** attempt)) / 1000

    def complete(self, request: GenerationRequest) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = self._payload(request)
        last_exc: Exception = BackendError("no attempt made")
        attempts = self.config.max_attempts
        for attempt in range(attempts):
            try:
                resp = self._client.post(self.config.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_exc = BackendTimeout(f"request timed out: {exc}", attempt + 1)
            except httpx.TransportError as exc:
                last_exc = BackendError(f"transport failure: {exc}", attempt + 1)
            else:
                if resp.status_code in RETRY_STATUSES:
                    last_exc = ProtocolError(f"HTTP {resp.status_code}", resp.status_code, attempt + 1)
                elif resp.status_code >= 400:
                    raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}", resp.status_code, attempt + 1)
                else:
                    return self._text(resp, attempt + 1)
            if attempt + 1 < attempts:
                self._sleep(self._backoff(attempt))
        if isinstance(last_exc, BackendTimeout):
            raise BackendTimeout(f"timed out after {attempts} attempts", attempts)
        if isinstance(last_exc, ProtocolError):
            raise ProtocolError(f"{last_exc} after {attempts} attempts", last_exc.status, attempts)
        raise BackendError(f"{last_exc} (gave up after {attempts} attempts)", attempts)

    @staticmethod
    def _text(resp: httpx.Response, attempts: int) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ProtocolError("malformed chat-completions response", resp.status_code, attempts) from None
        if not isinstance(content, str):
            raise ProtocolError("response content is not text", resp.status_code, attempts)
        return content


# -- gateway ----------------------------------------------------------------
@dataclass
class GatewayStats:
    calls: int = 0
    cache_hits: int = 0
    in_flight: dict = field(default_factory=dict)
    peak_in_flight: dict = field(default_factory=dict)


class Gateway:
    """Routes requests to registered backends.

    ``cache`` is anything with ``lookup(request) -> Optional[str]`` (the run
    store provides one); hits never reach the backend.
    """

    def __init__(self, cache=None):
        self._backends: dict[str, object] = {}
        self._limits: dict[str, threading.BoundedSemaphore] = {}
        self._max: dict[str, int] = {}
        self._lock = threading.Lock()
        self.cache = cache
        self.stats = GatewayStats()

    def register(self, backend_id: str, backend, max_in_flight: int = 8):
        if max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        self._backends[backend_id] = backend
        self._limits[backend_id] = threading.BoundedSemaphore(max_in_flight)
        self._max[backend_id] = max_in_flight
        self.stats.in_flight[backend_id] = 0
        self.stats.peak_in_flight[backend_id] = 0

    @property
    def backend_ids(self) -> list[str]:
        return sorted(self._backends)

    def _track(self, backend_id: str, delta: int):
        with self._lock:
            cur = self.stats.in_flight[backend_id] + delta
            self.stats.in_flight[backend_id] = cur
            if cur > self.stats.peak_in_flight[backend_id]:
                self.stats.peak_in_flight[backend_id] = cur

    def generate(self, request: GenerationRequest) -> str:
        if not request.prompt:
            raise ConfigError("prompt must be non-empty")
        if request.backend_id not in self._backends:
            raise ConfigError(f"backend {request.backend_id!r} is not configured")
        return self._run(request).completion_or_raise()

    def _run(self, request: GenerationRequest) -> "_Outcome":
        if self.cache is not None:
            hit = self.cache.lookup(request)
            if hit is not None:
                with self._lock:
                    self.stats.cache_hits += 1
                return _Outcome(hit, None, True)
        backend = self._backends[request.backend_id]
        with self._limits[request.backend_id]:
            self._track(request.backend_id, +1)
            try:
                with self._lock:
                    self.stats.calls += 1
                return _Outcome(backend.complete(request), None, False)
            except BackendError as exc:
                return _Outcome(None, exc, False)
            finally:
                self._track(request.backend_id, -1)

    def generate_batch(self, requests) -> list[Generation]:
        requests = list(requests)
        if not requests:
            return []
        for r in requests:
            if r.backend_id not in self._backends:
                raise ConfigError(f"backend {r.backend_id!r} is not configured")
        workers = min(len(requests), sum(self._max[b] for b in {r.backend_id for r in requests}))

        def one(req):
            if not req.prompt:
                return _Outcome(None, ConfigError("prompt must be non-empty"), False)
            return self._run(req)

        if workers == 1:
            outcomes = [one(r) for r in requests]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(one, requests))
        return [Generation(r, o.completion, o.error, o.cached) for r, o in zip(requests, outcomes)]


@dataclass(frozen=True)
class _Outcome:
    completion: Optional[str]
    error: Optional[Exception]
    cached: bool

    def completion_or_raise(self) -> str:
        if self.error is not None:
            raise self.error
        return self.completion
