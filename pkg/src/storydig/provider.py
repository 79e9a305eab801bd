"""Completion backends: one live HTTP chat client, one scripted test double.

The live client speaks the common chat-completion dialect (messages array +
temperature) against any compatible base URL, so the engine stays
model-agnostic. Request/response shapes, retry schedule, and error mapping
are documented bit-exact in PROVIDER.md.

The API key is read from the environment variable named in
ProviderConfig.api_key_source (default TOMB_API_KEY); the key value itself
never appears in logs, errors, or serialized state.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from .errors import (
    AuthFailed,
    ContentFiltered,
    ERRORS_BY_CODE,
    InvalidParams,
    MalformedResponse,
    ProviderTimeout,
    ProviderUnavailable,
    RateLimited,
    ScriptExhausted,
    StoryError,
)
from .model import check_gen_params
from .prompts import PROMPT_KINDS, PromptBundle

logger = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "TOMB_API_KEY"
DEFAULT_MAX_OUTPUT_TOKENS = 1024

# Retry schedule: base 500 ms, doubling per attempt, +/-20% jitter.
BACKOFF_BASE_SECONDS = 0.5
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2


@dataclass
class CompletionResult:
    text: str
    provider_name: str
    model_name: str
    latency_ms: int
    finish_reason: str = "stop"


@dataclass
class ProviderConfig:
    base_url: str = ""
    model_name: str = ""
    api_key_source: str = DEFAULT_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 3
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    @classmethod
    def from_env(cls) -> "ProviderConfig":
        return cls(
            base_url=os.environ.get("TOMB_BASE_URL", ""),
            model_name=os.environ.get("TOMB_MODEL", ""),
        )


class HttpProvider:
    """Chat-completion client with bounded retries on transient failures.

    `sleep` and `rng` are injectable so tests can pin the backoff schedule;
    `cancel` (a threading.Event) aborts further retries when the caller
    abandons the request.
    """

    name = "http"

    def __init__(
        self,
        config: ProviderConfig,
        *,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        if config.timeout <= 0:
            raise InvalidParams("provider timeout must be positive")
        if config.max_retries < 0:
            raise InvalidParams("max_retries must be >= 0")
        self._config = config
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()

    def complete(self, bundle: PromptBundle, cancel: threading.Event | None = None) -> CompletionResult:
        check_gen_params(bundle.params)
        cfg = self._config
        if not cfg.base_url:
            raise ProviderUnavailable("no provider base URL configured (set TOMB_BASE_URL)")
        api_key = os.environ.get(cfg.api_key_source)
        if not api_key:
            raise AuthFailed(f"environment variable {cfg.api_key_source} is not set")

        body = {
            "model": cfg.model_name,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
            "temperature": bundle.params.temperature,
            "max_tokens": cfg.max_output_tokens,
            "stream": False,
        }
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}

        started = time.monotonic()
        pending: StoryError | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt > 0:
                if cancel is not None and cancel.is_set():
                    logger.info("completion abandoned after %d attempt(s)", attempt)
                    raise pending  # type: ignore[misc]
                delay = BACKOFF_BASE_SECONDS * (BACKOFF_FACTOR ** (attempt - 1))
                delay *= 1 + self._rng.uniform(-BACKOFF_JITTER, BACKOFF_JITTER)
                self._sleep(delay)
            try:
                response = self._session.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except requests.Timeout:
                pending = ProviderTimeout(f"no response within {cfg.timeout}s")
                logger.warning("provider timeout (attempt %d/%d)", attempt + 1, cfg.max_retries + 1)
                continue
            except requests.RequestException as exc:
                pending = ProviderUnavailable(f"transport error: {exc.__class__.__name__}")
                logger.warning("provider transport error (attempt %d): %s", attempt + 1, exc)
                continue

            if response.status_code in (401, 403):
                raise AuthFailed(f"provider rejected credentials from {cfg.api_key_source}")
            if response.status_code == 429:
                pending = RateLimited("provider rate limit")
                logger.warning("rate limited (attempt %d/%d)", attempt + 1, cfg.max_retries + 1)
                continue
            if response.status_code >= 500:
                pending = ProviderUnavailable(f"provider returned {response.status_code}")
                logger.warning("provider 5xx %d (attempt %d)", response.status_code, attempt + 1)
                continue
            if response.status_code != 200:
                raise MalformedResponse(
                    f"unexpected status {response.status_code}",
                    status=response.status_code,
                    body_excerpt=response.text[:200],
                )
            return self._parse(response.text, started)

        raise pending  # type: ignore[misc]

    def _parse(self, raw: str, started: float) -> CompletionResult:
        try:
            data = json.loads(raw)
            choice = data["choices"][0]
            content = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(
                f"unparseable completion body: {exc.__class__.__name__}",
                body_excerpt=raw[:200],
            ) from exc
        if not isinstance(content, str):
            raise MalformedResponse("completion content is not a string", body_excerpt=raw[:200])
        if finish == "content_filter":
            raise ContentFiltered("provider filtered the completion")
        latency_ms = int((time.monotonic() - started) * 1000)
        return CompletionResult(
            text=content.strip(),
            provider_name=self.name,
            model_name=self._config.model_name,
            latency_ms=latency_ms,
            finish_reason=finish if finish in ("stop", "length") else "stop",
        )


def complete(bundle: PromptBundle, config: ProviderConfig) -> CompletionResult:
    return HttpProvider(config).complete(bundle)


# ── scripted provider ────────────────────────────────────────────────────

@dataclass
class ScriptedResponses:
    """Per-kind FIFO queues of canned responses for deterministic tests.

    An entry is either a response string or {"error": CODE[, "message"]} to
    inject the corresponding provider failure. Consumed bundles are recorded
    so tests can assert on the prompts that were actually sent.
    """

    queues: dict[str, deque] = field(default_factory=dict)
    consumed: list[tuple[str, PromptBundle]] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedResponses":
        queues: dict[str, deque] = {}
        for kind, entries in data.items():
            if kind not in PROMPT_KINDS:
                raise InvalidParams(f"unknown prompt kind {kind!r} in script")
            if not isinstance(entries, list):
                raise InvalidParams(f"script entries for {kind!r} must be a list")
            queues[kind] = deque(entries)
        return cls(queues=queues)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedResponses":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise InvalidParams("script file must hold a JSON object")
        return cls.from_dict(data)

    def remaining(self) -> dict[str, int]:
        return {kind: len(q) for kind, q in self.queues.items()}


def scripted_complete(bundle: PromptBundle, script: ScriptedResponses) -> CompletionResult:
    queue = script.queues.get(bundle.kind)
    if not queue:
        raise ScriptExhausted(f"no scripted response left for kind {bundle.kind!r}", kind=bundle.kind)
    entry = queue.popleft()
    script.consumed.append((bundle.kind, bundle))
    if isinstance(entry, dict):
        code = entry.get("error", "PROVIDER_ERROR")
        err_cls = ERRORS_BY_CODE.get(code)
        if err_cls is None:
            raise InvalidParams(f"script error entry has unknown code {code!r}")
        raise err_cls(entry.get("message", f"scripted {code}"))
    if not isinstance(entry, str):
        raise InvalidParams("script entries must be strings or error objects")
    return CompletionResult(
        text=entry,
        provider_name="scripted",
        model_name="scripted",
        latency_ms=0,
        finish_reason="stop",
    )


class ScriptedProvider:
    """Provider facade over ScriptedResponses (same .complete interface)."""

    name = "scripted"

    def __init__(self, script: ScriptedResponses):
        self.script = script

    def complete(self, bundle: PromptBundle, cancel: threading.Event | None = None) -> CompletionResult:
        check_gen_params(bundle.params)
        return scripted_complete(bundle, self.script)
