"""Chat-completion access with bounded retries and a hashed call log."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
API_KEY_ENV = "BOAD_API_KEY"
API_BASE_ENV = "BOAD_API_BASE"


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    """The provider could not be reached within the retry budget."""


class ProtocolError(GatewayError):
    """The provider answered with a non-success status or an unusable body."""


@dataclass(frozen=True)
class ChatExchange:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    model_name: str = "default"
    max_output: int | None = None
    # which prompt asset produced the first user turn; never sent on the wire
    template_id: str | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("an exchange needs at least one message")
        for role, content in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
            if not isinstance(content, str):
                raise ValueError("message content must be text")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("the first message must come from system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output is not None and self.max_output < 1:
            raise ValueError("max_output must be positive")

    @classmethod
    def user(cls, prompt: str, **kw) -> "ChatExchange":
        return cls(messages=(("user", prompt),), **kw)

    def followup(self, assistant: str, user: str) -> "ChatExchange":
        return ChatExchange(
            messages=self.messages + (("assistant", assistant), ("user", user)),
            temperature=self.temperature,
            model_name=self.model_name,
            max_output=self.max_output,
            template_id=self.template_id,
        )

    def content_hash(self) -> str:
        payload = json.dumps(
            {"messages": [list(m) for m in self.messages], "temperature": self.temperature,
             "model": self.model_name, "max_output": self.max_output},
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_payload(self) -> dict:
        body = {
            "model": self.model_name,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
        }
        if self.max_output is not None:
            body["max_tokens"] = self.max_output
        return body


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = ""
    credential_env: str = API_KEY_ENV
    timeout: float = 120.0
    retry_budget: int = 2
    backoff: float = 0.5
    max_in_flight: int | None = None

    @classmethod
    def from_env(cls, **kw) -> "ProviderConfig":
        return cls(base_url=os.environ.get(API_BASE_ENV, ""), **kw)

    def credential(self) -> str | None:
        return os.environ.get(self.credential_env)

    def to_dict(self) -> dict:
        # only the variable name is persisted, never its value
        return {
            "base_url": self.base_url,
            "credential_env": self.credential_env,
            "timeout": self.timeout,
            "retry_budget": self.retry_budget,
        }


class Provider(Protocol):
    def send(self, exchange: ChatExchange) -> str: ...


class HttpProvider:
    """POSTs to ``{base_url}/chat/completions`` and reads ``choices[0].message.content``.

    ``send`` raises :class:`TransportError` for connection-level failures and
    5xx/429 answers (both retryable) and :class:`ProtocolError` otherwise.
    """

    retryable_status = frozenset({429, 500, 502, 503, 504})

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        if not config.base_url:
            raise GatewayError(f"no provider base URL; set {API_BASE_ENV}")
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)

    def send(self, exchange: ChatExchange) -> str:
        headers = {"Content-Type": "application/json"}
        key = self.config.credential()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self.client.post(url, json=exchange.to_payload(), headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code in self.retryable_status:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        if not 200 <= resp.status_code < 300:
            raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:2000]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion body: {resp.text[:2000]}") from exc


@dataclass
class CallRecord:
    prompt_hash: str
    response_hash: str | None
    latency_s: float
    attempts: int
    template_id: str | None
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Gateway:
    """A provider plus retry policy, in-flight throttle and call log."""

    provider: Provider
    config: ProviderConfig = field(default_factory=ProviderConfig)
    sink: Callable[[CallRecord], None] | None = None
    sleep: Callable[[float], None] = time.sleep
    records: list[CallRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        limit = self.config.max_in_flight
        self._slots = threading.BoundedSemaphore(limit) if limit else None

    def _log(self, record: CallRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self.sink is not None:
                self.sink(record)

    def complete(self, exchange: ChatExchange) -> str:
        start = time.perf_counter()
        attempts = 0
        last: Exception | None = None
        if self._slots:
            self._slots.acquire()
        try:
            while attempts <= self.config.retry_budget:
                attempts += 1
                try:
                    text = self.provider.send(exchange)
                except TransportError as exc:
                    last = exc
                    log.warning("transport failure (attempt %d): %s", attempts, exc)
                    if attempts <= self.config.retry_budget:
                        self.sleep(self.config.backoff * 2 ** (attempts - 1))
                    continue
                except GatewayError as exc:
                    last = exc
                    break
                self._log(CallRecord(
                    exchange.content_hash(),
                    hashlib.sha256(text.encode("utf-8")).hexdigest(),
                    time.perf_counter() - start, attempts, exchange.template_id,
                ))
                return text
        finally:
            if self._slots:
                self._slots.release()
        self._log(CallRecord(exchange.content_hash(), None, time.perf_counter() - start,
                             attempts, exchange.template_id, error=str(last)))
        if isinstance(last, TransportError):
            raise TransportError(f"gave up after {attempts} attempts: {last}") from last
        raise last  # type: ignore[misc]


def complete(exchange: ChatExchange, provider: ProviderConfig | Provider, **kw) -> str:
    """One-shot helper: a mock/provider object or an HTTP config."""
    if isinstance(provider, ProviderConfig):
        return Gateway(HttpProvider(provider), provider, **kw).complete(exchange)
    return Gateway(provider, **kw).complete(exchange)
