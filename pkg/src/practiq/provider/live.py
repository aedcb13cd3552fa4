"""HTTP chat-completion adapter with bounded retries and rate limiting."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from collections import deque

import httpx

from practiq.errors import ProviderRefusal, RateLimited
from practiq.provider.base import ProviderRequest, ProviderResponse

log = logging.getLogger(__name__)

ENV_ENDPOINT = "PRACTIQ_LLM_ENDPOINT"
ENV_MODEL = "PRACTIQ_LLM_MODEL"
ENV_KEY = "PRACTIQ_LLM_KEY"

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class _MinuteBudget:
    """Sliding one-minute window of request start times."""

    def __init__(self, rpm: int, clock=time.monotonic, sleep=time.sleep):
        self.rpm = rpm
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep

    def acquire(self) -> None:
        if self.rpm <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.rpm:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleep(max(wait, 0.01))


class LiveProvider:
    def __init__(
        self,
        endpoint: str,
        model: str,
        key: str | None = None,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 30.0,
        max_concurrency: int = 4,
        rpm: int = 60,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.key = key
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.provider_id = f"live:{model}"
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._budget = _MinuteBudget(rpm, sleep=sleep)
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._jitter = random.Random(0)

    @classmethod
    def from_env(cls, **kwargs) -> "LiveProvider":
        endpoint = os.environ.get(ENV_ENDPOINT)
        model = os.environ.get(ENV_MODEL)
        if not endpoint or not model:
            raise ProviderRefusal(f"set {ENV_ENDPOINT} and {ENV_MODEL} to use the live provider")
        return cls(endpoint, model, os.environ.get(ENV_KEY), **kwargs)

    def backoff(self, attempt: int) -> float:
        delay = min(self.backoff_cap, self.backoff_base * (2**attempt))
        return delay * (0.5 + 0.5 * self._jitter.random())

    def _body(self, request: ProviderRequest) -> dict:
        return {
            "model": self.model,
            "messages": request.wire_messages(),
            "temperature": request.decode.temperature,
            "top_p": request.decode.top_p,
            "max_tokens": request.decode.max_tokens,
        }

    def complete(self, request: ProviderRequest) -> ProviderResponse:
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        body = self._body(request)
        last = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff(attempt - 1))
            self._budget.acquire()
            with self._slots:
                try:
                    resp = self._client.post(self.endpoint, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last = f"transport: {exc}"
                    log.warning("%s attempt %d failed: %s", request.task.value, attempt + 1, last)
                    continue
            if resp.status_code in RETRYABLE_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("%s attempt %d: %s", request.task.value, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise ProviderRefusal(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp)
        raise RateLimited(f"{request.task.value}: gave up after {self.max_retries + 1} attempts ({last})")

    def _parse(self, resp: httpx.Response) -> ProviderResponse:
        try:
            data = resp.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderRefusal(f"malformed completion payload: {exc}") from None
        if text is None or choice.get("finish_reason") == "content_filter":
            raise ProviderRefusal("completion refused by the endpoint")
        return ProviderResponse(text, dict(data.get("usage") or {}), self.provider_id)
