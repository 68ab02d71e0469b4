"""Blocking JSON-over-HTTP client for a remote text-completion endpoint.

Request body: ``{"prompt": str, "temperature": float}`` or, in chat form,
``{"messages": [{"role", "content"}, ...], "temperature": float}``.
Response body: ``{"text": str}``.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import RemoteParseError, RemoteUnavailable
from .prompts import Prompt

log = logging.getLogger(__name__)

API_KEY_ENV = "BAR_REMOTE_API_KEY"


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    timeout: float = 60.0
    retries: int = 1
    temperature: float = 0.0
    chat: bool = False

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ValueError("remote backend needs an endpoint URL")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


class RemoteClient:
    """One session against the endpoint; holds no mutable state."""

    def __init__(self, config: RemoteConfig) -> None:
        self.config = config

    def _body(self, prompt: Prompt) -> bytes:
        payload: dict = {"temperature": self.config.temperature}
        if self.config.chat:
            payload["messages"] = prompt.messages()
        else:
            payload["prompt"] = prompt.text
        return json.dumps(payload).encode("utf-8")

    def _request(self, body: bytes) -> urllib.request.Request:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return urllib.request.Request(self.config.endpoint, data=body, headers=headers, method="POST")

    def complete(self, prompt: Prompt) -> str:
        body = self._body(prompt)
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            try:
                with urllib.request.urlopen(self._request(body), timeout=self.config.timeout) as resp:
                    raw = resp.read().decode("utf-8", errors="replace")
                break
            except (urllib.error.URLError, socket.timeout, ConnectionError, TimeoutError) as exc:
                last = exc
                log.warning("remote call attempt %d failed: %s", attempt + 1, exc)
        else:
            raise RemoteUnavailable(f"{self.config.endpoint}: {last}")
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            raise RemoteParseError(raw, "response is not JSON") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise RemoteParseError(raw, "response lacks a 'text' string")
        return doc["text"]
