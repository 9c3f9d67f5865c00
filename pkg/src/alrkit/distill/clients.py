"""Chat-completion transports for the teacher and judge models."""
from __future__ import annotations

import base64
import mimetypes
import os
import time
from pathlib import Path
from typing import Callable, Protocol

import httpx


class TransportError(RuntimeError):
    """The remote model could not be reached or returned an unusable reply."""


class ChatClient(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class StubClient:
    """In-process client; ``respond`` maps the message list to a reply string."""

    def __init__(self, respond: Callable[[list[dict]], str]):
        self.respond = respond
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        return self.respond(messages)


def _inline_image(url: str) -> str:
    path = Path(url)
    if url.startswith(("http://", "https://", "data:")) or not path.is_file():
        return url
    mime = mimetypes.guess_type(path.name)[0] or "image/png"
    return f"data:{mime};base64,{base64.b64encode(path.read_bytes()).decode('ascii')}"


class HttpChatClient:
    """OpenAI-style ``/chat/completions`` client. Local image paths are inlined as data URLs."""

    def __init__(self, url: str, key: str | None = None, model: str = "", timeout: float = 120.0):
        self.url = url
        self.key = key
        self.model = model
        self.timeout = timeout

    @classmethod
    def from_env(cls, prefix: str) -> "HttpChatClient":
        url = os.environ.get(f"{prefix}_URL")
        if not url:
            raise ValueError(f"{prefix}_URL is not set")
        return cls(url, os.environ.get(f"{prefix}_KEY"), os.environ.get(f"{prefix}_MODEL", ""))

    def _encode(self, messages: list[dict]) -> list[dict]:
        out = []
        for msg in messages:
            content = msg["content"]
            if isinstance(content, list):
                content = [
                    {"type": "image_url", "image_url": {"url": _inline_image(part["image_url"]["url"])}}
                    if part.get("type") == "image_url" else part
                    for part in content
                ]
            out.append({**msg, "content": content})
        return out

    def complete(self, messages: list[dict]) -> str:
        headers = {"Authorization": f"Bearer {self.key}"} if self.key else {}
        body = {"model": self.model, "messages": self._encode(messages), "temperature": 0}
        try:
            resp = httpx.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc


def call_with_retries(client: ChatClient, messages: list[dict], attempts: int = 3,
                      base_delay: float = 1.0, sleep: Callable[[float], None] = time.sleep) -> str:
    """Call ``client`` with exponential backoff; raise ``TransportError`` after ``attempts``."""
    last = None
    for i in range(attempts):
        try:
            return client.complete(messages)
        except TransportError as exc:
            last = exc
            if i + 1 < attempts:
                sleep(base_delay * 2 ** i)
    raise TransportError(f"gave up after {attempts} attempts: {last}")
