"""Minimal blocking client for an OpenAI-compatible chat-completions endpoint.

Request body::

    {"model": <model>, "messages": [{"role": "user", "content": <prompt>}], "temperature": 0}

sent as ``POST <base_url>/chat/completions`` with ``Authorization: Bearer <key>``
when the key variable is set. The completion text is read from
``choices[0].message.content`` (chat) or ``choices[0].text`` (legacy completions).
"""
from __future__ import annotations

import json
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import NonSuccessStatus, Timeout, TransportError

ENV_URL = "OFFROADNAV_LLM_URL"
ENV_MODEL = "OFFROADNAV_LLM_MODEL"
ENV_KEY = "OFFROADNAV_LLM_API_KEY"


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str = "gpt-3.5-turbo"
    api_key_env: str = ENV_KEY
    timeout_s: float = 30.0
    max_retries: int = 1

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        kwargs = {
            "base_url": os.environ.get(ENV_URL, "https://api.openai.com/v1"),
            "model": os.environ.get(ENV_MODEL, "gpt-3.5-turbo"),
        }
        kwargs.update(overrides)
        return cls(**kwargs)


def _request_body(prompt: str, model: str) -> bytes:
    body = {
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    }
    return json.dumps(body).encode("utf-8")


def _completion_text(payload: dict) -> str:
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"unexpected response shape: {payload!r}") from exc
    if isinstance(choice.get("message"), dict):
        return choice["message"]["content"]
    if "text" in choice:
        return choice["text"]
    raise TransportError(f"unexpected response shape: {payload!r}")


def _post_once(prompt: str, endpoint: EndpointConfig) -> str:
    if endpoint.timeout_s <= 0:
        raise Timeout("timeout must be positive")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(endpoint.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    req = urllib.request.Request(url, data=_request_body(prompt, endpoint.model), headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=endpoint.timeout_s) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        raise NonSuccessStatus(exc.code, exc.read().decode("utf-8", "replace")) from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise Timeout(str(exc.reason)) from exc
        raise TransportError(str(exc.reason)) from exc
    except (socket.timeout, TimeoutError) as exc:
        raise Timeout(str(exc)) from exc
    except OSError as exc:
        raise TransportError(str(exc)) from exc
    try:
        payload = json.loads(raw.decode("utf-8"))
    except ValueError as exc:
        raise TransportError("response is not JSON") from exc
    return _completion_text(payload)


def request_completion(prompt: str, endpoint: EndpointConfig) -> str:
    """Send one prompt and return the raw completion text.

    Transport failures, timeouts and 5xx responses are retried at most
    ``endpoint.max_retries`` times; the last error is re-raised.
    """
    attempts = 1 + max(0, endpoint.max_retries)
    for attempt in range(attempts):
        try:
            return _post_once(prompt, endpoint)
        except NonSuccessStatus as exc:
            if exc.status < 500 or attempt == attempts - 1:
                raise
        except (Timeout, TransportError):
            if endpoint.timeout_s <= 0 or attempt == attempts - 1:
                raise
    raise AssertionError("unreachable")
