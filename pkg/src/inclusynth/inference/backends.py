from __future__ import annotations

import os
from typing import Protocol

import httpx

from ..errors import AuthError, BackendError
from ..prompts import PromptInstance
from .endpoints import ModelEndpoint


class Backend(Protocol):
    async def preflight(self, endpoint: ModelEndpoint) -> None: ...

    async def complete(self, endpoint: ModelEndpoint, instance: PromptInstance) -> tuple[str, float | None]:
        """Return the response text and, if the backend knows it, the latency."""
        ...

    async def aclose(self) -> None: ...


class ChatCompletionsBackend:
    """Client for the common ``POST {base_url}/chat/completions`` JSON protocol."""

    def __init__(self, client: httpx.AsyncClient | None = None, timeout: float = 60.0):
        self._client = client
        self._own_client = client is None
        self._timeout = timeout

    @property
    def client(self) -> httpx.AsyncClient:
        if self._client is None:
            self._client = httpx.AsyncClient(timeout=self._timeout)
        return self._client

    def _headers(self, endpoint: ModelEndpoint) -> dict[str, str]:
        if not endpoint.api_key_env:
            return {}
        key = os.environ.get(endpoint.api_key_env)
        if not key:
            raise AuthError(f"{endpoint.model_id}: environment variable {endpoint.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}"}

    async def preflight(self, endpoint: ModelEndpoint) -> None:
        headers = self._headers(endpoint)
        try:
            resp = await self.client.get(endpoint.base_url.rstrip("/") + "/models", headers=headers)
        except httpx.HTTPError:
            return  # reachability problems surface per request and are retried
        if resp.status_code in (401, 403):
            raise AuthError(f"{endpoint.model_id}: authentication rejected ({resp.status_code})")

    async def complete(self, endpoint: ModelEndpoint, instance: PromptInstance) -> tuple[str, float | None]:
        payload = {
            "model": endpoint.model_name,
            "messages": [{"role": "user", "content": instance.rendered_text}],
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens,
        }
        try:
            resp = await self.client.post(
                endpoint.base_url.rstrip("/") + "/chat/completions", json=payload, headers=self._headers(endpoint)
            )
        except httpx.HTTPError as exc:
            raise BackendError(f"{endpoint.model_id}: {type(exc).__name__}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"{endpoint.model_id}: authentication rejected ({resp.status_code})")
        if resp.status_code >= 400:
            raise BackendError(f"{endpoint.model_id}: HTTP {resp.status_code}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{endpoint.model_id}: malformed completion payload") from exc
        return content or "", None

    async def aclose(self) -> None:
        if self._own_client and self._client is not None:
            await self._client.aclose()
            self._client = None
