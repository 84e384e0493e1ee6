"""HTTP client factory for the service.

``service_client(None)`` runs the service embedded in the calling process
by bridging httpx's sync API onto the ASGI app (one event loop per
request; plenty for a CLI). ``service_client(url)`` talks to a remote
instance over the network with the exact same request/response surface.
"""
from __future__ import annotations

import asyncio

import httpx


class EmbeddedTransport(httpx.BaseTransport):
    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def _send() -> tuple[int, list, bytes]:
            response = await self._asgi.handle_async_request(request)
            body = await response.aread()
            await response.aclose()
            return response.status_code, list(response.headers.raw), body

        status, headers, body = asyncio.run(_send())
        return httpx.Response(status, headers=headers, content=body, request=request)


def service_client(server: str | None = None, timeout: float = 600.0) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=timeout)
    from .app import create_app

    return httpx.Client(
        base_url="http://atomnlu.local",
        transport=EmbeddedTransport(create_app()),
        timeout=timeout,
    )
