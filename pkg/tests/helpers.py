"""Shared test utilities: in-process server harness and a tiny ws client."""

from __future__ import annotations

import asyncio
import contextlib

from websockets.asyncio.client import connect

from calmrelay import protocol
from calmrelay.config import RoomConfig, ServerConfig
from calmrelay.server import RelayServer


@contextlib.asynccontextmanager
async def running_server(room: RoomConfig | None = None, **server_kwargs):
    cfg = ServerConfig(port=0, room=room or RoomConfig(seed=1234), **server_kwargs)
    server = RelayServer(cfg)
    await server.start()
    try:
        yield server, f"ws://127.0.0.1:{server.port}/ws"
    finally:
        await server.stop()


class WsClient:
    def __init__(self, ws):
        self.ws = ws

    @classmethod
    async def open(cls, url, room=None, role=None, mode=None):
        ws = await connect(url, subprotocols=[protocol.SUBPROTOCOL])
        client = cls(ws)
        if room is not None:
            await client.send(protocol.hello(room, role, mode))
        return client

    async def send(self, msg: dict):
        await self.ws.send(protocol.encode(msg))

    async def send_raw(self, text: str):
        await self.ws.send(text)

    async def recv(self, timeout=5.0) -> dict:
        return protocol.decode(await self.recv_raw(timeout))

    async def recv_raw(self, timeout=5.0):
        try:
            return await asyncio.wait_for(self.ws.recv(), timeout)
        except asyncio.TimeoutError:
            raise TimeoutError("no message within timeout") from None

    async def recv_until(self, predicate, timeout=5.0) -> dict:
        deadline = asyncio.get_running_loop().time() + timeout
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                raise TimeoutError("no matching message")
            msg = await self.recv(timeout=remaining)
            if predicate(msg):
                return msg

    async def close(self):
        await self.ws.close()
