"""Websocket relay service: rooms, ingestion, tick broadcast, static UI.

One asyncio process hosts any number of rooms. Each room's state is mutated
only from its own handlers and tick task on the single event loop; a slow or
misbehaving client can only ever lose its own frames (bounded per-connection
outbound queues drop the oldest frame on overflow).
"""

from __future__ import annotations

import asyncio
import logging
import mimetypes
import os
import signal
import time

from websockets.asyncio.server import serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from . import protocol
from .config import ServerConfig
from .model import NOD, SampleRejected
from .recorder import SessionRecorder
from .rooms import Room, RoomFull

logger = logging.getLogger(__name__)

HELLO_TIMEOUT_S = 10.0
MALFORMED_DISCONNECT = 100  # consecutive bad inbound messages
OUTBOUND_QUEUE = 8  # frames buffered per connection before dropping oldest


class MemberConn:
    """One connected member: its socket and bounded outbound queue."""

    def __init__(self, member_id: str, role: str, conn):
        self.id = member_id
        self.role = role
        self.conn = conn
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=OUTBOUND_QUEUE)
        self.dropped_frames = 0
        self.sender = asyncio.create_task(self._send_loop())

    def push(self, text: str) -> None:
        while self.queue.full():
            try:
                self.queue.get_nowait()
                self.dropped_frames += 1
            except asyncio.QueueEmpty:
                break
        self.queue.put_nowait(text)

    async def _send_loop(self) -> None:
        try:
            while True:
                item = await self.queue.get()
                await self.conn.send(item)
        except (ConnectionClosed, asyncio.CancelledError):
            pass

    async def close(self) -> None:
        self.sender.cancel()
        try:
            await self.conn.close()
        except Exception:
            pass


class RoomRuntime:
    """Owns one Room: its clock, tick task, connections, and recorder."""

    def __init__(self, server: "RelayServer", room_id: str, mode: str):
        self.server = server
        cfg = server.config.room
        self.room = Room(room_id, mode, cfg)
        loop = asyncio.get_running_loop()
        self._origin = loop.time()
        self._last_stamp = 0.0
        self.members: dict[str, MemberConn] = {}
        self.recorder = None
        if server.config.record_dir:
            # recording is best-effort: an unwritable directory must never
            # take the room down
            try:
                os.makedirs(server.config.record_dir, exist_ok=True)
                path = os.path.join(
                    server.config.record_dir,
                    f"{room_id}-{int(time.time() * 1000)}.jsonl",
                )
                self.recorder = SessionRecorder(
                    path, room_id, mode, self.room.seed, self.room.t0, cfg
                )
                logger.info("recording room %s to %s", room_id, path)
            except OSError as exc:
                logger.error("cannot record room %s: %s", room_id, exc)
        self._grace_deadline: float | None = None
        self._closed = False
        self.tick_task = asyncio.create_task(self._tick_loop())

    # room time: float ms since this room's creation, strictly increasing
    # for stamped events so the session log stays strictly ordered.
    def now_ms(self) -> float:
        return (asyncio.get_running_loop().time() - self._origin) * 1000.0

    def stamp(self) -> float:
        t = self.now_ms()
        if t <= self._last_stamp:
            t = self._last_stamp + 1e-3
        self._last_stamp = t
        return t

    # -- membership -----------------------------------------------------

    def join(self, role: str, conn) -> str:
        t = self.stamp()
        member_id = self.room.join(role, now=t)
        self.members[member_id] = MemberConn(member_id, role, conn)
        if self.recorder:
            self.recorder.membership(t, "join", role, member_id)
        self._grace_deadline = None
        self._broadcast_room_info()
        logger.info(
            "room %s: %s joined (%d audiences)",
            self.room.room_id, role, self.room.n_audiences,
        )
        return member_id

    def remove(self, member_id: str, evict: bool = False) -> None:
        member = self.members.pop(member_id, None)
        if member is None:
            return
        t = self.stamp()
        self.room.leave(member_id)
        if self.recorder:
            self.recorder.membership(t, "leave", member.role, member_id)
        if evict:
            asyncio.create_task(member.close())
        else:
            member.sender.cancel()
        self._broadcast_room_info()
        logger.info(
            "room %s: %s left%s (%d audiences)",
            self.room.room_id, member.role,
            " (evicted)" if evict else "", self.room.n_audiences,
        )
        if self.room.n_members == 0:
            grace = self.room.config.room_grace_s
            self._grace_deadline = asyncio.get_running_loop().time() + grace

    def _broadcast_room_info(self) -> None:
        text = protocol.encode(self.room.room_info())
        for member in self.members.values():
            member.push(text)

    # -- ingestion ------------------------------------------------------

    def ingest(self, member_id: str, msg: dict):
        t = self.stamp()
        sample = self.room.ingest(member_id, msg, t)
        if self.recorder:
            self.recorder.sample(t, member_id, sample)
        return sample

    # -- tick loop --------------------------------------------------------

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        interval = 1.0 / self.room.config.tick_hz
        timeout_ms = self.room.config.liveness_timeout_s * 1000.0
        next_at = loop.time() + interval
        try:
            while not self._closed:
                delay = next_at - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                next_at += interval
                if loop.time() > next_at:
                    # fell behind (stalled host): resync instead of bursting
                    next_at = loop.time() + interval
                t = self.stamp()
                for aid in self.room.silent_audiences(t, timeout_ms):
                    self.remove(aid, evict=True)
                result = self.room.tick(t)
                if self.recorder:
                    self.recorder.frame(t, result.msg)
                relay_to_audiences = self.room.mode == NOD
                for member in self.members.values():
                    if member.role == protocol.ROLE_SPEAKER or relay_to_audiences:
                        member.push(result.text)
                if (
                    self._grace_deadline is not None
                    and loop.time() >= self._grace_deadline
                ):
                    break
        except asyncio.CancelledError:
            raise
        finally:
            if not self._closed:
                asyncio.create_task(self.server._destroy_room(self.room.room_id))

    async def close(self) -> None:
        self._closed = True
        self.tick_task.cancel()
        for member in list(self.members.values()):
            await member.close()
        self.members.clear()
        if self.recorder:
            await asyncio.get_running_loop().run_in_executor(
                None, self.recorder.close
            )


class RelayServer:
    def __init__(self, config: ServerConfig):
        self.config = config
        self.rooms: dict[str, RoomRuntime] = {}
        self._ws_server = None
        self.port: int | None = None

    async def start(self) -> None:
        self._ws_server = await serve(
            self._handler,
            self.config.host,
            self.config.port,
            subprotocols=[protocol.SUBPROTOCOL],
            process_request=self._process_request,
            ping_interval=2.0,
            ping_timeout=3.0,
            max_size=1 << 20,
        )
        self.port = self._ws_server.sockets[0].getsockname()[1]
        # parse-friendly: tooling reads the bound address from this line
        print(
            f"calmrelay listening on ws://{self.config.host}:{self.port}/ws",
            flush=True,
        )
        logger.info("listening on %s:%d", self.config.host, self.port)

    async def stop(self) -> None:
        for room_id in list(self.rooms):
            await self._destroy_room(room_id)
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()

    async def _destroy_room(self, room_id: str) -> None:
        runtime = self.rooms.pop(room_id, None)
        if runtime is None:
            return
        await runtime.close()
        logger.info("room %s destroyed", room_id)

    # -- http (static UI) ----------------------------------------------

    def _process_request(self, conn, request):
        path = request.path.split("?", 1)[0]
        if path == "/ws":
            return None
        status, ctype, body = self._static_content(path)
        headers = Headers([
            ("Content-Type", ctype),
            ("Content-Length", str(len(body))),
        ])
        return Response(status, "OK" if status == 200 else "Not Found",
                        headers, body)

    def _static_content(self, path: str) -> tuple[int, str, bytes]:
        root = self.config.static_dir
        if root is None:
            if path in ("/", "/index.html"):
                return 200, "text/plain; charset=utf-8", b"calmrelay relay server\n"
            return 404, "text/plain; charset=utf-8", b"not found\n"
        if path == "/":
            path = "/index.html"
        root = os.path.realpath(root)
        full = os.path.realpath(os.path.join(root, path.lstrip("/")))
        if full != root and not full.startswith(root + os.sep):
            return 404, "text/plain; charset=utf-8", b"not found\n"
        if not os.path.isfile(full):
            return 404, "text/plain; charset=utf-8", b"not found\n"
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as f:
            return 200, ctype, f.read()

    # -- websocket handling ----------------------------------------------

    async def _handler(self, conn) -> None:
        try:
            raw = await asyncio.wait_for(conn.recv(), timeout=HELLO_TIMEOUT_S)
            msg = protocol.decode(raw)
            room_id, role, mode = protocol.parse_hello(msg)
        except (asyncio.TimeoutError, ConnectionClosed):
            return
        except protocol.ProtocolError as exc:
            await self._refuse(conn, protocol.ERR_BAD_HELLO, str(exc))
            return

        runtime = self.rooms.get(room_id)
        if runtime is None:
            runtime = RoomRuntime(self, room_id, mode)
            self.rooms[room_id] = runtime
            logger.info("room %s created (mode=%s)", room_id, mode)
        elif runtime.room.mode != mode:
            await self._refuse(
                conn, protocol.ERR_ROOM_MODE_MISMATCH,
                f"room is in {runtime.room.mode} mode",
            )
            return

        try:
            member_id = runtime.join(role, conn)
        except RoomFull:
            await self._refuse(conn, protocol.ERR_ROOM_FULL, "audience cap reached")
            return

        try:
            if role == protocol.ROLE_AUDIENCE:
                await self._audience_loop(conn, runtime, member_id)
            else:
                await self._speaker_loop(conn, runtime)
        except ConnectionClosed:
            pass
        finally:
            # the runtime may already be gone if the room was destroyed
            if self.rooms.get(runtime.room.room_id) is runtime:
                runtime.remove(member_id)

    async def _refuse(self, conn, code: str, detail: str) -> None:
        # best-effort error, then let the handler return: websockets runs
        # the closing handshake itself, and awaiting close() here can stall
        # behind a flooder's buffered inbound frames
        try:
            await conn.send(protocol.encode(protocol.error(code, detail)))
        except ConnectionClosed:
            pass

    async def _audience_loop(self, conn, runtime: RoomRuntime,
                             member_id: str) -> None:
        malformed = 0
        async for raw in conn:
            # recv() completes synchronously while messages are buffered, so
            # yield once per message or a flood could starve the tick tasks
            await asyncio.sleep(0)
            try:
                msg = protocol.decode(raw)
            except protocol.ProtocolError:
                malformed += 1
                if malformed > MALFORMED_DISCONNECT:
                    await self._refuse(conn, protocol.ERR_MALFORMED_FLOOD,
                                       "too many malformed messages")
                    return
                continue
            if msg.get("type") == "bye":
                return
            try:
                runtime.ingest(member_id, msg)
                malformed = 0
            except SampleRejected:
                malformed += 1
                if malformed > MALFORMED_DISCONNECT:
                    await self._refuse(conn, protocol.ERR_MALFORMED_FLOOD,
                                       "too many malformed messages")
                    return
            except KeyError:
                return  # evicted while a message was in flight

    async def _speaker_loop(self, conn, runtime: RoomRuntime) -> None:
        malformed = 0
        async for raw in conn:
            await asyncio.sleep(0)
            try:
                msg = protocol.decode(raw)
            except protocol.ProtocolError:
                msg = None
            if msg is not None and msg.get("type") == "bye":
                return
            # samples from a speaker are a protocol violation: drop, count
            malformed += 1
            if malformed > MALFORMED_DISCONNECT:
                await self._refuse(conn, protocol.ERR_MALFORMED_FLOOD,
                                   "speakers must not send samples")
                return


async def serve_forever(config: ServerConfig) -> None:
    server = RelayServer(config)
    await server.start()
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except NotImplementedError:
            pass
    try:
        await stop.wait()
    finally:
        await server.stop()
