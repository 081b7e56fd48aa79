"""Cloud side of the harness: per-connection sessions, one shared FIFO verifier."""
from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass
from typing import Optional

from ..verifier import CloudSession, ProtocolViolation
from ..workload import TargetOracle
from .protocol import (
    Bye, ByeCode, DraftBatch, Frame, FrameError, Hello, NavRequest, NavResult, Probe, encode_frame, read_frame,
)

log = logging.getLogger(__name__)


@dataclass
class ServerConfig:
    nav_base_ms: float = 0.0
    nav_per_token_ms: float = 0.0


class _Connection:
    def __init__(self, writer: asyncio.StreamWriter):
        self.writer = writer
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.session: Optional[CloudSession] = None
        self.session_id = 0
        self.closed = False

    async def pump(self) -> None:
        while True:
            frame = await self.outbox.get()
            if frame is None:
                return
            try:
                self.writer.write(encode_frame(frame))
                await self.writer.drain()
            except (ConnectionError, RuntimeError):
                self.closed = True
                return
            if isinstance(frame.body, Bye):
                return


class CloudServer:
    """Asyncio verification server.

    Each connection owns one :class:`CloudSession`; verification requests
    from every connection go through one queue so the target model is used
    strictly first-come first-served.
    """

    def __init__(self, config: Optional[ServerConfig] = None):
        self.config = config or ServerConfig()
        self.queue: asyncio.Queue = asyncio.Queue()
        self._server: Optional[asyncio.base_events.Server] = None
        self._verifier: Optional[asyncio.Task] = None
        self.sessions_served = 0
        self.verifications = 0

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        self._server = await asyncio.start_server(self._handle, host, port)
        self._verifier = asyncio.create_task(self._verify_loop())
        addr = self._server.sockets[0].getsockname()
        return addr[0], addr[1]

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self._verifier is not None:
            self._verifier.cancel()
            try:
                await self._verifier
            except asyncio.CancelledError:
                pass

    async def serve_forever(self, host: str, port: int) -> None:
        await self.start(host, port)
        async with self._server:
            await self._server.serve_forever()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = _Connection(writer)
        pump = asyncio.create_task(conn.pump())
        try:
            await self._session(conn, reader)
        except FrameError as exc:
            await conn.outbox.put(Frame(conn.session_id, 0, Bye(exc.code, str(exc))))
        except ProtocolViolation as exc:
            await conn.outbox.put(Frame(conn.session_id, 0, Bye(ByeCode.PROTOCOL, str(exc))))
        except ConnectionError:
            pass
        finally:
            await conn.outbox.put(None)
            await pump
            conn.closed = True
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass

    async def _session(self, conn: _Connection, reader: asyncio.StreamReader) -> None:
        frame = await read_frame(reader)
        if frame is None:
            return
        if not isinstance(frame.body, Hello):
            raise ProtocolViolation("first frame must be HELLO")
        conn.session_id = frame.session_id
        conn.session = CloudSession(TargetOracle(frame.body.seed, frame.body.vocab_size))
        self.sessions_served += 1
        await conn.outbox.put(frame)  # echo confirms the version
        while True:
            frame = await read_frame(reader)
            if frame is None:
                return
            body = frame.body
            if isinstance(body, DraftBatch):
                conn.session.receive(body.epoch, body.start, body.tokens)
            elif isinstance(body, NavRequest):
                await self.queue.put((conn, frame))
            elif isinstance(body, Probe):
                continue
            elif isinstance(body, Bye):
                await conn.outbox.put(Frame(conn.session_id, 0, Bye(ByeCode.NORMAL, "bye")))
                return
            else:
                raise ProtocolViolation(f"unexpected {frame.frame_type.name} from edge")

    async def _verify_loop(self) -> None:
        while True:
            conn, frame = await self.queue.get()
            if conn.closed:
                continue
            req: NavRequest = frame.body
            session = conn.session
            if not session.admissible(req.start, req.end, req.epoch):
                reply = NavResult(0, 0, session.confirmed + 1, stale=True)
            else:
                t0 = time.perf_counter()
                delay = self.config.nav_base_ms + self.config.nav_per_token_ms * max(0, req.end - req.start + 1)
                if delay > 0:
                    await asyncio.sleep(delay / 1000.0)
                try:
                    out = session.verify(req.start, req.end, req.epoch)
                except ProtocolViolation as exc:
                    await conn.outbox.put(Frame(conn.session_id, frame.round_id, Bye(ByeCode.PROTOCOL, str(exc))))
                    continue
                self.verifications += 1
                r = out.result
                reply = NavResult(r.n_accepted, r.n_submitted, out.verify_start, r.correction, r.bonus, out.kept,
                                  nav_us=int((time.perf_counter() - t0) * 1e6))
            await conn.outbox.put(Frame(conn.session_id, frame.round_id, reply))


def serve(host: str = "127.0.0.1", port: int = 7878, config: Optional[ServerConfig] = None) -> None:
    """Run a server until interrupted."""
    server = CloudServer(config)
    try:
        asyncio.run(server.serve_forever(host, port))
    except KeyboardInterrupt:
        pass
