"""Coordinator: hosts the backplane, relays node-to-node messages, keeps the log.

Trials are token-passed (START goes to node B, the trial ends with A's
END_TRIAL), so at most one node is active at any moment and the log order is
fixed by the protocol alone. That is what makes transcripts byte-comparable.
"""
from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field

from .backplane import Backplane, OrderingError, SessionConfig
from .wire import WIRE_TYPES, FrameError, WireError, WireMessage, canonical, read_frame, write_frame

log = logging.getLogger(__name__)

ROLES = ("A", "B")
PEER = {"A": "B", "B": "A"}
COORDINATOR = "C"


class SessionAborted(RuntimeError):
    def __init__(self, reason: str, manifest: dict):
        super().__init__(reason)
        self.manifest = manifest


@dataclass
class SessionLog:
    """Every frame that crossed the coordinator, in order, as canonical JSON lines."""

    lines: list = field(default_factory=list)

    def add(self, src: str, dst: str, frame: dict) -> None:
        self.lines.append(canonical({"seq": len(self.lines), "from": src, "to": dst, "frame": frame}))

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


class Coordinator:
    def __init__(self, config: SessionConfig, host: str = "127.0.0.1", port: int = 0,
                 hello_timeout: float = 30.0):
        self.config = config
        self.host, self.port = host, port
        self.hello_timeout = hello_timeout
        self.backplane = Backplane(config)
        self.log = SessionLog()
        self.records = []
        self._writers: dict = {}
        self._queue: asyncio.Queue | None = None
        self._server = None

    # -- connection handling -------------------------------------------------
    async def start(self) -> int:
        self._queue = asyncio.Queue()
        self._server = await asyncio.start_server(self._accept, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        return self.port

    async def _accept(self, reader, writer) -> None:
        role = None
        try:
            hello = await read_frame(reader)
            if hello is None or hello.get("type") != "HELLO":
                raise FrameError("first frame must be HELLO")
            role = hello.get("payload", {}).get("role")
            if role not in ROLES or role in self._writers:
                await write_frame(writer, {"type": "ERROR", "trial_id": 0,
                                           "payload": {"reason": f"role {role!r} unavailable"}})
                writer.close()
                return
            self._writers[role] = writer
            await self._queue.put((role, hello))
            while True:
                frame = await read_frame(reader)
                await self._queue.put((role, frame))
                if frame is None:
                    return
        except (ConnectionError, FrameError) as exc:
            if role in ROLES:
                await self._queue.put((role, {"type": "_DISCONNECT", "reason": str(exc)}))
            else:
                writer.close()

    async def _send(self, role: str, frame: dict, src: str = COORDINATOR) -> None:
        self.log.add(src, role, frame)
        try:
            await write_frame(self._writers[role], frame)
        except (ConnectionError, KeyError) as exc:
            raise ConnectionError(f"node {role} unreachable: {exc}") from exc

    async def _next(self):
        role, frame = await self._queue.get()
        if frame is None or frame.get("type") == "_DISCONNECT":
            raise ConnectionError(f"node {role} disconnected")
        return role, frame

    # -- session ----------------------------------------------------------------
    def manifest(self, status: str, reason: str | None = None) -> dict:
        return {
            "status": status, "reason": reason, "trials_requested": self.config.trials,
            "trials_completed": len(self.records),
            "completed_trial_ids": [r.trial_id for r in self.records],
            "records": [r.to_json() for r in self.records],
        }

    async def run(self) -> dict:
        """Drive a whole session; return the manifest (status "complete" or "aborted")."""
        if self._server is None:
            await self.start()
        try:
            await self._handshake()
            for t in range(1, self.config.trials + 1):
                await self._trial(t)
            for role in ROLES:
                await self._send(role, {"type": "SHUTDOWN", "trial_id": self.config.trials,
                                        "payload": {"status": "complete"}})
            result = self.manifest("complete")
        except (ConnectionError, FrameError, WireError, OrderingError, PermissionError,
                ValueError, KeyError, asyncio.TimeoutError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            log.warning("session aborted: %s", reason)
            self.log.add(COORDINATOR, "*", {"type": "ABORT", "payload": {"reason": reason}})
            for role in list(self._writers):
                try:
                    await write_frame(self._writers[role], {"type": "SHUTDOWN", "trial_id": 0,
                                                            "payload": {"status": "aborted"}})
                except (ConnectionError, RuntimeError):
                    pass
            result = self.manifest("aborted", reason)
        finally:
            for w in self._writers.values():
                w.close()
            self._server.close()
            await self._server.wait_closed()
        return result

    async def _handshake(self) -> None:
        hellos = {}
        while len(hellos) < 2:
            role, frame = await asyncio.wait_for(self._next(), self.hello_timeout)
            if frame.get("type") != "HELLO":
                raise OrderingError(f"node {role} spoke before the handshake completed")
            hellos[role] = frame
        # arrival order is a race; log in role order so transcripts stay stable
        for role in ROLES:
            self.log.add(role, COORDINATOR, hellos[role])
        node_config = {"mode": self.config.mode, "trials": self.config.trials,
                       "measurement_settings": list(self.config.measurement_settings)}
        for role in ROLES:
            await self._send(role, {"type": "CONFIG", "trial_id": 0, "payload": node_config})

    async def _trial(self, t: int) -> None:
        await self._send("B", {"type": "START", "trial_id": t, "payload": {}})
        while True:
            role, frame = await self._next()
            kind = frame.get("type")
            if frame.get("trial_id") != t:
                raise OrderingError(f"node {role} sent trial {frame.get('trial_id')} during trial {t}")
            if kind == "OP":
                self.log.add(role, COORDINATOR, frame)
                req = dict(frame.get("payload", {}), trial_id=t)
                if req.get("op") == "END_TRIAL":
                    if role != "A":
                        raise OrderingError("only node A closes a trial")
                    rec = self.backplane.finish(t)
                    self.records.append(rec)
                    counts = {rec.outcome: 1} if rec.outcome is not None else {}
                    self.log.add(COORDINATOR, "*", WireMessage(
                        "TRIAL_RESULT", t, {"kept": rec.post_selected, "counts": counts,
                                            "i": rec.i, "j": rec.j}).to_frame())
                    await self._send(role, {"type": "OP_RESULT", "trial_id": t, "payload": {}})
                    return
                try:
                    reply = self.backplane.step(role, req)
                except (OrderingError, PermissionError, ValueError) as exc:
                    await self._send(role, {"type": "ERROR", "trial_id": t,
                                            "payload": {"reason": f"{type(exc).__name__}: {exc}"}})
                    raise
                await self._send(role, {"type": "OP_RESULT", "trial_id": t, "payload": reply})
            elif kind in WIRE_TYPES:
                msg = WireMessage.from_frame(frame)
                if msg.to != PEER[role]:
                    raise WireError(f"node {role} addressed {msg.to!r}")
                await self._send(msg.to, msg.to_frame(), src=role)
            elif kind == "ERROR":
                self.log.add(role, COORDINATOR, frame)
                raise OrderingError(f"node {role} reported: {frame.get('payload', {}).get('reason')}")
            else:
                raise FrameError(f"unexpected frame type {kind!r} from {role}")

