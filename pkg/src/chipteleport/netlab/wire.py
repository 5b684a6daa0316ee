"""Length-prefixed JSON frames: 4-byte big-endian length, then UTF-8 JSON.

Frames are canonical (sorted keys, no whitespace) so transcripts can be
compared byte for byte.
"""
from __future__ import annotations

import asyncio
import json
import socket
import struct
from dataclasses import dataclass, field

HEADER = struct.Struct(">I")
MAX_FRAME = 1 << 20

# classical messages of the protocol itself
WIRE_TYPES = (
    "HELLO", "CONFIG", "EPR_READY", "MEAS_OUTCOME", "CORRECTION_APPLIED", "TRIAL_RESULT", "SHUTDOWN",
)
# coordinator control plane: quantum-backplane requests and trial sequencing
CONTROL_TYPES = ("START", "OP", "OP_RESULT", "ERROR")

_RESULTS = {"Z": (0, 1), "X": ("+", "-"), "Y": ("+i", "-i")}


class FrameError(ValueError):
    pass


class WireError(ValueError):
    pass


def encode(obj: dict) -> bytes:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise FrameError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(payload)) + payload


def decode(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"bad frame payload: {exc}") from exc
    if not isinstance(obj, dict) or "type" not in obj:
        raise FrameError("frame must be a JSON object with a 'type'")
    return obj


def canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ConnectionError("connection closed mid-frame")
            return None
        buf.extend(chunk)
    return bytes(buf)


def send_frame(sock: socket.socket, obj: dict) -> None:
    sock.sendall(encode(obj))


def recv_frame(sock: socket.socket) -> dict | None:
    """Next frame, or ``None`` on a clean close between frames."""
    head = _recv_exact(sock, HEADER.size)
    if head is None:
        return None
    (n,) = HEADER.unpack(head)
    if n > MAX_FRAME:
        raise FrameError(f"announced frame of {n} bytes exceeds {MAX_FRAME}")
    body = _recv_exact(sock, n)
    if body is None:
        raise ConnectionError("connection closed mid-frame")
    return decode(body)


async def read_frame(reader: asyncio.StreamReader) -> dict | None:
    try:
        head = await reader.readexactly(HEADER.size)
    except asyncio.IncompleteReadError as exc:
        if exc.partial:
            raise ConnectionError("connection closed mid-frame") from exc
        return None
    (n,) = HEADER.unpack(head)
    if n > MAX_FRAME:
        raise FrameError(f"announced frame of {n} bytes exceeds {MAX_FRAME}")
    try:
        body = await reader.readexactly(n)
    except asyncio.IncompleteReadError as exc:
        raise ConnectionError("connection closed mid-frame") from exc
    return decode(body)


async def write_frame(writer: asyncio.StreamWriter, obj: dict) -> None:
    writer.write(encode(obj))
    await writer.drain()


@dataclass(frozen=True)
class WireMessage:
    type: str
    trial_id: int
    payload: dict = field(default_factory=dict)
    to: str | None = None

    def __post_init__(self):
        if self.type not in WIRE_TYPES:
            raise WireError(f"unknown message type {self.type!r}")
        if not isinstance(self.trial_id, int) or self.trial_id < 0:
            raise WireError(f"trial_id must be a non-negative integer, got {self.trial_id!r}")
        if self.type == "MEAS_OUTCOME":
            basis = self.payload.get("basis")
            if basis not in ("Z", "X"):
                raise WireError(f"MEAS_OUTCOME basis must be Z or X, got {basis!r}")
            if self.payload.get("result") not in _RESULTS[basis]:
                raise WireError(f"result {self.payload.get('result')!r} inconsistent with basis {basis}")
            if not isinstance(self.payload.get("qubit"), int):
                raise WireError("MEAS_OUTCOME needs an integer qubit")
        if self.type == "CORRECTION_APPLIED" and self.payload.get("op") not in ("I", "X", "Y", "Z"):
            raise WireError(f"CORRECTION_APPLIED op must be a Pauli, got {self.payload.get('op')!r}")

    def to_frame(self) -> dict:
        d = {"type": self.type, "trial_id": self.trial_id, "payload": dict(self.payload)}
        if self.to is not None:
            d["to"] = self.to
        return d

    @classmethod
    def from_frame(cls, obj: dict) -> WireMessage:
        return cls(obj["type"], obj.get("trial_id", 0), dict(obj.get("payload", {})), obj.get("to"))
