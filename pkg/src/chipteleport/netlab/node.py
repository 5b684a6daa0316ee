"""Chip nodes: classical control logic for one role, talking only in frames.

A node never sees amplitudes. It asks the backplane for local operations on
its own qubits, learns its own measurement outcomes, and tells its peer about
them with WireMessages.
"""
from __future__ import annotations

import logging
import random
import socket
import time
from dataclasses import dataclass, field

from ..protocol import KEPT_BRANCH, derive_correction_table
from .backplane import OrderingError
from .wire import WireMessage, recv_frame, send_frame

log = logging.getLogger(__name__)


class NodeCrash(RuntimeError):
    """Raised inside a node that was told to die (fault injection)."""


@dataclass
class TrialState:
    """Per-trial state machine of one node."""

    trial_id: int
    i: int | None = None
    j: str | None = None
    corrected: bool = False
    peer_corrected: bool = False

    def learn(self, qubit: int, result) -> None:
        if qubit == 2:
            if self.i is not None:
                raise OrderingError(f"trial {self.trial_id}: second outcome for qubit 2")
            self.i = result
        elif qubit == 3:
            if self.i is None:
                raise OrderingError(f"trial {self.trial_id}: qubit 3 outcome before qubit 2")
            if self.j is not None:
                raise OrderingError(f"trial {self.trial_id}: second outcome for qubit 3")
            self.j = result
        else:
            raise OrderingError(f"trial {self.trial_id}: outcome for output qubit {qubit} on the wire")

    def require_outcomes(self) -> None:
        if self.i is None or self.j is None:
            raise OrderingError(f"trial {self.trial_id}: correction before both outcomes")

    @property
    def kept(self) -> bool:
        return (self.i, self.j) == KEPT_BRANCH


@dataclass
class Node:
    role: str
    host: str = "127.0.0.1"
    port: int = 0
    latency: float = 0.0
    latency_seed: int | None = None
    crash_after: int | None = None
    connect_timeout: float = 10.0
    mode: str = "post_selected"
    settings: list = field(default_factory=list)
    trials_done: int = 0

    def __post_init__(self):
        if self.role not in ("A", "B"):
            raise ValueError(f"role must be A or B, got {self.role!r}")
        self._sock = None
        self._jitter = random.Random(self.latency_seed)
        self._table = derive_correction_table()

    # -- transport -------------------------------------------------------------
    def _connect(self) -> None:
        deadline = time.monotonic() + self.connect_timeout
        while True:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.connect_timeout)
                break
            except OSError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.05)
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _send(self, frame: dict) -> None:
        if self.latency:
            # latency moves frames in time only; the token protocol fixes their order
            time.sleep(self._jitter.uniform(0, self.latency))
        send_frame(self._sock, frame)

    def _recv(self) -> dict:
        frame = recv_frame(self._sock)
        if frame is None:
            raise ConnectionError(f"node {self.role}: coordinator closed the connection")
        if frame.get("type") == "ERROR":
            raise OrderingError(f"node {self.role}: {frame['payload'].get('reason')}")
        return frame

    def op(self, trial_id: int, **req):
        self._send({"type": "OP", "trial_id": trial_id, "payload": req})
        frame = self._recv()
        if frame.get("type") != "OP_RESULT" or frame.get("trial_id") != trial_id:
            raise OrderingError(f"node {self.role}: expected OP_RESULT, got {frame.get('type')}")
        return frame["payload"].get("result")

    def tell(self, kind: str, trial_id: int, **payload) -> None:
        msg = WireMessage(kind, trial_id, payload, to="B" if self.role == "A" else "A")
        self._send(msg.to_frame())

    def expect(self, trial_id: int, *kinds: str) -> WireMessage:
        frame = self._recv()
        if frame.get("type") not in kinds:
            raise OrderingError(f"node {self.role}, trial {trial_id}: expected {kinds}, got {frame.get('type')}")
        msg = WireMessage.from_frame(frame)
        if msg.trial_id != trial_id:
            raise OrderingError(f"node {self.role}: trial {msg.trial_id} frame during trial {trial_id}")
        return msg

    def setting_for(self, trial_id: int) -> str:
        return self.settings[(trial_id - 1) % len(self.settings)]

    # -- protocol --------------------------------------------------------------
    def run(self) -> int:
        """Serve a session until SHUTDOWN; returns the number of trials completed."""
        self._connect()
        try:
            send_frame(self._sock, {"type": "HELLO", "trial_id": 0, "payload": {"role": self.role}})
            cfg = self._recv()
            if cfg.get("type") != "CONFIG":
                raise OrderingError(f"node {self.role}: expected CONFIG, got {cfg.get('type')}")
            self.mode = cfg["payload"]["mode"]
            self.settings = list(cfg["payload"]["measurement_settings"])
            opener = "START" if self.role == "B" else "EPR_READY"
            while True:
                frame = self._recv()
                if frame["type"] == "SHUTDOWN":
                    return self.trials_done
                if frame["type"] != opener:
                    raise OrderingError(f"node {self.role}: expected {opener}, got {frame['type']}")
                # dying on the next trial's opener leaves every finished trial intact
                if self.crash_after is not None and self.trials_done >= self.crash_after:
                    raise NodeCrash(f"node {self.role} crashing after {self.trials_done} trials")
                if self.role == "B":
                    self._trial_b(frame["trial_id"])
                else:
                    self._trial_a(frame["trial_id"])
                self.trials_done += 1
        finally:
            self._sock.close()

    def _readout(self, t: int, qubit: int) -> int:
        letter = self.setting_for(t)[0 if qubit == 1 else 1]
        return self.op(t, op="MEASURE", qubit=qubit, basis=letter)

    def _trial_a(self, t: int) -> None:
        st = TrialState(t)
        self.op(t, op="GATE", gate="CNOT", qubits=[1, 2])
        st.learn(2, self.op(t, op="MEASURE", qubit=2, basis="Z"))
        self.tell("MEAS_OUTCOME", t, qubit=2, basis="Z", result=st.i)
        msg = self.expect(t, "MEAS_OUTCOME", "CORRECTION_APPLIED")
        if msg.type != "MEAS_OUTCOME":
            raise OrderingError(f"trial {t}: correction arrived before the qubit-3 outcome")
        st.learn(msg.payload["qubit"], msg.payload["result"])
        if self.mode == "corrected":
            st.require_outcomes()
            r1, _ = self._table[(st.i, st.j)]
            self.op(t, op="CORRECT", qubit=1, pauli=r1)
            st.corrected = True
            self.tell("CORRECTION_APPLIED", t, qubit=1, op=r1)
            self.expect(t, "CORRECTION_APPLIED")
            st.peer_corrected = True
        if self.mode == "corrected" or st.kept:
            self._readout(t, 1)
        self.op(t, op="END_TRIAL")

    def _trial_b(self, t: int) -> None:
        st = TrialState(t)
        self.op(t, op="PREPARE")
        self.op(t, op="GATE", gate="CNOT", qubits=[3, 4])
        self.tell("EPR_READY", t)
        msg = self.expect(t, "MEAS_OUTCOME", "CORRECTION_APPLIED")
        if msg.type != "MEAS_OUTCOME":
            raise OrderingError(f"trial {t}: correction arrived before the qubit-2 outcome")
        st.learn(msg.payload["qubit"], msg.payload["result"])
        st.learn(3, self.op(t, op="MEASURE", qubit=3, basis="X"))
        if self.mode == "post_selected":
            if st.kept:
                self._readout(t, 4)
            self.tell("MEAS_OUTCOME", t, qubit=3, basis="X", result=st.j)
            return
        self.tell("MEAS_OUTCOME", t, qubit=3, basis="X", result=st.j)
        self.expect(t, "CORRECTION_APPLIED")
        st.peer_corrected = True
        st.require_outcomes()
        _, r4 = self._table[(st.i, st.j)]
        self.op(t, op="CORRECT", qubit=4, pauli=r4)
        st.corrected = True
        self._readout(t, 4)
        self.tell("CORRECTION_APPLIED", t, qubit=4, op=r4)
