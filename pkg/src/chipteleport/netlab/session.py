"""In-process session runner plus the transcript audits."""
from __future__ import annotations

import asyncio
import json
import threading
from collections import Counter
from dataclasses import dataclass, field

from ..protocol import OutcomeRecord, TrialStreams, run_trial
from .backplane import SessionConfig
from .coordinator import Coordinator, SessionAborted
from .node import Node, NodeCrash
from .wire import WIRE_TYPES, canonical

# payload keys a node may ever receive from the coordinator itself
_CONTROL_KEYS = {"result", "reason", "status", "mode", "trials", "measurement_settings"}
_TRIAL_TYPES = ("EPR_READY", "MEAS_OUTCOME", "CORRECTION_APPLIED", "TRIAL_RESULT")


@dataclass
class SessionResult:
    manifest: dict
    log_lines: list
    records: list
    node_errors: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.manifest["status"] == "complete"

    def outcome_stream(self) -> str:
        return records_jsonl(self.records)

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log_lines)


def records_jsonl(records) -> str:
    return "".join(canonical(r.to_json()) + "\n" for r in records)


def reference_records(config: SessionConfig, trials: int | None = None) -> list[OutcomeRecord]:
    """The same trials run by the single-process protocol with identical seeds."""
    n = config.trials if trials is None else trials
    out = []
    for t in range(1, n + 1):
        rec, _ = run_trial(config.input_state, config.noise, config.mode,
                           TrialStreams.for_trial(config.seed, t), trial_id=t,
                           setting=config.setting_for(t))
        out.append(rec)
    return out


def run_session(config: SessionConfig, trials: int | None = None, *, host: str = "127.0.0.1",
                latency: float = 0.0, crash: dict | None = None, raise_on_abort: bool = False,
                timeout: float = 600.0) -> SessionResult:
    """Run coordinator and both nodes over loopback sockets in this process.

    ``crash`` maps a role to the number of trials after which that node dies.
    """
    if trials is not None:
        config = SessionConfig(**{**config.__dict__, "trials": trials})
    crash = crash or {}
    coord = Coordinator(config, host=host)
    errors: dict = {}

    async def main():
        port = await coord.start()
        nodes = [Node(role, host, port, latency=latency, latency_seed=k,
                      crash_after=crash.get(role)) for k, role in enumerate(("A", "B"))]

        def serve(node):
            try:
                node.run()
            except (NodeCrash, ConnectionError, OSError, RuntimeError) as exc:
                errors[node.role] = f"{type(exc).__name__}: {exc}"

        threads = [threading.Thread(target=serve, args=(n,), daemon=True) for n in nodes]
        for th in threads:
            th.start()
        manifest = await asyncio.wait_for(coord.run(), timeout)
        for th in threads:
            await asyncio.to_thread(th.join, 10)
        return manifest

    manifest = asyncio.run(main())
    result = SessionResult(manifest, list(coord.log.lines), list(coord.records), errors)
    if raise_on_abort and not result.complete:
        raise SessionAborted(manifest["reason"], manifest)
    return result


def message_counts(log_lines) -> dict[int, Counter]:
    """Per-trial counts of protocol messages in a transcript."""
    counts: dict[int, Counter] = {}
    for line in log_lines:
        entry = json.loads(line)
        frame = entry["frame"]
        if frame.get("type") in _TRIAL_TYPES and frame.get("trial_id", 0) > 0:
            key = frame["type"]
            if key == "MEAS_OUTCOME":
                key = f"MEAS_OUTCOME:{entry['from']}"
            counts.setdefault(frame["trial_id"], Counter())[key] += 1
    return counts


def check_message_counts(log_lines, mode: str) -> list[str]:
    problems = []
    for t, c in sorted(message_counts(log_lines).items()):
        expected = {"EPR_READY": 1, "MEAS_OUTCOME:A": 1, "MEAS_OUTCOME:B": 1, "TRIAL_RESULT": 1,
                    "CORRECTION_APPLIED": 2 if mode == "corrected" else 0}
        got = {k: c.get(k, 0) for k in expected}
        if got != expected or set(c) - set(expected):
            problems.append(f"trial {t}: {dict(c)}")
    return problems


def locc_audit(log_lines) -> list[str]:
    """Violations of the classical-only boundary; empty when the log is clean.

    Node-to-node traffic must be WireMessages, and whatever the coordinator
    sends a node must be scalar classical data (no arrays, no amplitudes).
    """
    problems = []
    for line in log_lines:
        entry = json.loads(line)
        src, dst, frame = entry["from"], entry["to"], entry["frame"]
        if {src, dst} == {"A", "B"} and frame.get("type") not in WIRE_TYPES:
            problems.append(f"seq {entry['seq']}: non-wire frame between nodes")
        if src == "C" and dst in ("A", "B"):
            payload = frame.get("payload", {})
            for k, v in payload.items():
                if k not in _CONTROL_KEYS:
                    problems.append(f"seq {entry['seq']}: coordinator sent key {k!r}")
                elif k == "measurement_settings":
                    if not all(isinstance(s, str) for s in v):
                        problems.append(f"seq {entry['seq']}: non-string setting")
                elif not isinstance(v, (int, str)):
                    problems.append(f"seq {entry['seq']}: non-scalar {k!r}")
            if "result" in payload and payload["result"] not in (0, 1, "+", "-"):
                problems.append(f"seq {entry['seq']}: result {payload['result']!r} is not a classical outcome")
        if src in ("A", "B") and dst in ("A", "B"):
            payload = frame.get("payload", {})
            if any(isinstance(v, (list, dict, float)) for v in payload.values()):
                problems.append(f"seq {entry['seq']}: structured payload between nodes")
    return problems
