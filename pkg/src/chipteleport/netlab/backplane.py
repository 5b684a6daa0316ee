"""Quantum backplane: the only holder of the joint four-qubit state.

Nodes send operation requests; the backplane checks ownership and per-trial
ordering, applies the operation, and answers with at most a classical outcome.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..channel import NoiseConfig
from ..protocol import (
    C12, C34, KEPT_BRANCH, MODES, OutcomeRecord, TrialStreams, prepare_register, readout,
)
from ..qcore import PAULIS, Operator, apply_gate, measure_qubit

OWNERSHIP = {"A": frozenset({1, 2}), "B": frozenset({3, 4})}
SOURCE_ROLE = "B"
_GATES = {("A", (1, 2)): C12, ("B", (3, 4)): C34}


class OrderingError(RuntimeError):
    """An operation arrived out of protocol order (e.g. correction before outcomes)."""


@dataclass
class SessionConfig:
    input_state: object = "+0"
    mode: str = "post_selected"
    seed: int = 0
    trials: int = 1
    measurement_settings: list = field(default_factory=lambda: ["ZZ"])
    noise: NoiseConfig = field(default_factory=NoiseConfig.ideal)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"invalid mode {self.mode!r}")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        if not self.measurement_settings:
            raise ValueError("at least one measurement setting is required")
        self.trials = int(self.trials)
        self.seed = int(self.seed)
        self.measurement_settings = ["".join(s) for s in self.measurement_settings]
        if isinstance(self.noise, dict):
            self.noise = NoiseConfig.from_json(self.noise)

    def setting_for(self, trial_id: int) -> str:
        return self.measurement_settings[(trial_id - 1) % len(self.measurement_settings)]

    def to_json(self) -> dict:
        return {
            "input_state": self.input_state, "mode": self.mode, "seed": self.seed,
            "trials": self.trials, "measurement_settings": list(self.measurement_settings),
            "noise": self.noise.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> SessionConfig:
        obj = dict(obj)
        if "shots" in obj and "trials" not in obj:
            obj["trials"] = obj.pop("shots")
        obj.pop("shots", None)
        known = {"input_state", "mode", "seed", "trials", "measurement_settings", "noise"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown session config fields {sorted(unknown)}")
        return cls(**obj)


@dataclass
class _Trial:
    trial_id: int
    state: object
    streams: TrialStreams
    outcomes: dict = field(default_factory=dict)
    corrected: dict = field(default_factory=dict)
    probabilities: dict = field(default_factory=dict)
    readout: str | None = None
    served: set = field(default_factory=set)

    @property
    def branch_probability(self) -> float:
        return self.probabilities[2] * self.probabilities[3]


class Backplane:
    def __init__(self, config: SessionConfig):
        self.config = config
        self.trial: _Trial | None = None

    def _need_trial(self, trial_id) -> _Trial:
        if self.trial is None or self.trial.trial_id != trial_id:
            raise OrderingError(f"no prepared trial {trial_id}")
        return self.trial

    def _own(self, role: str, qubits) -> None:
        missing = set(qubits) - OWNERSHIP[role]
        if missing:
            raise PermissionError(f"node {role} does not own qubit(s) {sorted(missing)}")

    def step(self, role: str, req: dict) -> dict:
        """Apply one request from node ``role``; return the classical reply payload."""
        if role not in OWNERSHIP:
            raise PermissionError(f"unknown role {role!r}")
        op = req.get("op")
        tid = req.get("trial_id")
        if op == "PREPARE":
            if role != SOURCE_ROLE:
                raise PermissionError(f"only node {SOURCE_ROLE} drives the pair source")
            if self.trial is not None and tid <= self.trial.trial_id:
                raise OrderingError(f"trial ids must increase ({tid} after {self.trial.trial_id})")
            streams = TrialStreams.for_trial(self.config.seed, tid)
            state = prepare_register(self.config.input_state, self.config.noise, streams)
            self.trial = _Trial(tid, state, streams)
            return {}
        t = self._need_trial(tid)
        if op == "GATE":
            qubits = tuple(req["qubits"])
            self._own(role, qubits)
            gate = _GATES.get((role, qubits))
            if gate is None or req.get("gate") != "CNOT":
                raise ValueError(f"unsupported gate request {req}")
            t.state = apply_gate(t.state, gate)
            return {}
        if op == "MEASURE":
            q = int(req["qubit"])
            self._own(role, [q])
            if q in (2, 3):
                basis = {2: "Z", 3: "X"}[q]
                if req.get("basis") != basis:
                    raise ValueError(f"qubit {q} is measured in {basis}")
                if q in t.outcomes:
                    raise OrderingError(f"qubit {q} already measured in trial {tid}")
                if q == 3 and 2 not in t.outcomes:
                    raise OrderingError("qubit 3 is measured after qubit 2")
                m = measure_qubit(t.state, q, basis, t.streams.m2 if q == 2 else t.streams.m3)
                t.state = m.state
                t.outcomes[q] = m.outcome
                t.probabilities[q] = m.probability
                return {"result": m.outcome}
            return {"result": self._readout_bit(t, q, req.get("basis"))}
        if op == "CORRECT":
            q = int(req["qubit"])
            self._own(role, [q])
            if not {2, 3} <= set(t.outcomes):
                raise OrderingError("correction requested before both outcomes are known")
            if t.readout is not None:
                raise OrderingError("correction after readout")
            if q in t.corrected:
                raise OrderingError(f"qubit {q} already corrected")
            pauli = req["pauli"]
            if pauli not in PAULIS:
                raise ValueError(f"correction must be a Pauli, got {pauli!r}")
            t.state = apply_gate(t.state, Operator(PAULIS[pauli], pauli), [q])
            t.corrected[q] = pauli
            return {}
        raise ValueError(f"unknown op {op!r}")

    def kept(self, t: _Trial) -> bool:
        return self.config.mode == "corrected" or (t.outcomes.get(2), t.outcomes.get(3)) == KEPT_BRANCH

    def _readout_bit(self, t: _Trial, q: int, letter) -> int:
        setting = self.config.setting_for(t.trial_id)
        if letter != setting[0 if q == 1 else 1]:
            raise ValueError(f"trial {t.trial_id} reads qubit {q} with {letter!r}, configured {setting!r}")
        if not {2, 3} <= set(t.outcomes):
            raise OrderingError("output readout before the ancilla outcomes")
        if not self.kept(t):
            raise OrderingError("readout requested on a discarded trial")
        if self.config.mode == "corrected" and set(t.corrected) != {1, 4}:
            raise OrderingError("readout before both corrections")
        if q in t.served:
            raise OrderingError(f"qubit {q} already read out")
        if t.readout is None:
            # the two detectors fire together; one joint draw serves both nodes
            t.readout = readout(t.state, setting, t.streams.readout)
        t.served.add(q)
        return int(t.readout[0 if q == 1 else 1])

    def finish(self, trial_id: int) -> OutcomeRecord:
        """Close the trial and return its record, as the coincidence counter saw it."""
        t = self._need_trial(trial_id)
        if not {2, 3} <= set(t.outcomes):
            raise OrderingError(f"trial {trial_id} ended before both ancilla outcomes")
        kept = self.kept(t)
        if self.config.mode == "corrected":
            if set(t.corrected) != {1, 4}:
                raise OrderingError(f"trial {trial_id} ended without both corrections")
            corrections = (t.corrected[1], t.corrected[4])
        else:
            corrections = ("I", "I")
        if kept and t.served != {1, 4}:
            raise OrderingError(f"trial {trial_id} ended before both outputs were read")
        return OutcomeRecord(trial_id, t.outcomes[2], t.outcomes[3], corrections, kept,
                             t.branch_probability, self.config.setting_for(trial_id), t.readout)
