"""Teleported CNOT between qubits 1 and 4 through a shared pair on qubits 2 and 3.

Local CNOTs C12 and C34, a Z measurement of qubit 2 and an X measurement of
qubit 3 leave qubits 1 and 4 in ``R1 R4 C14 |Phi>`` for a Pauli correction
pair depending on the outcomes ``(i, j)``. The experiment keeps only the
``(0, +)`` branch, whose correction is the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import tomography as tomo
from .channel import CompensatorSetting, NoiseConfig, apply_channel
from .photonics import ALPHABET, alphabet_projectors, measurement_setting, prepare_product_state
from .qcore import (
    CNOT, PAULIS, MixedState, Operator, PureState, _KETS, apply_gate, bell_state,
    fidelity_state, ket, make_rng, matrix_from_json, measure_qubit, partial_trace, permute, tensor,
)

REGISTER = (1, 2, 3, 4)
OUTPUT = (1, 4)
BRANCHES = ((0, "+"), (0, "-"), (1, "+"), (1, "-"))
KEPT_BRANCH = (0, "+")
MODES = ("post_selected", "corrected")

C12 = Operator(CNOT, "C12", (1, 2))
C34 = Operator(CNOT, "C34", (3, 4))

# independent RNG streams per trial
STREAM_JITTER, STREAM_M2, STREAM_M3, STREAM_READOUT = 0, 2, 3, 14
STREAM_COUNTS = 1001

TRUTH_INPUTS = ("00", "01", "10", "11")
CNOT_OUTPUT = {"00": "00", "01": "01", "10": "11", "11": "10"}
ENTANGLING_TARGETS = {"+0": "phi+", "-0": "phi-", "+1": "psi+", "-1": "psi-"}


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"invalid mode {mode!r}; expected one of {MODES}")
    return mode


def resolve_input(spec) -> PureState:
    """Product input of qubits 1 and 4.

    Accepts a :class:`PureState` on (1, 4), a two-character ket label such as
    ``"+0"``, or a mapping with one of ``label``, ``amplitudes`` (``[re, im]``
    pairs or a matrix JSON object) or ``mzi`` (four ``(theta, phi)`` pairs).
    """
    if isinstance(spec, PureState):
        if spec.labels != OUTPUT:
            spec = permute(spec, OUTPUT) if sorted(spec.labels) == list(OUTPUT) else spec
        if spec.labels != OUTPUT:
            raise ValueError(f"input must live on qubits {OUTPUT}, got {spec.labels}")
        return spec
    if isinstance(spec, str):
        return ket(spec, OUTPUT)
    if isinstance(spec, Mapping):
        if "label" in spec:
            return ket(spec["label"], OUTPUT)
        if "mzi" in spec:
            return prepare_product_state(spec["mzi"])
        if "amplitudes" in spec:
            amps = spec["amplitudes"]
            if isinstance(amps, Mapping):
                vec = matrix_from_json(amps).reshape(-1)
            else:
                arr = np.asarray(amps, dtype=float)
                vec = arr[:, 0] + 1j * arr[:, 1]
            return PureState(vec, OUTPUT)
    raise ValueError(f"cannot interpret input state spec {spec!r}")


def initial_register(phi14: PureState) -> PureState:
    """``|phi>_1 |Phi+>_23 |phi>_4`` ordered as qubits (1, 2, 3, 4)."""
    return permute(tensor(resolve_input(phi14), bell_state("phi+", (2, 3))), REGISTER)


def ideal_output(phi14) -> PureState:
    """``C14 |Phi>_14``."""
    return apply_gate(resolve_input(phi14), Operator(CNOT, "C14"), OUTPUT)


def _bra(i, j) -> tuple[np.ndarray, np.ndarray]:
    return _KETS[str(i)], _KETS[j]


def branch_state(register: PureState, i: int, j: str) -> tuple[np.ndarray, float]:
    """Unnormalised amplitudes of qubits (1, 4) after projecting 2 on |i> and 3 on |j>."""
    b2, b3 = _bra(i, j)
    t = register.amplitudes.reshape(2, 2, 2, 2)
    out = np.einsum("abcd,b,c->ad", t, b2.conj(), b3.conj()).reshape(-1)
    return out, float(np.vdot(out, out).real)


@dataclass(frozen=True)
class CorrectionTable:
    entries: Mapping[tuple[int, str], tuple[str, str]]

    def __getitem__(self, key):
        return self.entries[key]

    def operators(self, i: int, j: str) -> tuple[Operator, Operator]:
        r1, r4 = self.entries[(i, j)]
        return Operator(PAULIS[r1], r1, (1,)), Operator(PAULIS[r4], r4, (4,))

    def to_json(self) -> dict:
        return {f"{i}{j}": list(v) for (i, j), v in self.entries.items()}


class CorrectionTableError(RuntimeError):
    pass


def _corrects(r1: str, r4: str, i: int, j: str, registers, targets) -> bool:
    m = np.kron(PAULIS[r1], PAULIS[r4])
    for reg, target in zip(registers, targets):
        amps, p = branch_state(reg, i, j)
        out = m @ amps / np.sqrt(p)
        if abs(abs(np.vdot(target, out)) ** 2 - 1) > 1e-10:
            return False
    return True


@lru_cache(maxsize=1)
def derive_correction_table(checks: int = 200, seed: int = 20240917) -> CorrectionTable:
    """Find, for each outcome pair, the Pauli pair restoring ``C14 |Phi>``.

    Every candidate in {I, X, Y, Z}^2 is tried against ``checks`` random
    product inputs; exactly one must succeed per branch.
    """
    rng = np.random.default_rng(seed)
    registers, targets = [], []
    for _ in range(checks):
        v1 = rng.normal(size=2) + 1j * rng.normal(size=2)
        v4 = rng.normal(size=2) + 1j * rng.normal(size=2)
        phi = PureState(np.kron(v1 / np.linalg.norm(v1), v4 / np.linalg.norm(v4)), OUTPUT)
        reg = apply_gate(apply_gate(initial_register(phi), C12), C34)
        registers.append(reg)
        targets.append(ideal_output(phi).amplitudes)
    entries = {}
    for i, j in BRANCHES:
        hits = [(a, b) for a in "IXYZ" for b in "IXYZ" if _corrects(a, b, i, j, registers, targets)]
        if len(hits) != 1:
            raise CorrectionTableError(f"branch {(i, j)}: expected one correction, found {hits}")
        entries[(i, j)] = hits[0]
    if entries[KEPT_BRANCH] != ("I", "I"):
        raise CorrectionTableError(f"kept branch needs correction {entries[KEPT_BRANCH]}")
    return CorrectionTable(entries)


def teleport_pure(phi14, i: int, j: str, corrected: bool = True) -> tuple[PureState, float]:
    """Noise-free output of one branch and its probability."""
    reg = apply_gate(apply_gate(initial_register(phi14), C12), C34)
    amps, p = branch_state(reg, i, j)
    if corrected:
        r1, r4 = derive_correction_table()[(i, j)]
        amps = np.kron(PAULIS[r1], PAULIS[r4]) @ amps
    return PureState(amps / np.sqrt(p), OUTPUT), p


@dataclass(frozen=True)
class TeleportResult:
    output: MixedState
    branch_probabilities: dict
    survival: float
    kept_probability: float


def _register_density(phi14, noise: NoiseConfig, comp, rng) -> MixedState:
    rho = initial_register(phi14).density()
    rho, _ = apply_channel(rho, noise, comp, rng)
    return apply_gate(apply_gate(rho, C12), C34)


def _branch_density(rho: np.ndarray, i: int, j: str) -> np.ndarray:
    b2, b3 = _bra(i, j)
    t = rho.reshape([2] * 8)
    out = np.einsum("abcdefgh,b,c,f,g->adeh", t, b2.conj(), b3.conj(), b2, b3)
    return out.reshape(4, 4)


def teleport_density(phi14, noise: NoiseConfig | None = None, mode: str = "post_selected",
                     comp: CompensatorSetting | None = None) -> TeleportResult:
    """Exact (ensemble) output of qubits 1 and 4, with per-trial jitter averaged."""
    _check_mode(mode)
    noise = noise or NoiseConfig.ideal()
    rho = _register_density(phi14, noise, comp, None).rho
    table = derive_correction_table()
    blocks = {b: _branch_density(rho, *b) for b in BRANCHES}
    probs = {b: float(np.trace(m).real) for b, m in blocks.items()}
    if mode == "post_selected":
        out = blocks[KEPT_BRANCH] / probs[KEPT_BRANCH]
        kept = probs[KEPT_BRANCH]
    else:
        out = np.zeros((4, 4), dtype=complex)
        for b, m in blocks.items():
            c = np.kron(PAULIS[table[b][0]], PAULIS[table[b][1]])
            out += c @ m @ c.conj().T
        out /= np.trace(out).real
        kept = 1.0
    out = (out + out.conj().T) / 2
    surv = noise.survival_probability
    return TeleportResult(MixedState(out, OUTPUT), probs, surv, kept * surv)


def projectors_for(setting) -> list[np.ndarray]:
    """Projectors for a basis pair like ``("Z", "X")``/``"ZX"`` or an alphabet setting like ``"0r"``."""
    if isinstance(setting, str) and len(setting) == 2 and all(c in ALPHABET for c in setting):
        return alphabet_projectors(setting)
    return measurement_setting(tuple(setting))


@dataclass(frozen=True)
class TrialStreams:
    jitter: np.random.Generator
    m2: np.random.Generator
    m3: np.random.Generator
    readout: np.random.Generator

    @classmethod
    def for_trial(cls, seed: int, trial_id: int) -> TrialStreams:
        return cls(*(make_rng(seed, trial_id, k) for k in (STREAM_JITTER, STREAM_M2, STREAM_M3, STREAM_READOUT)))

    @classmethod
    def shared(cls, rng: np.random.Generator) -> TrialStreams:
        return cls(rng, rng, rng, rng)


@dataclass(frozen=True)
class OutcomeRecord:
    trial_id: int
    i: int
    j: str
    corrections: tuple[str, str]
    post_selected: bool
    branch_probability: float
    setting: str | None = None
    outcome: str | None = None

    def key(self) -> tuple:
        """The fields a replay must reproduce exactly."""
        return (self.trial_id, self.i, self.j, self.post_selected, self.outcome)

    def to_json(self) -> dict:
        return {
            "trial_id": self.trial_id, "i": self.i, "j": self.j,
            "corrections": list(self.corrections), "post_selected": self.post_selected,
            "branch_probability": self.branch_probability, "setting": self.setting,
            "outcome": self.outcome,
        }


def prepare_register(phi14, noise: NoiseConfig, streams: TrialStreams,
                     comp: CompensatorSetting | None = None) -> MixedState:
    """Joint state of one trial after the pair has crossed the fibre."""
    rho = initial_register(phi14).density()
    rho, _ = apply_channel(rho, noise, comp, streams.jitter)
    return rho


def readout(state: MixedState, setting, rng: np.random.Generator) -> str:
    """Sample the coincidence outcome of qubits 1 and 4 as a two-bit string."""
    rho = partial_trace(state, OUTPUT).rho
    probs = np.array([np.trace(p @ rho).real for p in projectors_for(setting)])
    k = int(np.searchsorted(np.cumsum(probs / probs.sum()), rng.random(), side="right"))
    return tomo.OUTCOMES[min(k, 3)]


def run_trial(phi14, noise: NoiseConfig | None = None, mode: str = "post_selected",
              rng: np.random.Generator | TrialStreams | None = None, *, trial_id: int = 0,
              setting=None, comp: CompensatorSetting | None = None) -> tuple[OutcomeRecord, MixedState]:
    """One sampled run of the protocol.

    Draw order: fibre jitter, qubit-2 outcome, qubit-3 outcome, then (if a
    measurement ``setting`` is given and the trial is kept) the coincidence
    readout of qubits 1 and 4. With a :class:`TrialStreams` each draw uses its
    own stream, which is what the distributed runner reproduces.
    """
    _check_mode(mode)
    noise = noise or NoiseConfig.ideal()
    if rng is None:
        rng = np.random.default_rng()
    streams = rng if isinstance(rng, TrialStreams) else TrialStreams.shared(rng)
    state = prepare_register(phi14, noise, streams, comp)
    state = apply_gate(apply_gate(state, C12), C34)
    m2 = measure_qubit(state, 2, "Z", streams.m2)
    m3 = measure_qubit(m2.state, 3, "X", streams.m3)
    i, j = m2.outcome, m3.outcome
    state = m3.state
    kept = mode == "corrected" or (i, j) == KEPT_BRANCH
    corrections = ("I", "I")
    if mode == "corrected":
        r1, r4 = derive_correction_table().operators(i, j)
        state = apply_gate(apply_gate(state, r1), r4)
        corrections = (r1.name, r4.name)
    outcome = None
    if setting is not None and kept:
        outcome = readout(state, setting, streams.readout)
    rec = OutcomeRecord(trial_id, i, j, corrections, kept, m2.probability * m3.probability,
                        None if setting is None else "".join(setting), outcome)
    return rec, partial_trace(state, OUTPUT)


@dataclass
class CountTable:
    setting: str
    counts: dict
    discarded: float
    shots: int | None

    @property
    def exact(self) -> bool:
        return self.shots is None

    @property
    def kept(self) -> float:
        return float(sum(self.counts.values()))

    def to_json(self) -> dict:
        return {"setting": self.setting, "counts": dict(self.counts), "discarded": self.discarded,
                "shots": "exact" if self.shots is None else self.shots}


def outcome_probabilities(rho: np.ndarray, setting) -> np.ndarray:
    p = np.array([np.trace(m @ rho).real for m in projectors_for(setting)])
    p = np.clip(p, 0, None)
    return p / p.sum()


def sample_from(rho: np.ndarray, setting, shots: int | None, keep_probability: float,
                rng: np.random.Generator | None) -> CountTable:
    """Counts of ``shots`` recorded coincidences for one setting.

    Emitted pairs are lost or post-selected away with probability
    ``1 - keep_probability``; the number discarded on the way to ``shots``
    recorded events is negative-binomial. ``shots=None`` gives probabilities.
    """
    probs = outcome_probabilities(rho, setting)
    name = "".join(setting)
    if shots is None:
        return CountTable(name, dict(zip(tomo.OUTCOMES, map(float, probs))), 1.0 - keep_probability, None)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if not 0 < keep_probability <= 1:
        raise ValueError(f"keep probability must lie in (0, 1], got {keep_probability}")
    draw = rng.multinomial(int(shots), probs)
    discarded = int(rng.negative_binomial(int(shots), keep_probability)) if keep_probability < 1 else 0
    return CountTable(name, dict(zip(tomo.OUTCOMES, map(int, draw))), discarded, int(shots))


def sample_counts(phi14, setting, shots: int | None, noise: NoiseConfig | None = None,
                  mode: str = "post_selected", rng: np.random.Generator | None = None,
                  comp: CompensatorSetting | None = None) -> CountTable:
    """Coincidence counts for one measurement setting; ``shots=None`` is the exact limit.

    Trials are independent, so the jitter-averaged output state gives the
    exact per-trial outcome distribution.
    """
    res = teleport_density(phi14, noise, mode, comp)
    return sample_from(res.output.rho, setting, shots, res.kept_probability, rng)


def tomography_counts(rho: np.ndarray, shots: int | None, keep_probability: float,
                      seed: int, stream: int = 0) -> dict[str, dict]:
    """All 16 alphabet settings for one output state, each with its own RNG stream."""
    out = {}
    for k, s in enumerate(tomo.SETTINGS):
        rng = None if shots is None else make_rng(seed, STREAM_COUNTS, stream, k)
        out[s] = sample_from(rho, s, shots, keep_probability, rng).counts
    return out


def truth_table_fidelity(matrix: np.ndarray) -> float:
    """Mean probability of the CNOT output over the four computational inputs."""
    m = np.asarray(matrix, dtype=float)
    idx = {o: k for k, o in enumerate(TRUTH_INPUTS)}
    return float(np.mean([m[idx[a], idx[CNOT_OUTPUT[a]]] for a in TRUTH_INPUTS]))


@dataclass
class TruthTable:
    matrix: np.ndarray
    fidelity: float
    counts: dict = field(default_factory=dict)


def truth_table(noise: NoiseConfig | None = None, shots: int | None = None, seed: int = 0,
                mode: str = "post_selected") -> TruthTable:
    """Rows are inputs |00>..|11> of qubits (1, 4); columns are Z-basis outcomes."""
    rows, counts = [], {}
    for k, lbl in enumerate(TRUTH_INPUTS):
        rng = None if shots is None else make_rng(seed, STREAM_COUNTS, 100 + k)
        table = sample_counts(lbl, "ZZ", shots, noise, mode, rng)
        counts[lbl] = table.to_json()
        c = np.array([table.counts[o] for o in tomo.OUTCOMES], dtype=float)
        rows.append(c / c.sum() if c.sum() > 0 else np.full(4, 0.25))
    m = np.array(rows)
    return TruthTable(m, truth_table_fidelity(m), counts)


@dataclass
class EntanglingResult:
    states: dict
    fidelities: dict
    counts: dict
    raw: dict

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean(list(self.fidelities.values())))


def entangling_run(noise: NoiseConfig | None = None, shots: int | None = None, seed: int = 0,
                   mode: str = "post_selected", inputs: Sequence[str] = tuple(ENTANGLING_TARGETS)) -> EntanglingResult:
    """Teleported CNOT on |+-> (x) |01> inputs, tomography of each output vs its Bell target."""
    states, fids, counts, raw = {}, {}, {}, {}
    for k, lbl in enumerate(inputs):
        res = teleport_density(lbl, noise, mode)
        c = tomography_counts(res.output.rho, shots, res.kept_probability, seed, stream=200 + k)
        rho = tomo.reconstruct_state(c)
        target = bell_state(ENTANGLING_TARGETS[lbl], OUTPUT)
        states[lbl], counts[lbl] = rho, c
        raw[lbl] = tomo.linear_inversion(c)
        fids[lbl] = fidelity_state(rho, target)
    return EntanglingResult(states, fids, counts, raw)


@dataclass
class ProcessResult:
    chi: tomo.ChiMatrix
    fidelity: float
    counts: dict


def process_run(noise: NoiseConfig | None = None, shots: int | None = None, seed: int = 0,
                mode: str = "post_selected") -> ProcessResult:
    """256-projection process tomography of the teleported gate."""
    counts = {}
    for k, lbl in enumerate(tomo.PROCESS_INPUTS):
        state = PureState(np.kron(*(tomo.alphabet_state(c) for c in lbl)), OUTPUT)
        res = teleport_density(state, noise, mode)
        counts[lbl] = tomography_counts(res.output.rho, shots, res.kept_probability, seed, stream=300 + k)
    chi = tomo.reconstruct_process(counts)
    return ProcessResult(chi, tomo.fidelity_process(chi, tomo.chi_of_unitary(CNOT)), counts)


def distributed_pair(noise: NoiseConfig | None = None, comp: CompensatorSetting | None = None) -> MixedState:
    """Exact state of qubits (2, 3) after the fibre, before any local gate."""
    noise = noise or NoiseConfig.ideal()
    rho, _ = apply_channel(bell_state("phi+", (2, 3)).density(), noise, comp)
    return rho

