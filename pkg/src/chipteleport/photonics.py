"""Linear-optical path encoding of two qubits per photon.

Each photon occupies one of four waveguide modes; mode ``m`` stands for the
ket ``|m1 m0>`` of its two qubits (first qubit is the high bit). Photon A
carries qubits (1, 2) and photon B carries qubits (3, 4).

All components here are lossless. Insertion losses are accounted for in
:mod:`chipteleport.channel`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .qcore import ATOL, BASES, H, PureState, _KETS, kron

N_MODES = 4
MODE_KETS = ("00", "01", "10", "11")
PHOTON_QUBITS = {"A": (1, 2), "B": (3, 4)}

# tomography alphabet: token -> (projected state, orthogonal partner)
ALPHABET = "01+r"
_ALPHABET_PAIRS = {
    "0": (_KETS["0"], _KETS["1"]),
    "1": (_KETS["1"], _KETS["0"]),
    "+": (_KETS["+"], _KETS["-"]),
    "r": (_KETS["r"], _KETS["l"]),
}


def mmi_unitary() -> np.ndarray:
    """Symmetric 50:50 multimode-interference coupler."""
    return np.array([[1, 1j], [1j, 1]], dtype=complex) / np.sqrt(2)


def phase_shifter(theta: float) -> np.ndarray:
    """Thermo-optic phase on the upper arm of a mode pair."""
    return np.diag([np.exp(1j * theta), 1]).astype(complex)


def crosser_unitary() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def mzi_unitary(theta: float, phi: float) -> np.ndarray:
    """Balanced MZI: external phase ``phi`` at the input, then MMI, internal ``theta``, MMI.

    ``theta = 0`` is the cross state and ``theta = pi`` the bar state.
    """
    b = mmi_unitary()
    return b @ phase_shifter(theta) @ b @ phase_shifter(phi)


def preparation_vector(theta: float, phi: float) -> np.ndarray:
    """Qubit state launched by a preparation MZI fed in its upper port.

    On the preparation side the external phase shifter sits after the
    interferometer, which is the transpose of :func:`mzi_unitary`.
    """
    return mzi_unitary(theta, phi).T[:, 0]


def preparation_phases(state: Sequence[complex]) -> tuple[float, float]:
    """``(theta, phi)`` with ``preparation_vector(theta, phi)`` equal to ``state`` up to phase."""
    a, b = np.asarray(state, dtype=complex) / np.linalg.norm(state)
    theta = 2 * np.arctan2(abs(a), abs(b))
    if abs(a) < 1e-15 or abs(b) < 1e-15:
        return float(theta), 0.0
    phi = (np.angle(a) - np.angle(b)) % (2 * np.pi)
    return float(theta), float(phi)


def measurement_phases(state: Sequence[complex]) -> tuple[float, float]:
    """MZI phases that route ``state`` to output port 0 (and its orthogonal partner to port 1)."""
    # <0|mzi(theta, phi) is preparation_vector(theta, phi)^T
    return preparation_phases(np.conj(np.asarray(state, dtype=complex)))


_KINDS = ("mmi", "ps", "crosser", "pbrc", "mzi")


@dataclass(frozen=True)
class CircuitElement:
    """One on-chip component acting on a pair of path modes.

    ``ps`` may also act on a single mode. ``params`` holds ``(theta,)`` for a
    phase shifter and ``(theta, phi)`` for an MZI.
    """

    kind: str
    modes: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown element kind {self.kind!r}")
        modes = tuple(int(m) for m in self.modes)
        want = (1, 2) if self.kind == "ps" else (2,)
        if len(modes) not in want or len(set(modes)) != len(modes):
            raise ValueError(f"{self.kind} needs {want} distinct modes, got {modes}")
        nparams = {"mmi": 0, "ps": 1, "crosser": 0, "pbrc": 0, "mzi": 2}[self.kind]
        params = tuple(float(p) for p in self.params)
        if len(params) != nparams:
            raise ValueError(f"{self.kind} takes {nparams} parameters, got {len(params)}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "params", params)

    def local_matrix(self) -> np.ndarray:
        if self.kind == "mmi":
            return mmi_unitary()
        if self.kind == "crosser":
            return crosser_unitary()
        if self.kind == "pbrc":
            # path <-> polarisation relabelling; logically the identity
            return np.eye(2, dtype=complex)
        if self.kind == "mzi":
            return mzi_unitary(*self.params)
        if len(self.modes) == 1:
            return np.array([[np.exp(1j * self.params[0])]])
        return phase_shifter(self.params[0])

    def unitary(self, n_modes: int = N_MODES) -> np.ndarray:
        if max(self.modes) >= n_modes:
            raise ValueError(f"mode {max(self.modes)} outside {n_modes}-mode register")
        u = np.eye(n_modes, dtype=complex)
        idx = np.ix_(self.modes, self.modes)
        u[idx] = self.local_matrix()
        return u

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "modes": list(self.modes)}

    @classmethod
    def from_json(cls, obj: dict) -> CircuitElement:
        return cls(obj["kind"], tuple(obj["modes"]), tuple(obj.get("params", ())))


def circuit_unitary(elements: Iterable[CircuitElement], n_modes: int = N_MODES) -> np.ndarray:
    """Elements in propagation order, composed into one mode transformation."""
    u = np.eye(n_modes, dtype=complex)
    for el in elements:
        u = el.unitary(n_modes) @ u
    return u


def load_circuit(path) -> list[CircuitElement]:
    with open(path) as fh:
        return [CircuitElement.from_json(o) for o in json.load(fh)]


def dump_circuit(elements: Iterable[CircuitElement], path) -> None:
    with open(path, "w") as fh:
        json.dump([el.to_json() for el in elements], fh, indent=2)


@dataclass(frozen=True)
class PathRegister:
    modes: np.ndarray
    photon: str = "A"

    def __post_init__(self):
        if self.photon not in PHOTON_QUBITS:
            raise ValueError(f"photon must be 'A' or 'B', got {self.photon!r}")
        m = np.array(self.modes, dtype=complex).reshape(-1)
        if m.size != N_MODES:
            raise ValueError(f"path register has {N_MODES} modes, got {m.size}")
        if abs(np.linalg.norm(m) - 1) > ATOL:
            raise ValueError("path register is not normalised")
        m.setflags(write=False)
        object.__setattr__(self, "modes", m)

    @property
    def qubits(self) -> tuple[int, int]:
        return PHOTON_QUBITS[self.photon]

    def to_state(self) -> PureState:
        return PureState(self.modes, self.qubits)

    @classmethod
    def from_state(cls, state: PureState, photon: str) -> PathRegister:
        if state.labels != PHOTON_QUBITS[photon]:
            raise ValueError(f"photon {photon} carries qubits {PHOTON_QUBITS[photon]}, not {state.labels}")
        return cls(state.amplitudes, photon)

    def apply(self, elements: Iterable[CircuitElement]) -> PathRegister:
        return PathRegister(circuit_unitary(elements) @ self.modes, self.photon)


def crosser(modes: tuple[int, int] = (2, 3)) -> CircuitElement:
    return CircuitElement("crosser", modes)


CNOT_CROSSER = (crosser((2, 3)),)


def local_cnot_via_crosser(reg: PathRegister) -> PathRegister:
    """CNOT (control = first qubit) by crossing the two paths of the control's |1> branch."""
    return reg.apply(CNOT_CROSSER)


def _qubit_pairs(qubit_index: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Mode pairs on which a single-qubit MZI acts for the first (0) or second (1) qubit."""
    return ((0, 2), (1, 3)) if qubit_index == 0 else ((0, 1), (2, 3))


# Hadamard on the first qubit of a photon: MMI on (0,2) and (1,3) dressed with
# -pi/2 phases on the lower arms. Physically the (0,2)/(1,3) pairing is reached
# with a crosser on the middle paths.
M3_NETWORK = (
    crosser((1, 2)),
    CircuitElement("ps", (1,), (-np.pi / 2,)),
    CircuitElement("ps", (3,), (-np.pi / 2,)),
    CircuitElement("mmi", (0, 1)),
    CircuitElement("mmi", (2, 3)),
    CircuitElement("ps", (1,), (-np.pi / 2,)),
    CircuitElement("ps", (3,), (-np.pi / 2,)),
    crosser((1, 2)),
)


def m3_basis_network(reg: PathRegister) -> PathRegister:
    """Rotate qubit 3 from the X basis into the path basis of photon B."""
    if reg.photon != "B":
        raise ValueError("the M3 network acts on photon B")
    return reg.apply(M3_NETWORK)


def single_qubit_mzis(qubit_index: int, theta: float, phi: float, orientation: str = "measure") -> list[CircuitElement]:
    """Two identical MZIs realising one single-qubit unitary on a photon.

    ``orientation="prepare"`` moves the external phase to the output side, so
    the element list is ``[MZI(theta, 0), PS(phi)]`` per mode pair.
    """
    out = []
    for pair in _qubit_pairs(qubit_index):
        if orientation == "measure":
            out.append(CircuitElement("mzi", pair, (theta, phi)))
        elif orientation == "prepare":
            out.append(CircuitElement("mzi", pair, (theta, 0.0)))
            out.append(CircuitElement("ps", (pair[0],), (phi,)))
        else:
            raise ValueError(f"unknown orientation {orientation!r}")
    return out


def prepare_product_state(settings: Sequence[Sequence[float]]) -> PureState:
    """State-preparation region: ``|phi>_1 (x) |phi>_4`` from four MZI phase pairs.

    ``settings`` lists ``(theta, phi)`` for the two qubit-1 MZIs (one per path of
    qubit 2) followed by the two qubit-4 MZIs (one per path of qubit 3). The two
    MZIs of a qubit must agree, otherwise the prepared state would be entangled
    with the shared pair.
    """
    settings = [tuple(float(x) for x in s) for s in settings]
    if len(settings) != 4 or any(len(s) != 2 for s in settings):
        raise ValueError("expected four (theta, phi) pairs")
    if not (np.allclose(settings[0], settings[1]) and np.allclose(settings[2], settings[3])):
        raise ValueError("paired MZIs of a qubit must share their settings")
    for s in settings:
        if any(not 0 <= x < 2 * np.pi for x in s):
            raise ValueError(f"phases must lie in [0, 2pi), got {s}")
    v1 = preparation_vector(*settings[0])
    v4 = preparation_vector(*settings[2])
    return PureState(kron(v1, v4), (1, 4))


def product_settings(state1: Sequence[complex], state4: Sequence[complex]) -> list[tuple[float, float]]:
    """Phase settings for :func:`prepare_product_state` reaching ``state1 (x) state4``."""
    s1, s4 = preparation_phases(state1), preparation_phases(state4)
    return [s1, s1, s4, s4]


def measurement_setting(bases: Sequence[str]) -> list[np.ndarray]:
    """Four rank-1 projectors of a two-qubit product eigenbasis.

    Ordered by outcome index ``2 * a + b`` where 0 is the +1 eigenvector.
    """
    if len(bases) != 2:
        raise ValueError("expected one basis per qubit")
    vecs = []
    for b in bases:
        try:
            vecs.append(BASES[str(b).upper()][0])
        except KeyError:
            raise ValueError(f"unknown basis token {b!r}") from None
    return [np.outer(v, v.conj()) for v in (kron(x, y) for x in vecs[0] for y in vecs[1])]


def alphabet_projectors(setting: str) -> list[np.ndarray]:
    """Projectors for a two-letter tomography setting such as ``"0r"``.

    Outcome 0 on a qubit means the photon exited the port assigned to the
    alphabet state itself; outcome 1 is the orthogonal port.
    """
    if len(setting) != 2 or any(c not in ALPHABET for c in setting):
        raise ValueError(f"setting must be two letters from {ALPHABET!r}, got {setting!r}")
    p, q = (_ALPHABET_PAIRS[c] for c in setting)
    return [np.outer(v, v.conj()) for v in (kron(x, y) for x in p for y in q)]


def alphabet_state(token: str) -> np.ndarray:
    return _ALPHABET_PAIRS[token][0].copy()


def chip_circuit(photon: str, prep: tuple[float, float], meas: tuple[float, float]) -> list[CircuitElement]:
    """Full element list for one chip of the teleported-CNOT experiment.

    Chip A (photon A): prepare qubit 1, crosser CNOT C12, analyse qubit 1.
    Chip B (photon B): prepare qubit 4, crosser CNOT C34, M3 network, analyse qubit 4.
    The two PBRCs at the fibre interface are logical identities and are listed
    for completeness.
    """
    if photon == "A":
        return [
            CircuitElement("pbrc", (0, 1)),
            *single_qubit_mzis(0, *prep, orientation="prepare"),
            *CNOT_CROSSER,
            *single_qubit_mzis(0, *meas),
        ]
    if photon == "B":
        return [
            CircuitElement("pbrc", (0, 1)),
            *single_qubit_mzis(1, *prep, orientation="prepare"),
            *CNOT_CROSSER,
            *M3_NETWORK,
            *single_qubit_mzis(1, *meas),
        ]
    raise ValueError(f"unknown photon {photon!r}")


def two_photon_output(joint: np.ndarray, circuit_a: Sequence[CircuitElement],
                      circuit_b: Sequence[CircuitElement]) -> np.ndarray:
    """Propagate a joint amplitude ``joint[mode_A, mode_B]`` of two distinguishable photons.

    Returns the 4x4 coincidence probability table ``P[port_A, port_B]``.
    """
    ua, ub = circuit_unitary(circuit_a), circuit_unitary(circuit_b)
    out = ua @ np.asarray(joint, dtype=complex) @ ub.T
    return np.abs(out) ** 2


def source_amplitudes() -> np.ndarray:
    """Path-entangled pair entering the chips: qubits 2, 3 in Phi+, qubits 1, 4 in |0>."""
    joint = np.zeros((N_MODES, N_MODES), dtype=complex)
    # photon A mode = 2*q1 + q2, photon B mode = 2*q3 + q4
    joint[0, 0] = joint[1, 2] = 1 / np.sqrt(2)
    return joint


# D1 / D2: ports with qubit 2 = 0 on chip A and qubit 3 = + (port group 0) on chip B
D1_PORTS = (0, 2)
D2_PORTS = (0, 1)
