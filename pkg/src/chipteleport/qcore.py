"""Dense state-vector and density-matrix algebra for small labelled qubit registers.

Qubits carry integer labels (the protocol uses 1..4). Within a register the
first label is the most significant bit of the basis index, so ``|10>`` on
labels ``(1, 4)`` is index 2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

ATOL = 1e-12
EIG_ATOL = 1e-10

SQRT2_INV = 1 / np.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT2_INV
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

# single-qubit kets by token; "r" is |0> + i|1> (right-circular in polarisation terms)
_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) * SQRT2_INV,
    "-": np.array([1, -1], dtype=complex) * SQRT2_INV,
    "r": np.array([1, 1j], dtype=complex) * SQRT2_INV,
    "l": np.array([1, -1j], dtype=complex) * SQRT2_INV,
}

# eigenbasis (outcome 0 first) of each measurement basis, with outcome labels
BASES = {
    "Z": ((_KETS["0"], _KETS["1"]), (0, 1)),
    "X": ((_KETS["+"], _KETS["-"]), ("+", "-")),
    "Y": ((_KETS["r"], _KETS["l"]), ("+i", "-i")),
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _check_labels(labels: Sequence[int], n: int) -> tuple[int, ...]:
    labels = tuple(int(q) for q in labels)
    if len(labels) != n:
        raise ValueError(f"expected {n} labels, got {len(labels)}")
    if len(set(labels)) != n:
        raise ValueError(f"duplicate qubit labels {labels}")
    return labels


def _nqubits(dim: int) -> int:
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if n < 0 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    labels: tuple[int, ...] = None

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = _nqubits(amps.size)
        labels = tuple(range(1, n + 1)) if self.labels is None else self.labels
        object.__setattr__(self, "labels", _check_labels(labels, n))
        norm = np.linalg.norm(amps)
        if abs(norm - 1) > ATOL:
            raise ValueError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def n(self) -> int:
        return len(self.labels)

    def density(self) -> MixedState:
        a = self.amplitudes
        return MixedState(np.outer(a, a.conj()), self.labels)


@dataclass(frozen=True)
class MixedState:
    rho: np.ndarray
    labels: tuple[int, ...] = None

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got {rho.shape}")
        n = _nqubits(rho.shape[0])
        labels = tuple(range(1, n + 1)) if self.labels is None else self.labels
        object.__setattr__(self, "labels", _check_labels(labels, n))
        if np.max(np.abs(rho - rho.conj().T)) > ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > ATOL:
            raise ValueError(f"density matrix trace {np.trace(rho).real!r} differs from 1")
        if np.linalg.eigvalsh(rho)[0] < -EIG_ATOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "rho", _readonly(rho))

    @property
    def n(self) -> int:
        return len(self.labels)

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def density(self) -> MixedState:
        return self


@dataclass(frozen=True)
class Operator:
    """A ``2^k x 2^k`` matrix acting on ``k`` qubits.

    ``targets`` is an optional default placement; :func:`apply_gate` may override it.
    """

    matrix: np.ndarray
    name: str = ""
    targets: tuple[int, ...] = ()
    unitary: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        _nqubits(m.shape[0])
        if self.unitary and np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) > ATOL:
            raise ValueError(f"operator {self.name!r} flagged unitary but U U^dag != I")
        object.__setattr__(self, "matrix", _readonly(m))
        object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def arity(self) -> int:
        return _nqubits(self.matrix.shape[0])

    @property
    def dag(self) -> Operator:
        return Operator(self.matrix.conj().T, f"{self.name}^dag", self.targets, self.unitary)


def pauli(name: str) -> Operator:
    """Tensor product of Pauli letters, e.g. ``pauli("ZX")``."""
    return Operator(kron(*(PAULIS[c] for c in name)), name)


def cnot() -> Operator:
    return Operator(CNOT, "CNOT")


def kron(*factors: np.ndarray) -> np.ndarray:
    return reduce(np.kron, factors)


def ket(tokens: str, labels: Sequence[int] | None = None) -> PureState:
    """Product state from single-qubit tokens in ``01+-rl``; ``ket("+0")`` is |+>|0>."""
    return PureState(kron(*(_KETS[t] for t in tokens)), labels)


def tensor(*states: PureState | MixedState) -> PureState | MixedState:
    """Tensor product; labels are concatenated in argument order."""
    labels = sum((s.labels for s in states), ())
    if all(isinstance(s, PureState) for s in states):
        return PureState(kron(*(s.amplitudes for s in states)), labels)
    return MixedState(kron(*(s.density().rho for s in states)), labels)


_BELL = {
    "phi+": (0, 1),
    "phi-": (0, -1),
    "psi+": (1, 1),
    "psi-": (1, -1),
}
BELL_KINDS = tuple(_BELL)


def bell_state(kind: str, labels: Sequence[int] | None = None) -> PureState:
    """One of ``phi+``, ``phi-``, ``psi+``, ``psi-``."""
    try:
        a, sign = _BELL[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown Bell state {kind!r}; expected one of {BELL_KINDS}") from None
    amps = np.zeros(4, dtype=complex)
    amps[a] = SQRT2_INV
    amps[3 - a] = sign * SQRT2_INV
    return PureState(amps, labels)


def _axes_for(labels: tuple[int, ...], targets: Sequence[int]) -> list[int]:
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate targets {targets}")
    missing = [t for t in targets if t not in labels]
    if missing:
        raise ValueError(f"qubits {missing} not in register {labels}")
    return [labels.index(t) for t in targets]


def apply_matrix(vec_or_tensor: np.ndarray, matrix: np.ndarray, axes: Sequence[int], n: int) -> np.ndarray:
    """Contract ``matrix`` into the given qubit axes of a length-``2^n`` vector.

    Works column-wise on a ``(2^n, m)`` array too. No normalisation is done, so
    projectors and Kraus operators are fine here.
    """
    k = len(axes)
    if matrix.shape != (2**k, 2**k):
        raise ValueError(f"matrix shape {matrix.shape} does not match {k} target qubits")
    extra = vec_or_tensor.shape[1:]
    t = vec_or_tensor.reshape([2] * n + list(extra))
    m = matrix.reshape([2] * (2 * k))
    t = np.tensordot(m, t, axes=(list(range(k, 2 * k)), list(axes)))
    # tensordot puts the new axes first; move them back into place
    t = np.moveaxis(t, list(range(k)), list(axes))
    return t.reshape(vec_or_tensor.shape)


def _conjugate(rho: np.ndarray, matrix: np.ndarray, axes: Sequence[int], n: int) -> np.ndarray:
    rho = apply_matrix(rho, matrix, axes, n)
    return apply_matrix(rho.conj().T, matrix, axes, n).conj().T


def apply_gate(state, op: Operator, targets: Sequence[int] | None = None):
    """Apply ``op`` on the ``targets`` labels of ``state`` (pure or mixed)."""
    targets = op.targets if targets is None else tuple(targets)
    if len(targets) != op.arity:
        raise ValueError(f"operator arity {op.arity} does not match targets {targets}")
    axes = _axes_for(state.labels, targets)
    if isinstance(state, PureState):
        return PureState(apply_matrix(state.amplitudes, op.matrix, axes, state.n), state.labels)
    rho = _conjugate(state.rho, op.matrix, axes, state.n)
    return MixedState((rho + rho.conj().T) / 2, state.labels)


def embed(matrix: np.ndarray, targets: Sequence[int], labels: Sequence[int]) -> np.ndarray:
    """Full-register matrix of ``matrix`` acting on ``targets``."""
    labels = tuple(labels)
    n = len(labels)
    return apply_matrix(np.eye(2**n, dtype=complex), matrix, _axes_for(labels, targets), n)


class Measurement(NamedTuple):
    outcome: int | str
    state: PureState | MixedState
    probability: float


def outcome_probabilities(state, qubit: int, basis: str = "Z") -> tuple[float, float]:
    """Born probabilities of the two eigen-outcomes of ``basis`` on ``qubit``."""
    vecs, _ = _basis(basis)
    return tuple(_branch(state, qubit, v)[1] for v in vecs)


def _basis(basis: str):
    try:
        return BASES[basis.upper()]
    except KeyError:
        raise ValueError(f"unknown basis {basis!r}; expected Z, X or Y") from None


def _branch(state, qubit: int, vec: np.ndarray):
    """Unnormalised projection of ``state`` onto ``vec`` on ``qubit`` and its weight."""
    proj = np.outer(vec, vec.conj())
    axes = _axes_for(state.labels, [qubit])
    if isinstance(state, PureState):
        a = apply_matrix(state.amplitudes, proj, axes, state.n)
        return a, float(np.vdot(a, a).real)
    rho = _conjugate(state.rho, proj, axes, state.n)
    return rho, float(np.trace(rho).real)


def measure_qubit(state, qubit: int, basis: str, rng: np.random.Generator | None = None,
                  outcome: int | str | None = None) -> Measurement:
    """Projectively measure one qubit, keeping it in the register.

    Either ``rng`` samples the outcome from a single uniform draw, or ``outcome``
    selects a branch deterministically. The collapsed state is renormalised.
    """
    vecs, labels = _basis(basis)
    branches = [_branch(state, qubit, v) for v in vecs]
    if outcome is None:
        if rng is None:
            raise ValueError("measure_qubit needs an rng or an explicit outcome")
        k = 0 if rng.random() < branches[0][1] else 1
    else:
        if outcome not in labels:
            raise ValueError(f"outcome {outcome!r} not valid for basis {basis}")
        k = labels.index(outcome)
    vec, p = branches[k]
    if p <= 1e-15:
        raise ValueError(f"outcome {labels[k]!r} of qubit {qubit} has zero probability")
    if isinstance(state, PureState):
        collapsed = PureState(vec / np.sqrt(p), state.labels)
    else:
        rho = vec / p
        collapsed = MixedState((rho + rho.conj().T) / 2, state.labels)
    return Measurement(labels[k], collapsed, p)


def partial_trace(state, keep: Sequence[int]) -> MixedState:
    keep = [int(q) for q in keep]
    if not keep:
        raise ValueError("keep set must be nonempty")
    axes = _axes_for(state.labels, keep)
    n = state.n
    rho = state.density().rho.reshape([2] * (2 * n))
    drop = [i for i in range(n) if i not in axes]
    # order kept axes as requested, then trace dropped ones pairwise
    perm = axes + drop + [n + i for i in axes] + [n + i for i in drop]
    rho = rho.transpose(perm)
    k, d = len(axes), len(drop)
    rho = rho.reshape(2**k, 2**d, 2**k, 2**d)
    rho = np.einsum("ajbj->ab", rho)
    return MixedState((rho + rho.conj().T) / 2, tuple(keep))


def fidelity_state(measured, ideal) -> float:
    """Overlap ``Tr(rho_measured rho_ideal)``; exact fidelity when ``ideal`` is pure."""
    a = measured.density().rho
    b = ideal.density().rho
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    if isinstance(ideal, MixedState) and ideal.purity() < 1 - 1e-9:
        warnings.warn("fidelity_state with a mixed ideal is an overlap, not a fidelity", stacklevel=2)
    f = np.trace(a @ b)
    if abs(f.imag) > 1e-10:
        warnings.warn(f"fidelity has imaginary residue {f.imag:.3e}", stacklevel=2)
    return float(f.real)


def maximally_mixed(labels: Sequence[int]) -> MixedState:
    d = 2 ** len(labels)
    return MixedState(np.eye(d, dtype=complex) / d, tuple(labels))


def random_state(rng: np.random.Generator, n: int = 1, labels=None) -> PureState:
    """Haar-random pure state."""
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return PureState(v / np.linalg.norm(v), labels)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-random unitary via QR with phase fix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(rng: np.random.Generator, n: int = 2, rank: int | None = None) -> MixedState:
    d = 2**n
    g = rng.normal(size=(d, rank or d)) + 1j * rng.normal(size=(d, rank or d))
    rho = g @ g.conj().T
    return MixedState(rho / np.trace(rho).real)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed`` and a stream path.

    ``make_rng(s, t, k)`` gives an independent, reproducible stream for
    trial ``t`` and purpose ``k``.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def matrix_to_json(m: np.ndarray) -> dict:
    """Row-major ``[re, im]`` pairs with a shape header."""
    m = np.asarray(m, dtype=complex)
    return {"shape": list(m.shape), "data": [[float(z.real), float(z.imag)] for z in m.reshape(-1)]}


def matrix_from_json(obj: dict) -> np.ndarray:
    data = np.asarray(obj["data"], dtype=float)
    shape = tuple(obj["shape"])
    if data.shape != (int(np.prod(shape)), 2):
        raise ValueError(f"data length {data.shape} does not match shape {shape}")
    return (data[:, 0] + 1j * data[:, 1]).reshape(shape)


def permute(state, labels: Sequence[int]):
    """Same state with its qubits listed in a new ``labels`` order."""
    labels = tuple(int(q) for q in labels)
    if sorted(labels) != sorted(state.labels):
        raise ValueError(f"{labels} is not a permutation of {state.labels}")
    n = state.n
    perm = [state.labels.index(q) for q in labels]
    if isinstance(state, PureState):
        return PureState(state.amplitudes.reshape([2] * n).transpose(perm).reshape(-1), labels)
    rho = state.rho.reshape([2] * (2 * n)).transpose(perm + [n + p for p in perm])
    return MixedState(rho.reshape(2**n, 2**n), labels)
