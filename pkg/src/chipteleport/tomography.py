"""Two-qubit state and process tomography from the 16-setting alphabet.

Counts are keyed by two-letter settings over the alphabet ``0 1 + r``
(``r`` = |0> + i|1>) and by two-bit outcome strings. Outcome bit 0 on a
qubit means the photon left through the port of the alphabet state itself.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np

from .photonics import ALPHABET, alphabet_projectors, alphabet_state
from .qcore import PAULIS, MixedState, kron, make_rng

log = logging.getLogger(__name__)

SETTINGS = tuple(a + b for a in ALPHABET for b in ALPHABET)
OUTCOMES = ("00", "01", "10", "11")
PAULI_LABELS = tuple(a + b for a in "IXYZ" for b in "IXYZ")

# alphabet letter -> (Pauli measured, eigenvalue of outcome 0)
_LETTER_BASIS = {"0": ("Z", 1), "1": ("Z", -1), "+": ("X", 1), "r": ("Y", 1)}

Counts = Mapping[str, Mapping[str, float]]


def exact_counts(rho: np.ndarray, settings: Sequence[str] = SETTINGS) -> dict[str, dict[str, float]]:
    """Infinite-shot 'counts': outcome probabilities of every setting."""
    rho = np.asarray(rho)
    out = {}
    for s in settings:
        probs = [float(np.real(np.trace(p @ rho))) for p in alphabet_projectors(s)]
        out[s] = dict(zip(OUTCOMES, probs))
    return out


def pauli_expectations(counts: Counts) -> dict[str, float]:
    """Pool every setting compatible with a Pauli product into one estimate."""
    missing = [s for s in SETTINGS if s not in counts]
    if missing:
        raise ValueError(f"missing tomography settings {missing}")
    totals, signed = {}, {}
    for s in SETTINGS:
        table = counts[s]
        n = float(sum(table.get(o, 0) for o in OUTCOMES))
        if n <= 0:
            raise ValueError(f"setting {s!r} has no counts")
        (b1, e1), (b2, e2) = _LETTER_BASIS[s[0]], _LETTER_BASIS[s[1]]
        for p1 in ("I", b1):
            for p2 in ("I", b2):
                acc = 0.0
                for o in OUTCOMES:
                    sign = 1
                    if p1 != "I":
                        sign *= e1 * (1 if o[0] == "0" else -1)
                    if p2 != "I":
                        sign *= e2 * (1 if o[1] == "0" else -1)
                    acc += sign * float(table.get(o, 0))
                key = p1 + p2
                totals[key] = totals.get(key, 0.0) + n
                signed[key] = signed.get(key, 0.0) + acc
    return {k: (1.0 if k == "II" else signed[k] / totals[k]) for k in PAULI_LABELS}


def linear_inversion(counts: Counts) -> np.ndarray:
    """Unconstrained estimate ``1/4 sum <s_a s_b> s_a (x) s_b`` (Hermitian, unit trace)."""
    ev = pauli_expectations(counts)
    rho = sum(ev[k] * kron(PAULIS[k[0]], PAULIS[k[1]]) for k in PAULI_LABELS) / 4
    return (rho + rho.conj().T) / 2


def _simplex(v: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection of a real vector onto ``{x >= 0, sum x = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    k = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
    return np.maximum(v - css[k] / (k + 1), 0.0)


def project_physical(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite unit-trace matrix."""
    m = (np.asarray(m) + np.asarray(m).conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = _simplex(w)
    out = (v * w) @ v.conj().T
    return (out + out.conj().T) / 2


def reconstruct_state(counts: Counts) -> MixedState:
    """Linear inversion followed by projection onto physical density matrices."""
    raw = linear_inversion(counts)
    lam = np.linalg.eigvalsh(raw)[0]
    if lam < -1e-9:
        log.debug("linear inversion not physical (min eigenvalue %.3g), projecting", lam)
    return MixedState(project_physical(raw))


def pauli_basis() -> list[np.ndarray]:
    """``sigma_a (x) sigma_b`` in the order II, IX, IY, IZ, XI, ..."""
    return [kron(PAULIS[k[0]], PAULIS[k[1]]) for k in PAULI_LABELS]


@dataclass(frozen=True)
class ChiMatrix:
    """Process matrix over the unnormalised two-qubit Pauli basis.

    With this basis a trace-preserving process has ``trace(chi) = 1`` and the
    ideal CNOT has sixteen entries of magnitude 1/4.
    """

    chi: np.ndarray
    raw: np.ndarray | None = None

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=complex)
        if chi.shape != (16, 16):
            raise ValueError(f"chi must be 16x16, got {chi.shape}")
        if np.max(np.abs(chi - chi.conj().T)) > 1e-10:
            raise ValueError("chi is not Hermitian")
        if abs(np.trace(chi) - 1) > 1e-10:
            raise ValueError(f"chi trace {np.trace(chi).real} differs from 1")
        if np.linalg.eigvalsh(chi)[0] < -1e-8:
            raise ValueError("chi is not positive semidefinite")
        chi = chi.copy()
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        basis = pauli_basis()
        return sum(self.chi[m, n] * basis[m] @ rho @ basis[n].conj().T
                   for m in range(16) for n in range(16) if self.chi[m, n] != 0)

    def tp_deviation(self) -> float:
        """Frobenius norm of ``sum chi_mn A_n^dag A_m - I``; zero for trace-preserving maps."""
        basis = pauli_basis()
        s = sum(self.chi[m, n] * basis[n].conj().T @ basis[m] for m in range(16) for n in range(16))
        return float(np.linalg.norm(s - np.eye(4)))

    def halfnorm(self) -> np.ndarray:
        """The same process over the orthonormal basis ``sigma (x) sigma / 2`` (trace 4)."""
        return 4 * self.chi


def chi_of_unitary(u: np.ndarray) -> ChiMatrix:
    c = np.array([np.trace(a.conj().T @ u) / 4 for a in pauli_basis()])
    return ChiMatrix(np.outer(c, c.conj()))


def fidelity_process(chi_exp: ChiMatrix | np.ndarray, chi_ideal: ChiMatrix | np.ndarray) -> float:
    """``Re Tr(chi_exp chi_ideal)``."""
    a = chi_exp.chi if isinstance(chi_exp, ChiMatrix) else np.asarray(chi_exp)
    b = chi_ideal.chi if isinstance(chi_ideal, ChiMatrix) else np.asarray(chi_ideal)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    f = np.trace(a @ b)
    if abs(f.imag) > 1e-10:
        warnings.warn(f"process fidelity has imaginary residue {f.imag:.3e}", stacklevel=2)
    return float(f.real)


PROCESS_INPUTS = SETTINGS  # input states reuse the alphabet pairs


def input_density(label: str) -> np.ndarray:
    v = kron(alphabet_state(label[0]), alphabet_state(label[1]))
    return np.outer(v, v.conj())


@lru_cache(maxsize=4)
def _process_solver(inputs: tuple[str, ...]) -> np.ndarray:
    basis = pauli_basis()
    rhos = [input_density(lbl) for lbl in inputs]
    cols = []
    for m, n in product(range(16), range(16)):
        cols.append(np.concatenate([(basis[m] @ r @ basis[n].conj().T).reshape(-1) for r in rhos]))
    b = np.array(cols).T
    if np.linalg.matrix_rank(b) < 256:
        raise ValueError("process tomography inputs do not span the operator space")
    return np.linalg.pinv(b)


def solve_chi(outputs: Mapping[str, np.ndarray], inputs: Sequence[str] = PROCESS_INPUTS) -> np.ndarray:
    """Least-squares chi from input labels and output density matrices (no projection)."""
    solver = _process_solver(tuple(inputs))
    y = np.concatenate([np.asarray(outputs[lbl]).reshape(-1) for lbl in inputs])
    chi = (solver @ y).reshape(16, 16)
    return (chi + chi.conj().T) / 2


def reconstruct_process(output_counts: Mapping[str, Counts],
                        inputs: Sequence[str] = PROCESS_INPUTS) -> ChiMatrix:
    """Chi matrix from 16 inputs x 16 measurement settings.

    Each output is reconstructed with :func:`reconstruct_state`, the linear
    relation between input and output density matrices is inverted, and the
    result is projected to a positive unit-trace matrix. Trace preservation is
    not imposed; see :meth:`ChiMatrix.tp_deviation`.
    """
    if len(inputs) != 16:
        raise ValueError("process tomography uses exactly 16 input states")
    outputs = {lbl: reconstruct_state(output_counts[lbl]).rho for lbl in inputs}
    raw = solve_chi(outputs, inputs)
    return ChiMatrix(project_physical(raw), raw=raw)


def fringe_probabilities(rho_pair: np.ndarray, phases: Sequence[float], reference: float = 0.0) -> np.ndarray:
    """Coincidence probability vs analyser phase for a two-qubit state.

    Qubit A is projected on ``|0> + e^{i reference}|1>`` and qubit B on
    ``|0> + e^{i phase}|1>`` (both normalised).
    """
    a = np.array([1, np.exp(1j * reference)]) / np.sqrt(2)
    out = []
    for ph in phases:
        b = np.array([1, np.exp(1j * ph)]) / np.sqrt(2)
        v = np.kron(a, b)
        out.append(float(np.real(v.conj() @ np.asarray(rho_pair) @ v)))
    return np.array(out)


def visibility(phases: Sequence[float], counts: Sequence[float]) -> float:
    """Fit ``C(phi) = A (1 + V cos(phi - phi0))`` by linear least squares and return ``V``."""
    phases = np.asarray(phases, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if phases.shape != counts.shape or phases.size < 8:
        raise ValueError("need at least 8 matching phase/count points")
    n = phases.size
    if np.ptp(phases) < 2 * np.pi * (n - 1) / n - 1e-9:
        raise ValueError("fringe phases must cover a full period")
    design = np.column_stack([np.ones(n), np.cos(phases), np.sin(phases)])
    (a, b, c), *_ = np.linalg.lstsq(design, counts, rcond=None)
    amp = np.hypot(b, c)
    if a <= 0 or amp <= 1e-9 * abs(a):
        warnings.warn("degenerate fringe: no modulation, visibility set to 0", stacklevel=2)
        return 0.0
    return float(amp / a)


def _map_leaves(obj, fn):
    if isinstance(obj, Mapping):
        return {k: _map_leaves(v, fn) for k, v in obj.items()}
    return fn(obj)


def _leaves(obj):
    if isinstance(obj, Mapping):
        for v in obj.values():
            yield from _leaves(v)
    else:
        yield obj


def bootstrap_error(counts, estimator: Callable, resamples: int = 250, seed: int = 0,
                    exact: bool | None = None) -> tuple[float, float]:
    """Poisson-bootstrap standard deviation of ``estimator(counts)``.

    ``counts`` may be nested mappings with numeric leaves. Non-integer leaves
    are taken to be exact probabilities, for which there is no shot noise and
    the deviation is 0.
    """
    leaves = list(_leaves(counts))
    if not leaves:
        raise ValueError("counts are empty")
    point = float(estimator(counts))
    if exact is None:
        exact = any(not float(x).is_integer() for x in leaves)
    if exact:
        return point, 0.0
    vals = []
    for r in range(resamples):
        rng = make_rng(seed, r)
        sample = _map_leaves(counts, lambda x: int(rng.poisson(float(x))))
        try:
            vals.append(float(estimator(sample)))
        except ValueError:
            # an all-zero setting after resampling; skip that draw
            continue
    return point, float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
