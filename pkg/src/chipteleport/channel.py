"""Chip-to-chip fibre interconnect: losses, polarisation drift, source mixing and dephasing."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .qcore import Z, MixedState, _KETS, apply_gate, Operator, partial_trace

log = logging.getLogger(__name__)

# dB figures quoted for the PBRC (TE->TM 0.4, TE->TE 0.6), edge couplers and 1 km of SMF
PAPER_LOSSES_DB = {
    "pbrc_te": 0.6,
    "pbrc_tm": 0.4,
    "coupler_te": 3.57,
    "coupler_tm": 3.42,
    "fiber_per_km": 0.6,
}

PAIR = (2, 3)
TRANSMITTED = 3
ISOLATION_TARGET = 200.0


def euler_unitary(angles: Sequence[float]) -> np.ndarray:
    """``Rz(a) Ry(b) Rz(c)`` on the polarisation qubit."""
    a, b, c = (float(x) for x in angles)

    def rz(t):
        return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])

    ry = np.array([[np.cos(b / 2), -np.sin(b / 2)], [np.sin(b / 2), np.cos(b / 2)]], dtype=complex)
    return rz(a) @ ry @ rz(c)


@dataclass(frozen=True)
class NoiseConfig:
    source_visibility: float = 1.0
    drift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    phase_jitter_sigma: float = 0.0
    losses_db: Mapping[str, float] = field(default_factory=lambda: dict(PAPER_LOSSES_DB))
    fiber_km: float = 0.005

    def __post_init__(self):
        v = float(self.source_visibility)
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"source_visibility must lie in [0, 1], got {v}")
        drift = tuple(float(a) for a in self.drift)
        if len(drift) != 3 or not np.all(np.isfinite(drift)):
            raise ValueError(f"drift must be three finite Euler angles, got {self.drift}")
        sigma = float(self.phase_jitter_sigma)
        if not (np.isfinite(sigma) and sigma >= 0):
            raise ValueError(f"phase_jitter_sigma must be finite and >= 0, got {sigma}")
        losses = {k: float(x) for k, x in self.losses_db.items()}
        unknown = set(losses) - set(PAPER_LOSSES_DB)
        if unknown:
            raise ValueError(f"unknown loss entries {sorted(unknown)}")
        if any(not np.isfinite(x) or x < 0 for x in losses.values()):
            raise ValueError("loss values must be finite and >= 0 dB")
        km = float(self.fiber_km)
        if not (np.isfinite(km) and km >= 0):
            raise ValueError(f"fiber_km must be >= 0, got {km}")
        object.__setattr__(self, "source_visibility", v)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "phase_jitter_sigma", sigma)
        object.__setattr__(self, "losses_db", losses)
        object.__setattr__(self, "fiber_km", km)

    @property
    def total_loss_db(self) -> float:
        lo = self.losses_db
        fixed = sum(lo.get(k, 0.0) for k in ("pbrc_te", "pbrc_tm", "coupler_te", "coupler_tm"))
        return fixed + lo.get("fiber_per_km", 0.0) * self.fiber_km

    @property
    def survival_probability(self) -> float:
        return 10 ** (-self.total_loss_db / 10)

    @property
    def dephasing(self) -> float:
        """Coherence factor ``E[exp(i eps)]`` of the per-trial phase jitter."""
        return float(np.exp(-self.phase_jitter_sigma**2 / 2))

    def replace(self, **kw) -> NoiseConfig:
        d = self.to_json()
        d.update(kw)
        return NoiseConfig.from_json(d)

    def to_json(self) -> dict:
        d = asdict(self)
        d["drift"] = list(self.drift)
        d["losses_db"] = dict(self.losses_db)
        return d

    @classmethod
    def from_json(cls, obj: Mapping) -> NoiseConfig:
        known = {"source_visibility", "drift", "phase_jitter_sigma", "losses_db", "fiber_km"}
        extra = set(obj) - known - {"provenance", "name"}
        if extra:
            raise ValueError(f"unknown NoiseConfig fields {sorted(extra)}")
        kw = {k: obj[k] for k in known if k in obj}
        if "drift" in kw:
            kw["drift"] = tuple(kw["drift"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> NoiseConfig:
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def ideal(cls, **kw) -> NoiseConfig:
        """Perfect source and fibre; the default loss table is kept (it only scales rates)."""
        return cls(**kw)


@dataclass(frozen=True)
class CompensatorSetting:
    angles: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        if len(angles) != 3 or not np.all(np.isfinite(angles)):
            raise ValueError(f"compensator needs three finite angles, got {self.angles}")
        object.__setattr__(self, "angles", angles)

    def unitary(self) -> np.ndarray:
        return euler_unitary(self.angles)

    @classmethod
    def inverse_of(cls, drift: Sequence[float]) -> CompensatorSetting:
        a, b, c = drift
        return cls((-c, -b, -a))


def _werner_mix(state: MixedState, v: float, pair: Sequence[int]) -> MixedState:
    if v == 1.0:
        return state
    labels = state.labels
    rest = [q for q in labels if q not in pair]
    noise_order = tuple(pair) + tuple(rest)
    noise = np.eye(4, dtype=complex) / 4
    if rest:
        noise = np.kron(noise, partial_trace(state, rest).rho)
    noise = reorder(noise, noise_order, labels)
    return MixedState(v * state.rho + (1 - v) * noise, labels)


def reorder(rho: np.ndarray, src: Sequence[int], dst: Sequence[int]) -> np.ndarray:
    """Permute the qubit order of a density matrix from labels ``src`` to ``dst``."""
    src, dst = list(src), list(dst)
    if src == dst:
        return rho
    n = len(src)
    perm = [src.index(q) for q in dst]
    t = rho.reshape([2] * (2 * n)).transpose(perm + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


def dephase(state: MixedState, qubit: int, coherence: float) -> MixedState:
    """Average of Z-rotations: off-diagonals on ``qubit`` scaled by ``coherence``."""
    if coherence == 1.0:
        return state
    p = (1 - coherence) / 2
    flipped = apply_gate(state, Operator(Z, "Z"), [qubit])
    return MixedState((1 - p) * state.rho + p * flipped.rho, state.labels)


def rz(eps: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * eps), np.exp(0.5j * eps)])


def apply_channel(state: MixedState, cfg: NoiseConfig, comp: CompensatorSetting | None = None,
                  rng: np.random.Generator | None = None, transmitted: int = TRANSMITTED,
                  pair: Sequence[int] = PAIR) -> tuple[MixedState, float]:
    """Send the transmitted qubit of the shared pair through the fibre link.

    Source mixing (Werner, visibility ``v``) acts on the pair, then the fibre
    drift and the compensator act on the transmitted qubit, then a Z-rotation
    by ``eps ~ Normal(0, sigma)``. Without ``rng`` the jitter is averaged
    analytically (exact mode). Returns the state and the photon survival
    probability, which only scales coincidence rates.
    """
    comp = comp or CompensatorSetting()
    out = _werner_mix(state.density(), cfg.source_visibility, pair)
    u = comp.unitary() @ euler_unitary(cfg.drift)
    if not np.array_equal(u, np.eye(2)):
        out = apply_gate(out, Operator(u, "fiber"), [transmitted])
    if cfg.phase_jitter_sigma > 0:
        if rng is None:
            out = dephase(out, transmitted, cfg.dephasing)
        else:
            eps = rng.normal(0.0, cfg.phase_jitter_sigma)
            out = apply_gate(out, Operator(rz(eps), "jitter"), [transmitted])
    return out, cfg.survival_probability


def isolation_degree(probe_results) -> float:
    """Worst-case ``max / min`` outcome ratio over transmitted probe states.

    ``probe_results`` is a sequence of ``(max, min)`` or ``(state, orthogonal)``
    count pairs, or a single pair. A zero minimum yields ``inf``.
    """
    arr = np.atleast_2d(np.asarray(probe_results, dtype=float))
    ratios = []
    for a, b in arr:
        hi, lo = max(a, b), min(a, b)
        ratios.append(np.inf if lo <= 0 else hi / lo)
    return float(min(ratios))


PROBES = ("0", "1", "+", "r")
LEAK_FLOOR = 1e-15


def fiber_oracle(drift: Sequence[float]) -> Callable[[CompensatorSetting], list[tuple[float, float]]]:
    """Bright-light probe transmission through a fibre with hidden ``drift``.

    The returned callable maps a compensator setting to, for every probe state,
    the probabilities of detecting the state and its orthogonal partner.
    """
    ud = euler_unitary(drift)
    partners = {"0": "1", "1": "0", "+": "-", "r": "l"}

    def oracle(comp: CompensatorSetting) -> list[tuple[float, float]]:
        w = comp.unitary() @ ud
        out = []
        for p in PROBES:
            psi = w @ _KETS[p]
            hit, leak = abs(np.vdot(_KETS[p], psi)) ** 2, abs(np.vdot(_KETS[partners[p]], psi)) ** 2
            # below the double-precision floor a detector would see nothing
            out.append((hit, leak if leak > LEAK_FLOOR else 0.0))
        return out

    return oracle


@dataclass
class CalibrationReport:
    setting: CompensatorSetting
    worst_isolation: float
    evaluations: int
    success: bool

    def to_json(self) -> dict:
        iso = self.worst_isolation
        return {
            "angles": list(self.setting.angles),
            "worst_isolation": "inf" if np.isinf(iso) else iso,
            "evaluations": self.evaluations,
            "success": self.success,
        }


class _Budget(Exception):
    pass


def calibrate_compensator(oracle: Callable[[CompensatorSetting], list[tuple[float, float]]],
                          budget: int = 2000, threshold: float = ISOLATION_TARGET,
                          restarts: int = 8, rng: np.random.Generator | None = None) -> CalibrationReport:
    """Tune the three compensator angles until every probe is isolated above ``threshold``.

    Nelder-Mead on the summed leakage into the orthogonal ports, first from the
    identity setting and then from up to ``restarts`` random starting points.
    """
    rng = rng or np.random.default_rng(0)
    evals = 0
    best = (np.inf, np.zeros(3))

    def leakage(x):
        nonlocal evals, best
        if evals >= budget:
            raise _Budget
        evals += 1
        res = oracle(CompensatorSetting(tuple(x)))
        f = sum(b for _, b in res)
        if f < best[0]:
            best = (f, np.array(x, dtype=float))
        return f

    starts = [np.zeros(3)] + [rng.uniform(0, 2 * np.pi, 3) for _ in range(restarts)]
    for x0 in starts:
        try:
            minimize(leakage, x0, method="Nelder-Mead",
                     options={"xatol": 1e-10, "fatol": 1e-16, "maxfev": budget})
        except _Budget:
            break
        if isolation_degree(oracle(CompensatorSetting(tuple(best[1])))) >= threshold:
            break
    setting = CompensatorSetting(tuple(float(a) for a in best[1]))
    worst = isolation_degree(oracle(setting))
    ok = worst >= threshold
    if not ok:
        log.warning("compensator calibration stopped at isolation %.1f after %d evaluations", worst, evals)
    return CalibrationReport(setting, worst, evals, ok)


def composed_process_fidelity(drift: Sequence[float], comp: CompensatorSetting) -> float:
    """Process fidelity ``|Tr W|^2 / 4`` of ``W = comp . drift`` to the identity."""
    w = comp.unitary() @ euler_unitary(drift)
    return float(abs(np.trace(w)) ** 2 / 4)
