import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chipteleport import channel as ch
from chipteleport import qcore as qc
from chipteleport.channel import CompensatorSetting, NoiseConfig, apply_channel

ANGLE = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


def four_qubit_register(rng):
    """A pair on (2, 3) with random local states on 1 and 4."""
    a, b = qc.random_state(rng, 1, (1,)), qc.random_state(rng, 1, (4,))
    return qc.permute(qc.tensor(a, qc.bell_state("phi+", (2, 3)), b), (1, 2, 3, 4)).density()


class TestNoiseConfig:
    def test_defaults(self):
        cfg = NoiseConfig()
        assert cfg.source_visibility == 1.0 and cfg.losses_db == ch.PAPER_LOSSES_DB

    @pytest.mark.parametrize("kw", [
        {"source_visibility": 1.2},
        {"source_visibility": -0.1},
        {"drift": (0, 0, np.inf)},
        {"drift": (0, 0)},
        {"phase_jitter_sigma": -1},
        {"losses_db": {"pbrc_te": -0.1}},
        {"losses_db": {"laser": 1.0}},
        {"fiber_km": -1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            NoiseConfig(**kw)

    def test_json_roundtrip(self, tmp_path):
        cfg = NoiseConfig(0.9, (0.1, 0.2, 0.3), 0.05, fiber_km=1.0)
        path = tmp_path / "n.json"
        path.write_text(json.dumps(cfg.to_json()))
        assert NoiseConfig.load(path) == cfg

    def test_unknown_json_field(self):
        with pytest.raises(ValueError, match="unknown"):
            NoiseConfig.from_json({"visibility": 1})

    def test_survival(self):
        cfg = NoiseConfig(fiber_km=1.0)
        total = 0.6 + 0.4 + 3.57 + 3.42 + 0.6
        assert cfg.survival_probability == pytest.approx(10 ** (-total / 10), rel=1e-12)

    @pytest.mark.parametrize("key", sorted(ch.PAPER_LOSSES_DB))
    def test_survival_monotone(self, key):
        base = NoiseConfig(fiber_km=1.0)
        worse = dict(base.losses_db)
        worse[key] += 0.5
        assert NoiseConfig(losses_db=worse, fiber_km=1.0).survival_probability < base.survival_probability


class TestApplyChannel:
    def test_compensated_drift_leaves_state(self):
        rng = qc.make_rng(30)
        rho = four_qubit_register(rng)
        drift = (0.4, 1.1, -0.7)
        cfg = NoiseConfig(drift=drift)
        out, surv = apply_channel(rho, cfg, CompensatorSetting.inverse_of(drift))
        np.testing.assert_allclose(out.rho, rho.rho, atol=1e-12)
        total = sum(ch.PAPER_LOSSES_DB[k] for k in ("pbrc_te", "pbrc_tm", "coupler_te", "coupler_tm")) + 0.6 * 0.005
        assert surv == pytest.approx(10 ** (-total / 10), rel=1e-12)

    def test_ideal_pair_preserved(self):
        out, _ = apply_channel(qc.bell_state("phi+", (2, 3)).density(), NoiseConfig(), pair=(2, 3))
        assert qc.fidelity_state(out, qc.bell_state("phi+", (2, 3))) == pytest.approx(1, abs=1e-12)

    def test_werner_pair_fidelity(self):
        out, _ = apply_channel(qc.bell_state("phi+", (2, 3)).density(), NoiseConfig(source_visibility=0.95))
        assert qc.fidelity_state(out, qc.bell_state("phi+", (2, 3))) == pytest.approx(0.9625, abs=1e-12)

    def test_werner_v1_amplitude_exact(self):
        rho = four_qubit_register(qc.make_rng(31))
        out, _ = apply_channel(rho, NoiseConfig(source_visibility=1.0))
        np.testing.assert_array_equal(out.rho, rho.rho)

    def test_werner_keeps_outer_marginal(self):
        rho = four_qubit_register(qc.make_rng(32))
        out, _ = apply_channel(rho, NoiseConfig(source_visibility=0.3))
        np.testing.assert_allclose(qc.partial_trace(out, (1, 4)).rho, qc.partial_trace(rho, (1, 4)).rho, atol=1e-12)

    def test_dephasing_matches_jitter_average(self):
        sigma = 0.4
        rho = qc.bell_state("phi+", (2, 3)).density()
        cfg = NoiseConfig(phase_jitter_sigma=sigma)
        exact, _ = apply_channel(rho, cfg)
        # off-diagonal |00><11| scales by the characteristic function of the jitter
        assert exact.rho[0, 3].real == pytest.approx(0.5 * np.exp(-sigma**2 / 2), abs=1e-12)
        rng = qc.make_rng(33)
        mean = np.mean([apply_channel(rho, cfg, rng=rng)[0].rho for _ in range(4000)], axis=0)
        np.testing.assert_allclose(mean, exact.rho, atol=0.02)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0, 1), ANGLE, ANGLE, ANGLE, st.floats(0, 2), st.integers(0, 2**32 - 1))
    def test_trace_and_positivity(self, v, a, b, c, sigma, seed):
        rho = four_qubit_register(qc.make_rng(seed))
        cfg = NoiseConfig(v, (a, b, c), sigma)
        for rng in (None, qc.make_rng(seed, 1)):
            out, _ = apply_channel(rho, cfg, rng=rng)
            assert abs(np.trace(out.rho) - 1) < 1e-12
            assert np.linalg.eigvalsh(out.rho)[0] > -1e-10


class TestIsolation:
    def test_threshold_example(self):
        assert ch.isolation_degree((201, 1)) == 201

    def test_no_isolation(self):
        assert ch.isolation_degree((100, 100)) == 1

    def test_ideal_is_infinite(self):
        probs = ch.fiber_oracle((0, 0, 0))(CompensatorSetting())
        assert ch.isolation_degree(probs) == np.inf

    def test_worst_probe_wins(self):
        assert ch.isolation_degree([(1000, 1), (300, 2), (50, 1)]) == 50


class TestCalibration:
    def test_identity_drift(self):
        rep = ch.calibrate_compensator(ch.fiber_oracle((0, 0, 0)))
        assert rep.success and rep.worst_isolation == np.inf
        assert ch.composed_process_fidelity((0, 0, 0), rep.setting) == pytest.approx(1, abs=1e-12)

    def test_known_drift_inverted(self):
        drift = (1.3, 0.9, -2.2)
        rep = ch.calibrate_compensator(ch.fiber_oracle(drift))
        assert rep.success and rep.worst_isolation >= 200
        assert ch.composed_process_fidelity(drift, rep.setting) >= 1 - 1 / 201
        w = rep.setting.unitary() @ ch.euler_unitary(drift)
        k = w[0, 0] / abs(w[0, 0])
        np.testing.assert_allclose(w, k * np.eye(2), atol=0.05)

    def test_tiny_budget_reports_failure(self):
        rep = ch.calibrate_compensator(ch.fiber_oracle((1.3, 0.9, -2.2)), budget=5)
        assert not rep.success and rep.evaluations == 5
        assert rep.to_json()["success"] is False

    def test_report_json(self):
        rep = ch.calibrate_compensator(ch.fiber_oracle((0, 0, 0)))
        doc = rep.to_json()
        assert doc["worst_isolation"] == "inf" and len(doc["angles"]) == 3
        json.dumps(doc)

    def test_random_drifts(self):
        rng = qc.make_rng(34)
        for _ in range(20):
            drift = rng.uniform(0, 2 * np.pi, 3)
            rep = ch.calibrate_compensator(ch.fiber_oracle(drift), budget=2000)
            assert rep.worst_isolation >= 200
            assert ch.composed_process_fidelity(drift, rep.setting) >= 1 - 1 / 201

    def test_compensator_rejects_bad_angles(self):
        with pytest.raises(ValueError):
            CompensatorSetting((0, np.nan, 0))
