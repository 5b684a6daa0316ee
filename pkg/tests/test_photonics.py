import json

import numpy as np
import pytest

from chipteleport import photonics as ph
from chipteleport import qcore as qc
from chipteleport.photonics import CircuitElement, PathRegister

s2 = 1 / np.sqrt(2)


def phase_equal(a, b, tol=1e-12):
    """a == e^{ik} b for some k."""
    k = np.vdot(b.reshape(-1), a.reshape(-1))
    if abs(k) < tol:
        return np.allclose(a, b, atol=tol)
    return np.allclose(a, b * k / abs(k), atol=tol)


def random_register(rng, photon="A"):
    return PathRegister(qc.random_state(rng, 2).amplitudes, photon)


class TestMMI:
    def test_column_zero(self):
        np.testing.assert_allclose(ph.mmi_unitary() @ [1, 0], [s2, 1j * s2])

    def test_twice_is_i_swap(self):
        b = ph.mmi_unitary()
        np.testing.assert_allclose(b @ b, 1j * np.array([[0, 1], [1, 0]]), atol=1e-15)

    @pytest.mark.parametrize("k", [0, 1])
    def test_even_split(self, k):
        out = ph.mmi_unitary()[:, k]
        np.testing.assert_allclose(abs(out) ** 2, [0.5, 0.5])


class TestMZI:
    @pytest.mark.parametrize("phi", [0.0, 0.7, 2.0])
    def test_theta_pi_is_bar(self, phi):
        u = ph.mzi_unitary(np.pi, phi)
        np.testing.assert_allclose(abs(u) ** 2, np.eye(2), atol=1e-15)

    def test_theta_pi_phi_pi_is_identity_up_to_phase(self):
        assert phase_equal(ph.mzi_unitary(np.pi, np.pi), np.eye(2))

    def test_theta_zero_is_cross(self):
        u = ph.mzi_unitary(0.0, 0.3)
        np.testing.assert_allclose(abs(u) ** 2, [[0, 1], [1, 0]], atol=1e-15)

    def test_half_point(self):
        np.testing.assert_allclose(abs(ph.mzi_unitary(np.pi / 2, 0.0)) ** 2, np.full((2, 2), 0.5), atol=1e-15)

    def test_preparation_reaches_every_state(self):
        rng = qc.make_rng(21)
        for _ in range(200):
            target = qc.random_state(rng, 1).amplitudes
            got = ph.preparation_vector(*ph.preparation_phases(target))
            assert abs(np.vdot(target, got)) ** 2 == pytest.approx(1, abs=1e-12)

    def test_measurement_phases_route_to_port_zero(self):
        rng = qc.make_rng(22)
        for _ in range(200):
            v = qc.random_state(rng, 1).amplitudes
            out = ph.mzi_unitary(*ph.measurement_phases(v)) @ v
            assert abs(out[0]) ** 2 == pytest.approx(1, abs=1e-12)


class TestCrosser:
    def test_swaps(self):
        np.testing.assert_array_equal(ph.crosser_unitary() @ [2, 3], [3, 2])

    def test_involution(self):
        c = ph.crosser_unitary()
        np.testing.assert_array_equal(c @ c, np.eye(2))

    def test_middle_modes_make_cnot(self):
        np.testing.assert_array_equal(ph.crosser((2, 3)).unitary(), qc.CNOT)

    def test_mode_2_to_3(self):
        reg = PathRegister(np.eye(4)[2])
        np.testing.assert_array_equal(ph.local_cnot_via_crosser(reg).modes, np.eye(4)[3])

    def test_mode_0_fixed(self):
        reg = PathRegister(np.eye(4)[0])
        np.testing.assert_array_equal(ph.local_cnot_via_crosser(reg).modes, np.eye(4)[0])

    def test_superposition(self):
        a = np.array([0, 0, 0.6, 0.8])
        out = ph.local_cnot_via_crosser(PathRegister(a)).modes
        np.testing.assert_array_equal(out, [0, 0, 0.8, 0.6])

    def test_matches_qcore_cnot_on_random_registers(self):
        rng = qc.make_rng(23)
        worst = 0.0
        for _ in range(1000):
            photon = "AB"[int(rng.integers(2))]
            reg = random_register(rng, photon)
            via_optics = ph.local_cnot_via_crosser(reg).modes
            via_gate = qc.apply_gate(reg.to_state(), qc.cnot(), reg.qubits).amplitudes
            worst = max(worst, np.max(np.abs(via_optics - via_gate)))
        assert worst < 1e-12


class TestM3Network:
    def test_plus_to_group_zero(self):
        reg = PathRegister(qc.ket("+0", (3, 4)).amplitudes, "B")
        out = ph.m3_basis_network(reg).modes
        assert abs(out[0]) ** 2 + abs(out[1]) ** 2 == pytest.approx(1, abs=1e-12)

    def test_minus_to_group_one(self):
        reg = PathRegister(qc.ket("-1", (3, 4)).amplitudes, "B")
        out = ph.m3_basis_network(reg).modes
        assert abs(out[2]) ** 2 + abs(out[3]) ** 2 == pytest.approx(1, abs=1e-12)

    def test_zero_splits_evenly(self):
        reg = PathRegister(qc.ket("00", (3, 4)).amplitudes, "B")
        p = abs(ph.m3_basis_network(reg).modes) ** 2
        assert p[0] + p[1] == pytest.approx(0.5, abs=1e-12)

    def test_reproduces_x_statistics(self):
        rng = qc.make_rng(24)
        for _ in range(200):
            reg = random_register(rng, "B")
            p = abs(ph.m3_basis_network(reg).modes) ** 2
            want = qc.outcome_probabilities(reg.to_state(), 3, "X")[0]
            assert abs(p[0] + p[1] - want) < 1e-12

    def test_acts_as_hadamard_on_qubit_3(self):
        u = ph.circuit_unitary(ph.M3_NETWORK)
        np.testing.assert_allclose(u, np.kron(qc.H, np.eye(2)), atol=1e-12)

    def test_photon_a_rejected(self):
        with pytest.raises(ValueError):
            ph.m3_basis_network(PathRegister(np.eye(4)[0], "A"))


class TestCircuits:
    def test_random_circuits_unitary(self):
        rng = qc.make_rng(25)
        kinds = ["mmi", "ps", "crosser", "mzi"]
        for _ in range(200):
            els = []
            for _ in range(12):
                kind = kinds[int(rng.integers(4))]
                modes = tuple(int(m) for m in rng.choice(4, 2, replace=False))
                n = {"mmi": 0, "ps": 1, "crosser": 0, "mzi": 2}[kind]
                els.append(CircuitElement(kind, modes, tuple(rng.uniform(0, 2 * np.pi, n))))
            u = ph.circuit_unitary(els)
            assert np.linalg.norm(u.conj().T @ u - np.eye(4)) < 1e-12

    def test_bad_element(self):
        with pytest.raises(ValueError):
            CircuitElement("laser", (0, 1))
        with pytest.raises(ValueError):
            CircuitElement("mzi", (0, 1), (1.0,))
        with pytest.raises(ValueError):
            CircuitElement("mmi", (1, 1))

    def test_json_roundtrip(self, tmp_path):
        els = ph.chip_circuit("B", (0.3, 1.2), (2.0, 0.1))
        path = tmp_path / "c.json"
        ph.dump_circuit(els, path)
        assert ph.load_circuit(path) == els
        assert isinstance(json.loads(path.read_text()), list)

    def test_register_norm_checked(self):
        with pytest.raises(ValueError):
            PathRegister(np.ones(4))

    def test_register_photon_labels(self):
        assert PathRegister(np.eye(4)[0], "B").qubits == (3, 4)
        with pytest.raises(ValueError):
            PathRegister.from_state(qc.ket("00", (1, 2)), "B")


class TestPreparation:
    def test_bar_gives_00(self):
        st = ph.prepare_product_state([(np.pi, 0.0)] * 4)
        assert qc.fidelity_state(st, qc.ket("00", (1, 4))) == pytest.approx(1, abs=1e-12)

    def test_plus_zero(self):
        half = (np.pi / 2, 0.0)
        st = ph.prepare_product_state([half, half, (np.pi, 0.0), (np.pi, 0.0)])
        assert qc.fidelity_state(st, qc.ket("+0", (1, 4))) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("a", "01+r")
    @pytest.mark.parametrize("b", "01+r")
    def test_tomography_inputs_reachable(self, a, b):
        va, vb = ph.alphabet_state(a), ph.alphabet_state(b)
        st = ph.prepare_product_state(ph.product_settings(va, vb))
        assert abs(np.vdot(np.kron(va, vb), st.amplitudes)) ** 2 == pytest.approx(1, abs=1e-12)

    def test_unpaired_settings_rejected(self):
        with pytest.raises(ValueError, match="share"):
            ph.prepare_product_state([(0.1, 0), (0.2, 0), (0, 0), (0, 0)])

    def test_phase_range(self):
        with pytest.raises(ValueError):
            ph.prepare_product_state([(7.0, 0)] * 4)


class TestMeasurementSetting:
    def test_zz(self):
        projs = ph.measurement_setting("ZZ")
        for k, p in enumerate(projs):
            np.testing.assert_allclose(p, np.diag(np.eye(4)[k]), atol=1e-15)

    def test_xx_on_phi_plus(self):
        rho = qc.bell_state("phi+").density().rho
        probs = [np.trace(p @ rho).real for p in ph.measurement_setting("XX")]
        np.testing.assert_allclose(probs, [0.5, 0, 0, 0.5], atol=1e-12)

    @pytest.mark.parametrize("bases", ["ZZ", "XY", "YX", "ZY"])
    def test_resolves_identity(self, bases):
        np.testing.assert_allclose(sum(ph.measurement_setting(bases)), np.eye(4), atol=1e-12)

    def test_unknown_basis(self):
        with pytest.raises(ValueError):
            ph.measurement_setting("ZQ")


class TestTwoPhoton:
    def test_d1_d2_coincidence_is_kept_branch(self):
        # prepare |00>_14 and analyse in Z; the kept branch should show output 00 at rate 1/4
        prep = (np.pi, 0.0)
        meas = ph.measurement_phases([1, 0])
        table = ph.two_photon_output(ph.source_amplitudes(), ph.chip_circuit("A", prep, meas),
                                     ph.chip_circuit("B", prep, meas))
        assert table.sum() == pytest.approx(1, abs=1e-12)
        # photon A port 2*q1 + q2, photon B port 2*q3 + q4; kept means q2 = 0, q3 = +
        assert table[0, 0] == pytest.approx(0.25, abs=1e-12)
