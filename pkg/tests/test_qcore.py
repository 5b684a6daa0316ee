import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chipteleport import qcore as qc
from chipteleport.qcore import (
    CNOT, MixedState, Operator, PureState, apply_gate, bell_state, fidelity_state, ket,
    make_rng, measure_qubit, partial_trace,
)

s2 = 1 / np.sqrt(2)


def brute_cnot(n, control, target):
    """Permutation matrix built bit by bit (qubit 1 is the most significant)."""
    dim = 2**n
    m = np.zeros((dim, dim))
    for k in range(dim):
        bits = [(k >> (n - 1 - q)) & 1 for q in range(n)]
        if bits[control - 1]:
            bits[target - 1] ^= 1
        m[int("".join(map(str, bits)), 2), k] = 1
    return m


def pauli_strings(n):
    from itertools import product

    return [qc.kron(*(qc.PAULIS[c] for c in p)) for p in product("IXYZ", repeat=n)]


class TestStates:
    def test_phi_plus_amplitudes(self):
        np.testing.assert_allclose(bell_state("phi+").amplitudes, [s2, 0, 0, s2], atol=1e-15)

    def test_psi_minus_amplitudes(self):
        np.testing.assert_allclose(bell_state("psi-").amplitudes, [0, s2, -s2, 0], atol=1e-15)

    def test_bell_states_orthonormal(self):
        vecs = np.array([bell_state(k).amplitudes for k in qc.BELL_KINDS])
        np.testing.assert_allclose(vecs.conj() @ vecs.T, np.eye(4), atol=1e-15)

    def test_bell_amplitudes_real(self):
        for k in qc.BELL_KINDS:
            assert np.all(bell_state(k).amplitudes.imag == 0)

    def test_unknown_bell_kind(self):
        with pytest.raises(ValueError):
            bell_state("omega")

    def test_norm_checked(self):
        with pytest.raises(ValueError, match="norm"):
            PureState(np.array([1, 1]))

    def test_length_power_of_two(self):
        with pytest.raises(ValueError):
            PureState(np.ones(3) / np.sqrt(3))

    def test_duplicate_labels(self):
        with pytest.raises(ValueError, match="duplicate"):
            ket("00", (1, 1))

    def test_density_checks(self):
        with pytest.raises(ValueError, match="Hermitian"):
            MixedState(np.array([[0.5, 0.1], [0.2, 0.5]]))
        with pytest.raises(ValueError, match="trace"):
            MixedState(np.eye(2))
        with pytest.raises(ValueError, match="negative"):
            MixedState(np.diag([1.2, -0.2]))

    def test_states_are_immutable(self):
        s = ket("0")
        with pytest.raises(ValueError):
            s.amplitudes[0] = 0

    def test_operator_unitarity_flag(self):
        with pytest.raises(ValueError, match="unitary"):
            Operator(np.diag([1, 2]), "bad")
        Operator(np.diag([1, 0]), "proj", unitary=False)


class TestApplyGate:
    def test_cnot_on_10(self):
        out = apply_gate(ket("10"), qc.cnot(), (1, 2))
        np.testing.assert_allclose(out.amplitudes, ket("11").amplitudes)

    def test_identity(self):
        rng = make_rng(1)
        s = qc.random_state(rng, 3)
        out = apply_gate(s, Operator(np.eye(2), "I"), (2,))
        np.testing.assert_allclose(out.amplitudes, s.amplitudes, atol=1e-15)

    def test_cnot_14_makes_phi_plus(self):
        reg = ket("+00", (1, 4, 2))
        out = apply_gate(reg, qc.cnot(), (1, 4))
        pair = partial_trace(out, (1, 4))
        assert fidelity_state(pair, bell_state("phi+")) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("control,target", [(1, 2), (2, 1), (1, 3), (3, 1), (2, 3)])
    def test_embedding_matches_brute_force(self, control, target):
        got = qc.embed(CNOT, (control, target), (1, 2, 3))
        np.testing.assert_array_equal(got, brute_cnot(3, control, target))

    def test_mixed_matches_pure(self):
        rng = make_rng(2)
        s = qc.random_state(rng, 3)
        u = Operator(qc.random_unitary(rng, 4), "U")
        pure = apply_gate(s, u, (3, 1)).density().rho
        mixed = apply_gate(s.density(), u, (3, 1)).rho
        np.testing.assert_allclose(pure, mixed, atol=1e-13)

    def test_arity_mismatch(self):
        with pytest.raises(ValueError, match="arity"):
            apply_gate(ket("00"), qc.cnot(), (1,))

    def test_duplicate_targets(self):
        with pytest.raises(ValueError, match="duplicate"):
            apply_gate(ket("00"), qc.cnot(), (1, 1))

    def test_target_outside_register(self):
        with pytest.raises(ValueError):
            apply_gate(ket("00"), qc.pauli("X"), (3,))

    def test_norm_preserved_over_random_states(self):
        rng = make_rng(3)
        for _ in range(1000):
            s = qc.random_state(rng, 3)
            u = Operator(qc.random_unitary(rng, 4), "U")
            out = apply_gate(s, u, tuple(rng.permutation([1, 2, 3])[:2]))
            assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-12


class TestMeasure:
    def test_zero_in_z(self):
        m = measure_qubit(ket("0"), 1, "Z", make_rng(0))
        assert m.outcome == 0 and m.probability == pytest.approx(1)

    def test_plus_in_x(self):
        m = measure_qubit(ket("+"), 1, "X", make_rng(0))
        assert m.outcome == "+" and m.probability == pytest.approx(1)

    def test_phi_plus_qubit_2(self):
        p = qc.outcome_probabilities(bell_state("phi+"), 2, "Z")
        # Born rule by hand: |a00|^2 + |a10|^2 for outcome 0
        amps = bell_state("phi+").amplitudes
        assert p[0] == pytest.approx(abs(amps[0]) ** 2 + abs(amps[2]) ** 2)
        assert p == pytest.approx((0.5, 0.5))

    def test_collapse_renormalised(self):
        m = measure_qubit(bell_state("phi+"), 2, "Z", outcome=1)
        np.testing.assert_allclose(m.state.amplitudes, [0, 0, 0, 1], atol=1e-15)

    def test_zero_probability_branch(self):
        with pytest.raises(ValueError, match="zero probability"):
            measure_qubit(ket("0"), 1, "Z", outcome=1)

    def test_needs_rng_or_outcome(self):
        with pytest.raises(ValueError):
            measure_qubit(ket("0"), 1, "Z")

    def test_mixed_and_pure_agree(self):
        rng = make_rng(4)
        s = qc.random_state(rng, 2)
        for basis, out in (("Z", 0), ("X", "-"), ("Y", "+i")):
            a = measure_qubit(s, 2, basis, outcome=out)
            b = measure_qubit(s.density(), 2, basis, outcome=out)
            assert a.probability == pytest.approx(b.probability, abs=1e-13)
            np.testing.assert_allclose(a.state.density().rho, b.state.rho, atol=1e-13)

    def test_born_frequencies(self):
        rng = make_rng(5)
        s = qc.random_state(rng, 2)
        p0 = qc.outcome_probabilities(s, 1, "X")[0]
        stream = make_rng(6)
        n = 100_000
        hits = sum(measure_qubit(s, 1, "X", stream).outcome == "+" for _ in range(n))
        assert abs(hits - n * p0) < 5 * np.sqrt(n * p0 * (1 - p0))

    def test_probabilities_sum_to_one(self):
        rng = make_rng(7)
        for _ in range(50):
            rho = qc.random_density(rng, 3)
            for basis in "ZXY":
                assert sum(qc.outcome_probabilities(rho, 2, basis)) == pytest.approx(1, abs=1e-12)


class TestPartialTrace:
    def test_marginal_of_phi_plus(self):
        np.testing.assert_allclose(partial_trace(bell_state("phi+"), (1,)).rho, np.eye(2) / 2, atol=1e-15)

    def test_keep_everything(self):
        rho = qc.random_density(make_rng(8), 2)
        np.testing.assert_allclose(partial_trace(rho, (1, 2)).rho, rho.rho, atol=1e-15)

    def test_empty_keep(self):
        with pytest.raises(ValueError):
            partial_trace(ket("00"), ())

    def test_reordered_keep(self):
        s = ket("01")
        np.testing.assert_allclose(partial_trace(s, (2, 1)).rho, ket("10").density().rho)

    def test_pauli_observables_preserved(self):
        rng = make_rng(9)
        for _ in range(20):
            rho = qc.random_density(rng, 3)
            red = partial_trace(rho, (1, 3))
            full = qc.permute(qc.tensor(red, qc.maximally_mixed((2,))), (1, 2, 3))
            for p in pauli_strings(2):
                lifted = qc.embed(p, (1, 3), (1, 2, 3))
                a = np.trace(lifted @ rho.rho)
                b = np.trace(p @ red.rho)
                assert abs(a - b) < 1e-12
                assert abs(np.trace(lifted @ full.rho) - b) < 1e-12


class TestFidelity:
    def test_self(self):
        s = qc.random_state(make_rng(10), 2)
        assert fidelity_state(s, s) == pytest.approx(1, abs=1e-12)

    def test_orthogonal(self):
        assert fidelity_state(bell_state("phi+"), bell_state("phi-")) == pytest.approx(0, abs=1e-15)

    def test_werner(self):
        rho = 0.95 * bell_state("phi+").density().rho + 0.05 * np.eye(4) / 4
        assert fidelity_state(MixedState(rho), bell_state("phi+")) == pytest.approx(0.9625, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            fidelity_state(ket("0"), ket("00"))

    def test_mixed_ideal_warns(self):
        with pytest.warns(UserWarning, match="mixed ideal"):
            fidelity_state(ket("00"), qc.maximally_mixed((1, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_pure_pure_symmetric_overlap(self, seed):
        rng = make_rng(seed)
        a, b = qc.random_state(rng, 2), qc.random_state(rng, 2)
        f = fidelity_state(a, b)
        assert f == pytest.approx(fidelity_state(b, a), abs=1e-12)
        assert f == pytest.approx(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2, abs=1e-12)


class TestRng:
    def test_streams_reproducible(self):
        assert make_rng(3, 1, 2).random() == make_rng(3, 1, 2).random()

    def test_streams_distinct(self):
        draws = {make_rng(3, t, k).random() for t in range(5) for k in range(5)}
        assert len(draws) == 25

    def test_matrix_json_roundtrip(self):
        m = qc.random_unitary(make_rng(11), 4)
        np.testing.assert_array_equal(qc.matrix_from_json(qc.matrix_to_json(m)), m)
