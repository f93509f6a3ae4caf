import itertools
import math

import numpy as np
import pytest

import oracles
from conftest import random_hamiltonian
from hamcert import rng
from hamcert.pauli import (
    CapacityError,
    DimensionError,
    PauliString,
    SparseHamiltonian,
    all_pauli_strings,
    frobenius_distance,
    from_text,
    operator_norm,
    pauli_coefficients,
    pauli_mul,
    rydberg_hamiltonian,
    to_dense,
    to_text,
)


def test_single_qubit_products():
    x = PauliString.from_letters("X")
    y = PauliString.from_letters("Y")
    assert pauli_mul(x, x) == (PauliString.identity(1), 1)
    word, phase = pauli_mul(x, y)
    assert word.letters == "Z" and phase == 1j


def test_two_qubit_product_against_dense():
    a = PauliString.from_letters("XZ")
    b = PauliString.from_letters("YZ")
    word, phase = pauli_mul(a, b)
    assert word.letters == "ZI" and phase == 1j
    dense = oracles.kron_chain([oracles.PAULI_1Q[c] for c in "XZ"]) @ oracles.kron_chain(
        [oracles.PAULI_1Q[c] for c in "YZ"]
    )
    assert np.allclose(dense, phase * word.to_dense(), atol=1e-14)


def test_pauli_mul_exhaustive_two_qubits():
    words = all_pauli_strings(2)
    for a, b in itertools.product(words, repeat=2):
        word, phase = pauli_mul(a, b)
        dense = a.to_dense() @ b.to_dense()
        assert np.allclose(dense, phase * word.to_dense(), atol=1e-13)
        # multiplying by b again recovers a up to phase
        back, phase2 = pauli_mul(word, b)
        assert back == a
        assert abs(abs(phase * phase2) - 1) < 1e-15


def test_pauli_mul_associative_exhaustive_n1():
    words = all_pauli_strings(1)
    for a, b, c in itertools.product(words, repeat=3):
        ab, p1 = pauli_mul(a, b)
        left, p2 = pauli_mul(ab, c)
        bc, p3 = pauli_mul(b, c)
        right, p4 = pauli_mul(a, bc)
        assert left == right
        assert p1 * p2 == p3 * p4


def test_pauli_mul_dimension_mismatch():
    with pytest.raises(DimensionError):
        pauli_mul(PauliString.from_letters("X"), PauliString.from_letters("XX"))


def test_weight_and_letters():
    w = PauliString.from_letters("XIZY")
    assert w.weight == 3
    assert w.letters == "XIZY"
    assert w.letter(2) == "I"
    assert str(w) == "XIZY"


def test_to_dense_basics():
    h = SparseHamiltonian.from_terms(1, {"X": 0.5}, 1.0)
    assert np.allclose(to_dense(h), [[0, 0.5], [0.5, 0]])
    empty = SparseHamiltonian.from_terms(2, {}, 1.0)
    assert np.allclose(to_dense(empty), np.zeros((4, 4)))
    zz = SparseHamiltonian.from_terms(2, {"ZZ": 0.3}, 1.0)
    assert np.allclose(to_dense(zz), np.diag([0.3, -0.3, -0.3, 0.3]))


def test_to_dense_matches_kron_oracle(stream):
    for n in (1, 2, 3):
        h = random_hamiltonian(n, stream)
        assert np.allclose(to_dense(h), oracles.dense_of(h), atol=1e-13)
        dense = to_dense(h)
        assert np.max(np.abs(dense - dense.conj().T)) < 1e-12


def test_to_dense_capacity():
    h = SparseHamiltonian.from_terms(13, {PauliString.single(13, 1, "X"): 0.5}, 1.0)
    with pytest.raises(CapacityError):
        to_dense(h)


def test_frobenius_distance_examples():
    h = SparseHamiltonian.from_terms(2, {"XI": 0.3, "ZZ": 0.4}, 1.0)
    h0 = SparseHamiltonian.from_terms(2, {}, 1.0)
    assert frobenius_distance(h, h0) == pytest.approx(0.5, abs=1e-15)
    assert frobenius_distance(h, h) == 0.0
    # single X on qubit 1 has the same distance at any n
    for n in (1, 2, 3):
        a = SparseHamiltonian.from_terms(n, {PauliString.single(n, 1, "X"): 0.2}, 1.0)
        b = SparseHamiltonian.from_terms(n, {}, 1.0)
        assert frobenius_distance(a, b) == pytest.approx(0.2, abs=1e-15)


def test_frobenius_distance_matches_dense_trace(stream):
    for n in (1, 2, 3):
        h = random_hamiltonian(n, stream)
        h0 = random_hamiltonian(n, stream)
        diff = oracles.dense_of(h) - oracles.dense_of(h0)
        expected = math.sqrt(abs(np.trace(diff.conj().T @ diff)) / 2**n)
        assert frobenius_distance(h, h0) == pytest.approx(expected, abs=1e-12)


def test_frobenius_dimension_mismatch():
    a = SparseHamiltonian.from_terms(1, {"X": 0.1}, 1.0)
    b = SparseHamiltonian.from_terms(2, {"XI": 0.1}, 1.0)
    with pytest.raises(DimensionError):
        frobenius_distance(a, b)


def test_operator_norm_examples(stream):
    assert operator_norm(SparseHamiltonian.from_terms(1, {"Z": 0.7}, 1.0)) == pytest.approx(0.7)
    bloch = SparseHamiltonian.from_terms(1, {"X": 0.6, "Z": 0.8}, 1.0)
    assert operator_norm(bloch) == pytest.approx(1.0, abs=1e-14)
    h = random_hamiltonian(3, stream)
    assert operator_norm(h) == pytest.approx(
        oracles.power_iteration_norm(oracles.dense_of(h)), abs=1e-9
    )


def test_norm_bound_invariant(stream):
    h = random_hamiltonian(3, stream)
    assert h.validate_norm_bound() <= h.norm_bound * (1 + 1e-12)
    shrunk = SparseHamiltonian(h.n, h.terms, h.norm_bound / 10)
    with pytest.raises(ValueError):
        shrunk.validate_norm_bound()


def test_identity_component_dropped():
    h = SparseHamiltonian.from_terms(2, {"II": 0.4, "XI": 0.5}, 1.0)
    assert h.dropped_identity == pytest.approx(0.4)
    assert h.n_terms == 1


def test_coefficient_magnitude_invariant():
    with pytest.raises(ValueError):
        SparseHamiltonian.from_terms(2, {"ZZ": 2.8}, 5.0)
    relaxed = SparseHamiltonian.from_terms(2, {"ZZ": 2.8}, 5.0, relaxed_coefficients=True)
    assert relaxed.coefficient(PauliString.from_letters("ZZ")) == pytest.approx(2.8)


def test_rydberg_single_qubit():
    h = rydberg_hamiltonian(1, omega=1.0, delta=2.5)
    assert {w.letters: mu for w, mu in h.terms} == {"X": 0.5, "Z": 1.25}


def test_rydberg_two_qubit_coefficients():
    h = rydberg_hamiltonian(2, omega=1.0, delta=2.5, r_b=1.5, a=1.0)
    coeffs = {w.letters: mu for w, mu in h.terms}
    assert coeffs["ZZ"] == pytest.approx(2.84765625, abs=1e-12)
    assert coeffs["ZI"] == pytest.approx(-1.59765625, abs=1e-12)
    assert coeffs["IZ"] == pytest.approx(-1.59765625, abs=1e-12)
    assert coeffs["XI"] == coeffs["IX"] == pytest.approx(0.5)


def test_rydberg_matches_projector_construction():
    # direct construction from N_i = |r><r| projectors, minus its trace part
    for n in (1, 2, 3):
        omega, delta, r_b, a = 1.0, 2.5, 1.5, 1.0
        h = rydberg_hamiltonian(n, omega, delta, r_b, a)
        nproj = (oracles.PAULI_1Q["I"] - oracles.PAULI_1Q["Z"]) / 2
        total = np.zeros((2**n, 2**n), dtype=complex)
        for i in range(n):
            ops = [oracles.PAULI_1Q["I"]] * n
            ops[i] = oracles.PAULI_1Q["X"]
            total += omega / 2 * oracles.kron_chain(ops)
            ops[i] = nproj
            total += -delta * oracles.kron_chain(ops)
        for i in range(n):
            for j in range(i + 1, n):
                ops = [oracles.PAULI_1Q["I"]] * n
                ops[i] = nproj
                ops[j] = nproj
                total += omega * (r_b / (a * (j - i))) ** 6 * oracles.kron_chain(ops)
        total -= np.trace(total) / 2**n * np.eye(2**n)
        assert np.max(np.abs(to_dense(h) - total)) < 1e-12
        assert abs(np.trace(to_dense(h))) < 1e-12
        assert operator_norm(h) == pytest.approx(h.norm_bound)


def test_pauli_coefficients_roundtrip(stream):
    h = random_hamiltonian(3, stream)
    dense = to_dense(h)
    coeffs = pauli_coefficients(dense)
    assert coeffs == pytest.approx({w: mu for w, mu in h.terms})


def test_serialization_roundtrip(stream):
    h = rydberg_hamiltonian(3, 1.0, 2.5)
    text = to_text(h)
    assert text.splitlines()[0].startswith("n=3 M=")
    assert from_text(text) == h
    h2 = random_hamiltonian(2, stream)
    assert from_text(to_text(h2)) == h2


def test_from_text_errors():
    with pytest.raises(ValueError):
        from_text("")
    with pytest.raises(ValueError):
        from_text("bogus header\nXX 0.5")


def test_canonical_term_order(stream):
    h = random_hamiltonian(3, stream, n_terms=10)
    codes = [w.code for w, _ in h.terms]
    assert codes == sorted(codes)
