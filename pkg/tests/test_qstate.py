import math

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import random_hamiltonian, random_state
from hamcert import rng
from hamcert.pauli import DimensionError, PauliString, SparseHamiltonian, all_pauli_strings
from hamcert.qstate import (
    ProductStateLabel,
    StateVector,
    evolve_exact,
    expected_fidelity_pauli,
    fidelity,
    pauli_transfer_coefficient,
    sample_stabilizer_product,
    taylor_hypothesis,
)


def test_statevector_norm_validation():
    with pytest.raises(ValueError):
        StateVector(1, [1.0, 1.0])
    StateVector(1, [1.0, 1.0], unnormalized=True)  # flagged states may be unnormalized
    with pytest.raises(DimensionError):
        StateVector(2, [1.0, 0.0])


def test_statevector_dump():
    sv = StateVector(1, [1.0, 0.0])
    lines = sv.dump().splitlines()
    assert lines[0].split() == ["0", "1.0", "0.0"]
    assert len(lines) == 2


def test_product_label_vectors():
    assert np.allclose(
        ProductStateLabel("Z", (0,)).to_statevector().amplitudes, [1, 0]
    )
    minus = ProductStateLabel("X", (1,)).to_statevector().amplitudes
    assert np.allclose(minus, [1 / math.sqrt(2), -1 / math.sqrt(2)])
    plus_i = ProductStateLabel("Y", (0,)).to_statevector().amplitudes
    assert np.allclose(plus_i, [1 / math.sqrt(2), 1j / math.sqrt(2)])


def test_sampling_uniformity_chisquare():
    # 6e4 draws over the 36 two-qubit stabilizer products
    stream = rng.stream(314159)
    counts = {}
    draws = 60000
    for _ in range(draws):
        label, _ = sample_stabilizer_product(stream, 2)
        key = (label.axes, label.signs)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 36
    _, pvalue = stats.chisquare(list(counts.values()))
    assert pvalue > 1e-3


def test_sample_label_vector_consistency(stream):
    for _ in range(20):
        label, vec = sample_stabilizer_product(stream, 3)
        assert np.allclose(vec.amplitudes, label.to_statevector().amplitudes)


def test_evolve_identity_at_t0(stream):
    h = random_hamiltonian(2, stream)
    psi = random_state(2, stream)
    out = evolve_exact(h, 0.0, psi)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


def test_evolve_single_qubit_rotation():
    h = SparseHamiltonian.from_terms(1, {"X": 1.0}, 1.0)
    out = evolve_exact(h, math.pi / 4, StateVector(1, [1, 0]))
    expected = [math.cos(math.pi / 4), -1j * math.sin(math.pi / 4)]
    assert np.allclose(out.amplitudes, expected, atol=1e-14)


def test_evolve_matches_series_oracle(stream):
    h = random_hamiltonian(3, stream)
    psi = random_state(3, stream)
    t = 0.1
    assert oracles.series_remainder_bound(t, h.norm_bound, 30) < 1e-12
    expected = oracles.taylor_series_evolution(oracles.dense_of(h), t, psi.amplitudes)
    out = evolve_exact(h, t, psi)
    assert np.max(np.abs(out.amplitudes - expected)) < 1e-10
    assert abs(out.norm() - 1.0) < 1e-10


def test_evolve_norm_preservation(stream):
    for _ in range(10):
        h = random_hamiltonian(3, stream)
        psi = random_state(3, stream)
        out = evolve_exact(h, stream.uniform(0, 2.0), psi)
        assert abs(out.norm() - 1.0) < 1e-10


def test_taylor_lowest_orders(stream):
    h0 = SparseHamiltonian.from_terms(1, {"X": 1.0}, 1.0)
    psi0 = StateVector(1, [1, 0])
    zeroth = taylor_hypothesis(h0, 0.7, psi0, 0)
    assert np.allclose(zeroth.amplitudes, psi0.amplitudes)
    assert zeroth.unnormalized
    first = taylor_hypothesis(h0, 0.7, psi0, 1)
    assert np.allclose(first.amplitudes, [1.0, -0.7j], atol=1e-15)


def test_taylor_residual_within_series_tail(stream):
    # Rydberg target with evolution time and order picked by the protocol
    # plan at the exact operator norm (t*M = c < 1, so the tail converges)
    from hamcert.certify import plan_parameters
    from hamcert.pauli import rydberg_hamiltonian

    h0 = rydberg_hamiltonian(3, 1.0, 2.5)
    plan = plan_parameters(3, h0.norm_bound, epsilon=0.2, delta=0.01)
    _, psi0 = sample_stabilizer_product(stream, 3)
    hyp = taylor_hypothesis(h0, plan.t, psi0, plan.taylor_order)
    exact = evolve_exact(h0, plan.t, psi0)
    residual = np.linalg.norm(hyp.amplitudes - exact.amplitudes)
    assert residual <= plan.truncation_target
    assert residual <= oracles.series_remainder_bound(
        plan.t, h0.norm_bound, plan.taylor_order
    )


def test_taylor_deficit_negligible_at_experiment_scale(stream):
    # the figure presets run t=0.1 with order 4; the resulting hypothesis
    # infidelity must be far below the protocol's per-shot thresholds
    from hamcert.pauli import rydberg_hamiltonian

    h0 = rydberg_hamiltonian(3, 1.0, 2.5)
    worst = 0.0
    for _ in range(10):
        _, psi0 = sample_stabilizer_product(stream, 3)
        hyp = taylor_hypothesis(h0, 0.1, psi0, 4).normalized()
        exact = evolve_exact(h0, 0.1, psi0)
        worst = max(worst, 1 - fidelity(exact, hyp))
    assert worst < 1e-6


def test_fidelity_basics():
    z0 = StateVector(1, [1, 0])
    z1 = StateVector(1, [0, 1])
    plus = StateVector(1, [1 / math.sqrt(2), 1 / math.sqrt(2)])
    assert fidelity(z0, z0) == pytest.approx(1.0)
    assert fidelity(z0, z1) == pytest.approx(0.0)
    assert fidelity(z0, plus) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        fidelity(z0, StateVector(1, [2.0, 0.0], unnormalized=True))


def test_transfer_coefficient_identity_cases(stream):
    h = random_hamiltonian(2, stream)
    ident = PauliString.identity(2)
    assert pauli_transfer_coefficient(h, h, 0.3, ident) == pytest.approx(1.0)
    h0 = random_hamiltonian(2, stream)
    assert pauli_transfer_coefficient(h, h0, 0.0, ident) == pytest.approx(1.0)
    for word in all_pauli_strings(2)[1:]:
        assert abs(pauli_transfer_coefficient(h, h, 0.3, word)) < 1e-12


def test_transfer_coefficients_unitary(stream):
    h = random_hamiltonian(2, stream)
    h0 = random_hamiltonian(2, stream)
    total = sum(
        abs(pauli_transfer_coefficient(h, h0, 0.1, w)) ** 2
        for w in all_pauli_strings(2)
    )
    assert total == pytest.approx(1.0, abs=1e-10)


def test_expected_fidelity_trivial(stream):
    h = random_hamiltonian(2, stream)
    assert expected_fidelity_pauli(h, h, 0.2) == pytest.approx(1.0, abs=1e-12)


def test_expected_fidelity_matches_enumeration(stream):
    for n in (1, 2, 3):
        h = random_hamiltonian(n, stream)
        h0 = random_hamiltonian(n, stream)
        t = stream.uniform(0.05, 0.3)
        assert expected_fidelity_pauli(h, h0, t) == pytest.approx(
            oracles.ensemble_average_fidelity(h, h0, t), abs=1e-9
        )


def test_fidelity_bounds(stream):
    for _ in range(5):
        h = random_hamiltonian(2, stream)
        h0 = random_hamiltonian(2, stream)
        t = stream.uniform(0.05, 0.3)
        ef = expected_fidelity_pauli(h, h0, t)
        w_i = abs(pauli_transfer_coefficient(h, h0, t, PauliString.identity(2))) ** 2
        assert ef <= 1 / 3 + 2 / 3 * w_i + 1e-12
        assert 1 - ef <= 1 - w_i + 1e-12


def test_second_order_frobenius_law(stream):
    # (1 - |w_I|^2)/t^2 converges to the squared Frobenius distance
    from hamcert.pauli import frobenius_distance

    h = random_hamiltonian(3, stream)
    h0 = random_hamiltonian(3, stream)
    ident = PauliString.identity(3)

    def g(t):
        wi = abs(pauli_transfer_coefficient(h, h0, t, ident)) ** 2
        return (1 - wi) / t**2

    r1 = (4 * g(5e-3) - g(1e-2)) / 3
    r1b = (4 * g(2.5e-3) - g(5e-3)) / 3
    r2 = (16 * r1b - r1) / 15
    target = frobenius_distance(h, h0) ** 2
    assert abs(r2 - target) < 1e-3 * target


def test_identity_coefficient_derivative_bound(stream):
    # |d/dt w_I| <= Frobenius distance, checked by central differences
    from hamcert.pauli import frobenius_distance

    h = random_hamiltonian(3, stream)
    h0 = random_hamiltonian(3, stream)
    ident = PauliString.identity(3)
    eta = 1e-4
    for t in (0.05, 0.2, 0.5):
        d = (
            pauli_transfer_coefficient(h, h0, t + eta, ident)
            - pauli_transfer_coefficient(h, h0, t - eta, ident)
        ) / (2 * eta)
        assert abs(d) <= frobenius_distance(h, h0) + 1e-6
