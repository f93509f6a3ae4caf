import numpy as np
import pytest

from hamcert import qstate, rng
from hamcert.pauli import PauliString, SparseHamiltonian, all_pauli_strings


def random_state(n: int, stream: np.random.Generator) -> qstate.StateVector:
    v = stream.normal(size=2**n) + 1j * stream.normal(size=2**n)
    return qstate.StateVector(n, v / np.linalg.norm(v))


def random_hamiltonian(
    n: int,
    stream: np.random.Generator,
    n_terms: int = 6,
    coeff_scale: float = 1.0,
) -> SparseHamiltonian:
    words = all_pauli_strings(n)[1:]
    picks = stream.choice(len(words), size=min(n_terms, len(words)), replace=False)
    terms = {words[i]: coeff_scale * stream.uniform(-1, 1) for i in picks}
    return SparseHamiltonian.with_exact_norm_bound(n, terms, relaxed_coefficients=True)


@pytest.fixture
def stream():
    return rng.stream(20250811)
