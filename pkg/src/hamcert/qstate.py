"""Dense statevector engine: stabilizer-product inputs, exact and
truncated-Taylor time evolution, fidelities, and the Pauli-weighted
expected-fidelity identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pauli import (
    DimensionError,
    PauliString,
    SparseHamiltonian,
    all_pauli_strings,
    to_dense,
)

_NORM_TOL = 1e-10

_SQ = 1.0 / math.sqrt(2.0)
#: Single-qubit +/- eigenkets of X, Y, Z, keyed by (axis, sign bit).
EIGENKETS = {
    ("X", 0): np.array([_SQ, _SQ], dtype=np.complex128),
    ("X", 1): np.array([_SQ, -_SQ], dtype=np.complex128),
    ("Y", 0): np.array([_SQ, _SQ * 1j], dtype=np.complex128),
    ("Y", 1): np.array([_SQ, -_SQ * 1j], dtype=np.complex128),
    ("Z", 0): np.array([1.0, 0.0], dtype=np.complex128),
    ("Z", 1): np.array([0.0, 1.0], dtype=np.complex128),
}

_AXES = "XYZ"


@dataclass(frozen=True, eq=False)
class StateVector:
    """Dense n-qubit state; qubit 1 is the most significant index bit.

    Unit norm is enforced within 1e-10 unless the state is explicitly
    flagged `unnormalized` (truncated-Taylor hypothesis states keep their
    raw norm until use).
    """

    n: int
    amplitudes: np.ndarray
    unnormalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n,):
            raise DimensionError(
                f"amplitude vector of length {amps.shape} does not match n={self.n}"
            )
        if not self.unnormalized:
            nrm = math.sqrt(np.vdot(amps, amps).real)
            if abs(nrm - 1.0) > _NORM_TOL:
                raise ValueError(f"state norm {nrm:.12g} is not 1 within {_NORM_TOL}")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return math.sqrt(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm < 1e-14:
            raise ValueError("cannot normalize a (near-)zero state")
        return StateVector(self.n, self.amplitudes / nrm)

    def tensor(self) -> np.ndarray:
        """Read-only view shaped (2,)*n."""
        return self.amplitudes.reshape((2,) * self.n)

    def inner(self, other: "StateVector") -> complex:
        if self.n != other.n:
            raise DimensionError(f"qubit counts differ: {self.n} vs {other.n}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def dump(self) -> str:
        """Debug dump: one `(index, re, im)` line per amplitude."""
        return "\n".join(
            f"{i} {float(a.real)!r} {float(a.imag)!r}"
            for i, a in enumerate(self.amplitudes)
        )


@dataclass(frozen=True)
class ProductStateLabel:
    """Label (P, b) of a stabilizer product state: per-qubit axis and sign."""

    axes: str
    signs: tuple[int, ...]

    def __post_init__(self):
        if len(self.axes) != len(self.signs):
            raise ValueError("axes and signs must have equal length")
        if any(a not in _AXES for a in self.axes):
            raise ValueError(f"axes must be from {_AXES}, got {self.axes!r}")
        if any(b not in (0, 1) for b in self.signs):
            raise ValueError("signs must be bits")

    @property
    def n(self) -> int:
        return len(self.axes)

    def qubit_kets(self) -> list[np.ndarray]:
        return [EIGENKETS[a, b] for a, b in zip(self.axes, self.signs)]

    def to_statevector(self) -> StateVector:
        amps = np.array([1.0 + 0.0j])
        for ket in self.qubit_kets():
            amps = (amps[:, None] * ket).ravel()
        return StateVector(self.n, amps)


def sample_stabilizer_product(
    rng: np.random.Generator, n: int
) -> tuple[ProductStateLabel, StateVector]:
    """One uniform draw from the 6^n stabilizer product ensemble."""
    draws = rng.integers(0, 6, size=n)
    label = ProductStateLabel(
        "".join(_AXES[d // 2] for d in draws), tuple(int(d % 2) for d in draws)
    )
    return label, label.to_statevector()


@lru_cache(maxsize=128)
def _eigh(h: SparseHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(to_dense(h))
    evals.flags.writeable = False
    evecs.flags.writeable = False
    return evals, evecs


def _unitary(h: SparseHamiltonian, t: float) -> np.ndarray:
    """Dense e^{-iHt} from the cached eigendecomposition."""
    evals, evecs = _eigh(h)
    return (evecs * np.exp(-1j * t * evals)) @ evecs.conj().T


def evolve_exact(h: SparseHamiltonian, t: float, psi: StateVector) -> StateVector:
    """e^{-iHt} |psi> via Hermitian eigendecomposition (simulation ground truth)."""
    if h.n != psi.n:
        raise DimensionError(f"qubit counts differ: {h.n} vs {psi.n}")
    evals, evecs = _eigh(h)
    out = evecs @ (np.exp(-1j * t * evals) * (evecs.conj().T @ psi.amplitudes))
    return StateVector(psi.n, out)


@lru_cache(maxsize=32)
def _taylor_matrix(h0: SparseHamiltonian, t: float, order: int) -> np.ndarray:
    """Matrix of the order-l truncation of exp(-iH0 t)."""
    dense = to_dense(h0)
    dim = dense.shape[0]
    term = np.eye(dim, dtype=np.complex128)
    total = term.copy()
    for j in range(1, order + 1):
        term = term @ dense * (-1j * t / j)
        total += term
    total.flags.writeable = False
    return total


def taylor_hypothesis(
    h0: SparseHamiltonian, t: float, psi0: StateVector, order: int
) -> StateVector:
    """Truncated-series hypothesis state sum_{j<=l} (-itH0)^j/j! |psi0>.

    Returned unnormalized; callers normalize right before basis
    construction or fidelity use.
    """
    if h0.n != psi0.n:
        raise DimensionError(f"qubit counts differ: {h0.n} vs {psi0.n}")
    if order < 0:
        raise ValueError("truncation order must be nonnegative")
    out = _taylor_matrix(h0, float(t), order) @ psi0.amplitudes
    return StateVector(psi0.n, out, unnormalized=True)


def fidelity(psi: StateVector, phi: StateVector) -> float:
    """|<psi|phi>|^2 for normalized pure states."""
    if psi.n != phi.n:
        raise DimensionError(f"qubit counts differ: {psi.n} vs {phi.n}")
    if psi.unnormalized or phi.unnormalized:
        raise ValueError("fidelity requires normalized states")
    return float(abs(np.vdot(psi.amplitudes, phi.amplitudes)) ** 2)


def comparison_unitary(h: SparseHamiltonian, h0: SparseHamiltonian, t: float) -> np.ndarray:
    """Dense W(t) = e^{iH0 t} e^{-iHt} comparing lab and target evolutions."""
    if h.n != h0.n:
        raise DimensionError(f"qubit counts differ: {h.n} vs {h0.n}")
    return _unitary(h0, -t) @ _unitary(h, t)


def _trace_with_word(word: PauliString, mat: np.ndarray) -> complex:
    cols, vals = word.action()
    rows = np.arange(mat.shape[0])
    return complex(np.sum(vals * mat[cols, rows]))


def pauli_transfer_coefficient(
    h: SparseHamiltonian, h0: SparseHamiltonian, t: float, word: PauliString
) -> complex:
    """w_P(t) = Tr(P W(t)) / 2^n."""
    w = comparison_unitary(h, h0, t)
    if word.n != h.n:
        raise DimensionError(f"word acts on {word.n} qubits, expected {h.n}")
    return _trace_with_word(word, w) / 2**h.n


def expected_fidelity_pauli(h: SparseHamiltonian, h0: SparseHamiltonian, t: float) -> float:
    """Ensemble-averaged fidelity sum_P 3^{-wt(P)} |w_P(t)|^2.

    Exact average over the uniform stabilizer product ensemble of the
    fidelity between the H- and H0-evolved states.
    """
    w = comparison_unitary(h, h0, t)
    dim = 2**h.n
    total = 0.0
    for word in all_pauli_strings(h.n):
        wp = _trace_with_word(word, w) / dim
        total += 3.0 ** (-word.weight) * (wp.real**2 + wp.imag**2)
    return total
