"""Single-sample state certification by adaptive single-qubit measurements.

One run measures the lab state qubit by qubit: a uniformly chosen pivot
qubit k splits the register into a computational-basis prefix (qubits
1..k-1), an adaptively chosen phase-state basis for qubits k+1..n, and a
final binary measurement of qubit k in a basis containing the conditioned
hypothesis state.  The adaptive basis is built so the hypothesis state
yields both outcomes with probability 1/2 on every qubit.

Two engines compute the conditioned hypothesis states: a dense path that
works on the full statevector, and a factorized path that expands the
truncated-series hypothesis state into a sum of product terms and reuses
per-qubit overlap tables across iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .pauli import (
    CapacityError,
    DimensionError,
    PauliString,
    SparseHamiltonian,
    pauli_mul,
)
from .qstate import EIGENKETS, ProductStateLabel, StateVector

#: Conditioned-hypothesis traces below this are treated as forbidden branches.
ZERO_BRANCH_TOL = 1e-14

#: Largest n for exact measurement-tree enumeration.
TREE_ENUMERATION_LIMIT = 6

_PAULI_1Q = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

_KET0 = EIGENKETS["Z", 0]
_KET1 = EIGENKETS["Z", 1]


class ZeroBranchError(Exception):
    """The hypothesis state assigns (near-)zero probability to an observed branch."""


@dataclass(frozen=True)
class DtOutcomeRecord:
    """Outcome transcript of one certification run."""

    k: int
    x: tuple[int, ...]
    dt_outcomes: tuple[int, ...]
    final_accept: int

    def csv_row(self, trial: int) -> str:
        xbits = "".join(map(str, self.x))
        lbits = "".join(map(str, self.dt_outcomes))
        return f"{trial},{self.k},{xbits},{lbits},{self.final_accept}"


def _complement(ket: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal complement of a single-qubit ket."""
    return np.array([ket[1].conjugate(), -ket[0].conjugate()])


_SQRT_HALF = 1.0 / math.sqrt(2.0)


def _basis_scalars_from_bloch(
    rx: float, ry: float, rz: float
) -> tuple[complex, complex, complex, complex]:
    """Basis kets (b0, b1, bperp0, bperp1) as plain complex scalars.

    Axis rule: normalize(r x e_z); e_x when r is parallel to e_z; the
    computational basis when |r| vanishes.  Any axis orthogonal to r makes
    the state a phase state (both outcomes equally likely).
    """
    if math.sqrt(rx * rx + ry * ry + rz * rz) < 1e-12:
        return 1.0 + 0.0j, 0.0j, 0.0j, 1.0 + 0.0j
    plane = math.hypot(rx, ry)
    if plane < 1e-12:
        ax, ay = 1.0, 0.0
    else:
        ax, ay = ry / plane, -rx / plane
    b1 = (ax + 1j * ay) * _SQRT_HALF
    # complement rule (conj(beta), -conj(alpha)) applied to (sqrt(1/2), b1)
    return _SQRT_HALF + 0.0j, b1, b1.conjugate(), -_SQRT_HALF + 0.0j


def _basis_from_bloch(rx: float, ry: float, rz: float) -> tuple[np.ndarray, np.ndarray]:
    """Array form of `_basis_scalars_from_bloch`."""
    b0, b1, p0, p1 = _basis_scalars_from_bloch(rx, ry, rz)
    return np.array([b0, b1]), np.array([p0, p1])


def _bloch_of(rho: np.ndarray) -> tuple[float, float, float, float]:
    """(trace, rx, ry, rz) of an unnormalized Hermitian 2x2 matrix."""
    tr = rho[0, 0].real + rho[1, 1].real
    return tr, 2.0 * rho[0, 1].real, -2.0 * rho[0, 1].imag, rho[0, 0].real - rho[1, 1].real


def choose_phase_basis(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal single-qubit basis in which `rho` is a phase state.

    Both outcome probabilities of the normalized state equal 1/2.  The
    basis is a deterministic function of rho (see `_basis_from_bloch`).
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (2, 2):
        raise DimensionError(f"expected a 2x2 matrix, got shape {rho.shape}")
    tr, rx, ry, rz = _bloch_of(rho)
    if tr <= 0:
        raise ValueError("density matrix must have positive trace")
    return _basis_from_bloch(rx / tr, ry / tr, rz / tr)


def conditioned_qubit_state(
    phi: StateVector,
    fixed: Sequence[tuple[int, np.ndarray]],
    target: int,
) -> np.ndarray:
    """Unnormalized reduced 2x2 state of `target` given fixed qubit outcomes.

    Projects each (qubit, ket) in `fixed` and traces out every other
    qubit; the trace of the result is the probability of the fixed
    outcomes.  Raises ZeroBranchError when that probability is below
    ZERO_BRANCH_TOL.
    """
    n = phi.n
    qubits = [q for q, _ in fixed]
    if len(set(qubits)) != len(qubits):
        raise ValueError("fixed qubits must be distinct")
    if target in qubits or not 1 <= target <= n:
        raise ValueError(f"invalid target qubit {target}")
    tensor = phi.tensor()
    for q, ket in sorted(fixed, key=lambda item: -item[0]):
        if not 1 <= q <= n:
            raise ValueError(f"fixed qubit {q} out of range")
        tensor = np.tensordot(np.conjugate(ket), tensor, axes=([0], [q - 1]))
    pos = target - 1 - sum(1 for q in qubits if q < target)
    flat = np.moveaxis(tensor, pos, 0).reshape(2, -1)
    rho = flat @ flat.conj().T
    if rho[0, 0].real + rho[1, 1].real < ZERO_BRANCH_TOL:
        raise ZeroBranchError("hypothesis branch has vanishing probability")
    return rho


def _reduced_target_rho(phi_tensor: np.ndarray) -> np.ndarray:
    """Reduced 2x2 state of axis 1, tracing out axis 0 and all later axes."""
    cols = phi_tensor.reshape(2, 2, -1).transpose(1, 0, 2).reshape(2, -1)
    return cols @ cols.conj().T


def _contract_target(flat: np.ndarray, ket0c: complex, ket1c: complex) -> np.ndarray:
    """<ket| applied to axis 1 of a flat (pivot, target, rest) array."""
    cube = flat.reshape(2, 2, -1)
    return (cube[:, 0, :] * ket0c + cube[:, 1, :] * ket1c).ravel()


def _certify_once(
    psi: np.ndarray, phi: np.ndarray, n: int, k: int, uniforms: np.ndarray
) -> tuple[int, tuple[int, ...], tuple[int, ...]]:
    """One certification run on flat length-2^n arrays; psi, phi normalized.

    Consumes at most n uniform variates: k-1 computational outcomes, n-k
    adaptive-basis outcomes, one final accept draw.  When the hypothesis
    assigns zero probability to an observed branch the run rejects and the
    remaining qubits are read out in the computational basis so the
    transcript keeps its full length.
    """
    ui = 0
    dead = False
    x_bits: list[int] = []
    for _ in range(k - 1):
        half = psi.size >> 1
        s0 = psi[:half]
        p0 = np.vdot(s0, s0).real
        out = 0 if uniforms[ui] < p0 else 1
        ui += 1
        branch = s0 if out == 0 else psi[half:]
        psi = branch / math.sqrt(np.vdot(branch, branch).real)
        phi = phi[:half] if out == 0 else phi[half:]
        x_bits.append(out)
    dt_bits: list[int] = []
    while psi.size > 2:
        if not dead:
            cube = phi.reshape(2, 2, -1)
            c0 = cube[:, 0, :].ravel()
            c1 = cube[:, 1, :].ravel()
            r00 = np.vdot(c0, c0).real
            r11 = np.vdot(c1, c1).real
            r01 = complex(np.vdot(c1, c0))
            tr = r00 + r11
            if tr < ZERO_BRANCH_TOL:
                dead = True
        if dead:
            kets = (1.0 + 0.0j, 0.0j, 0.0j, 1.0 + 0.0j)
        else:
            kets = _basis_scalars_from_bloch(
                2.0 * r01.real / tr, -2.0 * r01.imag / tr, (r00 - r11) / tr
            )
        amp0 = _contract_target(psi, kets[0].conjugate(), kets[1].conjugate())
        p0 = np.vdot(amp0, amp0).real
        out = 0 if uniforms[ui] < p0 else 1
        ui += 1
        if out == 0:
            amp = amp0
            u0c, u1c = kets[0].conjugate(), kets[1].conjugate()
        else:
            u0c, u1c = kets[2].conjugate(), kets[3].conjugate()
            amp = _contract_target(psi, u0c, u1c)
        psi = amp / math.sqrt(np.vdot(amp, amp).real)
        if not dead:
            phi = _contract_target(phi, u0c, u1c)
        dt_bits.append(out)
    if dead:
        return 0, tuple(x_bits), tuple(dt_bits)
    phi_sq = np.vdot(phi, phi).real
    if phi_sq < ZERO_BRANCH_TOL:
        return 0, tuple(x_bits), tuple(dt_bits)
    p_accept = abs(np.vdot(phi, psi)) ** 2 / phi_sq
    accept = 1 if uniforms[ui] < p_accept else 0
    return accept, tuple(x_bits), tuple(dt_bits)


def certify_state_once(
    psi_lab: StateVector, phi_hyp: StateVector, rng: np.random.Generator
) -> tuple[int, DtOutcomeRecord]:
    """One run of the adaptive certification measurement.

    Returns (accept_bit, transcript).  `phi_hyp` must be normalized.
    """
    if psi_lab.n != phi_hyp.n:
        raise DimensionError(f"qubit counts differ: {psi_lab.n} vs {phi_hyp.n}")
    if phi_hyp.unnormalized:
        raise ValueError("hypothesis state must be normalized before certification")
    n = psi_lab.n
    k = int(rng.integers(1, n + 1))
    uniforms = rng.random(n)
    accept, x_bits, dt_bits = _certify_once(
        psi_lab.amplitudes, phi_hyp.amplitudes, n, k, uniforms
    )
    return accept, DtOutcomeRecord(k, x_bits, dt_bits, accept)


def reject_count(
    psi_lab: StateVector, phi_hyp: StateVector, shots: int, rng: np.random.Generator
) -> int:
    """Number of rejections over `shots` independent certification runs.

    Each run draws a fresh pivot k and measurement path on the same pair
    of states.
    """
    if psi_lab.n != phi_hyp.n:
        raise DimensionError(f"qubit counts differ: {psi_lab.n} vs {phi_hyp.n}")
    if phi_hyp.unnormalized:
        raise ValueError("hypothesis state must be normalized before certification")
    n = psi_lab.n
    ks = rng.integers(1, n + 1, size=shots)
    uniforms = rng.random((shots, n))
    psi_t = psi_lab.amplitudes
    phi_t = phi_hyp.amplitudes
    rejects = 0
    for s in range(shots):
        accept, _, _ = _certify_once(psi_t, phi_t, n, int(ks[s]), uniforms[s])
        rejects += 1 - accept
    return rejects


def _accept_mass_dt(psi: np.ndarray, phi: np.ndarray) -> float:
    """Total accept probability mass below a node of the measurement tree.

    `psi` is unnormalized (its squared norm is the branch probability);
    `phi` is the hypothesis conditioned on the same outcomes.  Axis 0 is
    the pivot qubit, axis 1 the next adaptive target.
    """
    if psi.ndim == 1:
        phi_sq = np.vdot(phi, phi).real
        if phi_sq < ZERO_BRANCH_TOL:
            return 0.0
        return float(abs(np.vdot(phi, psi)) ** 2 / phi_sq)
    rho = _reduced_target_rho(phi)
    tr, rx, ry, rz = _bloch_of(rho)
    if tr < ZERO_BRANCH_TOL:
        return 0.0
    basis = _basis_from_bloch(rx / tr, ry / tr, rz / tr)
    total = 0.0
    for ket in basis:
        psi_b = np.tensordot(ket.conj(), psi, axes=([0], [1]))
        if np.vdot(psi_b, psi_b).real < 1e-30:
            continue
        phi_b = np.tensordot(ket.conj(), phi, axes=([0], [1]))
        total += _accept_mass_dt(psi_b, phi_b)
    return total


def _accept_mass_comp(psi: np.ndarray, phi: np.ndarray, remaining: int) -> float:
    if remaining == 0:
        return _accept_mass_dt(psi, phi)
    total = 0.0
    for out in (0, 1):
        psi_b = psi[out]
        if np.vdot(psi_b, psi_b).real < 1e-30:
            continue
        total += _accept_mass_comp(psi_b, phi[out], remaining - 1)
    return total


def rejection_probability_exact(psi: StateVector, phi: StateVector) -> float:
    """Exact rejection probability of the certification measurement.

    Averages over the pivot choice and enumerates every computational,
    adaptive-basis, and final outcome.  Exponential in n; refuses n above
    TREE_ENUMERATION_LIMIT.
    """
    if psi.n != phi.n:
        raise DimensionError(f"qubit counts differ: {psi.n} vs {phi.n}")
    if psi.n > TREE_ENUMERATION_LIMIT:
        raise CapacityError(
            f"n={psi.n} exceeds tree enumeration limit {TREE_ENUMERATION_LIMIT}"
        )
    if phi.unnormalized:
        raise ValueError("hypothesis state must be normalized")
    accept = 0.0
    for k in range(1, psi.n + 1):
        accept += _accept_mass_comp(psi.tensor(), phi.tensor(), k - 1)
    return 1.0 - accept / psi.n


@dataclass(frozen=True, eq=False)
class ProductTermSum:
    """Sum of product terms sum_g c_g (x)_i |ket_g^(i)> on n qubits.

    The single-qubit factors are unnormalized.  Expanding the sum
    reconstructs the represented (unnormalized) state exactly.
    """

    n: int
    coeffs: np.ndarray  # (Gamma,)
    kets: np.ndarray  # (Gamma, n, 2)

    @property
    def gamma(self) -> int:
        return len(self.coeffs)

    def to_statevector(self) -> StateVector:
        amps = self.coeffs[:, None].copy()
        for i in range(self.n):
            amps = np.einsum("gm,ga->gma", amps, self.kets[:, i, :]).reshape(
                self.gamma, -1
            )
        return StateVector(self.n, amps.sum(axis=0), unnormalized=True)


def build_product_term_sum(
    h0: SparseHamiltonian,
    t: float,
    order: int,
    label: ProductStateLabel,
    *,
    term_budget: int = 4096,
) -> ProductTermSum:
    """Expand the truncated exp(-iH0 t) acting on a stabilizer product input.

    Accumulates the series as a Pauli-word polynomial, merging duplicate
    words at every order, then applies each surviving word to the product
    input qubit by qubit.  The term count after merging is bounded by
    min(4^n, term_budget); exceeding the budget raises CapacityError.
    """
    if h0.n != label.n:
        raise DimensionError(f"qubit counts differ: {h0.n} vs {label.n}")
    if order < 0:
        raise ValueError("truncation order must be nonnegative")
    identity = PauliString.identity(h0.n)
    poly: dict[PauliString, complex] = {identity: 1.0 + 0.0j}
    power: dict[PauliString, complex] = {identity: 1.0 + 0.0j}
    scale = 1.0 + 0.0j
    for j in range(1, order + 1):
        nxt: dict[PauliString, complex] = {}
        for word_a, c_a in power.items():
            for word_b, mu in h0.terms:
                word_c, phase = pauli_mul(word_a, word_b)
                nxt[word_c] = nxt.get(word_c, 0.0) + c_a * mu * phase
        power = nxt
        if len(power) > term_budget:
            raise CapacityError(
                f"merged term count {len(power)} exceeds budget {term_budget}"
            )
        scale *= -1j * t / j
        for word, c in power.items():
            poly[word] = poly.get(word, 0.0) + scale * c
        if len(poly) > term_budget:
            raise CapacityError(
                f"merged term count {len(poly)} exceeds budget {term_budget}"
            )
    items = sorted(((w, c) for w, c in poly.items() if c != 0.0))
    base = label.qubit_kets()
    coeffs = np.array([c for _, c in items], dtype=np.complex128)
    kets = np.empty((len(items), h0.n, 2), dtype=np.complex128)
    for g, (word, _) in enumerate(items):
        for i in range(h0.n):
            kets[g, i] = _PAULI_1Q[word.letter(i + 1)] @ base[i]
    return ProductTermSum(h0.n, coeffs, kets)


def factorized_expectation(
    pts: ProductTermSum, factors: Sequence[Optional[np.ndarray]]
) -> float:
    """<phi|Omega|phi> for a tensor-product operator given as per-qubit factors.

    `factors[i]` is a 2x2 matrix or None for identity.  Builds per-qubit
    Gamma x Gamma overlap tables and contracts them elementwise, so the
    cost is O(Gamma^2 n) regardless of how many qubits carry a factor.
    """
    if len(factors) != pts.n:
        raise DimensionError(f"expected {pts.n} factors, got {len(factors)}")
    gamma = pts.gamma
    table = np.ones((gamma, gamma), dtype=np.complex128)
    for i, omega in enumerate(factors):
        kq = pts.kets[:, i, :]
        if omega is None:
            table *= kq.conj() @ kq.T
        else:
            omega = np.asarray(omega, dtype=np.complex128)
            if omega.shape != (2, 2):
                raise DimensionError(f"factor {i} has shape {omega.shape}, expected 2x2")
            table *= kq.conj() @ omega @ kq.T
    value = complex(np.vdot(pts.coeffs, table @ pts.coeffs))
    return float(value.real)


def _projector(ket: np.ndarray) -> np.ndarray:
    return np.outer(ket, ket.conj())


def dt_basis_path_dense(
    phi: StateVector, k: int, x_bits: Sequence[int], dt_bits: Sequence[int]
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Adaptive bases along a fixed outcome path, via dense conditioning.

    Returns the list of (b, b_perp) bases for qubits k+1..n and the final
    normalized conditioned hypothesis ket on qubit k.
    """
    n = phi.n
    if len(x_bits) != k - 1 or len(dt_bits) != n - k:
        raise ValueError("outcome path lengths inconsistent with k and n")
    fixed = [(q, (_KET0, _KET1)[b]) for q, b in zip(range(1, k), x_bits)]
    bases = []
    for step, target in enumerate(range(k + 1, n + 1)):
        rho = conditioned_qubit_state(phi, fixed, target)
        basis = choose_phase_basis(rho)
        bases.append(basis)
        fixed.append((target, basis[dt_bits[step]]))
    tensor = phi.tensor()
    for q, ket in sorted(fixed, key=lambda item: -item[0]):
        tensor = np.tensordot(ket.conj(), tensor, axes=([0], [q - 1]))
    nrm = np.linalg.norm(tensor)
    if nrm**2 < ZERO_BRANCH_TOL:
        raise ZeroBranchError("hypothesis branch has vanishing probability")
    return bases, tensor / nrm


def dt_basis_path_factorized(
    pts: ProductTermSum, k: int, x_bits: Sequence[int], dt_bits: Sequence[int]
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Same contract as `dt_basis_path_dense`, via the product-term engine.

    Precomputes per-qubit overlap tables once; each adaptive step then
    costs O(Gamma) new inner products plus O(Gamma^2) table contractions.
    The pivot qubit k enters through its identity overlap table, which
    marginalizes it over both computational branches.
    """
    n = pts.n
    if len(x_bits) != k - 1 or len(dt_bits) != n - k:
        raise ValueError("outcome path lengths inconsistent with k and n")
    kets = pts.kets
    id_tables = np.empty((n, pts.gamma, pts.gamma), dtype=np.complex128)
    for i in range(n):
        kq = kets[:, i, :]
        id_tables[i] = kq.conj() @ kq.T
    # suffix[i] = elementwise product of identity tables of qubits > i (1-based)
    suffix = np.empty_like(id_tables)
    running = np.ones((pts.gamma, pts.gamma), dtype=np.complex128)
    for i in range(n, 0, -1):
        suffix[i - 1] = running
        running = running * id_tables[i - 1]
    proj_kets = {
        "0": _KET0,
        "+": EIGENKETS["X", 0],
        "i": EIGENKETS["Y", 0],
    }
    # scalar per-term path amplitude over measured qubits
    path = np.ones(pts.gamma, dtype=np.complex128)
    for q, bit in zip(range(1, k), x_bits):
        ket = (_KET0, _KET1)[bit]
        path *= kets[:, q - 1, :] @ ket.conj()
    bases = []
    pivot_table = id_tables[k - 1]
    for step, target in enumerate(range(k + 1, n + 1)):
        d = pts.coeffs * path
        base_table = pivot_table * suffix[target - 1]
        expectations = {}
        for name, gket in proj_kets.items():
            w = kets[:, target - 1, :] @ gket.conj()
            expectations[name] = complex(
                np.vdot(d, (base_table * np.outer(w.conj(), w)) @ d)
            ).real
        trace = complex(np.vdot(d, (base_table * id_tables[target - 1]) @ d)).real
        if trace < ZERO_BRANCH_TOL:
            raise ZeroBranchError("hypothesis branch has vanishing probability")
        rx = 2.0 * expectations["+"] - trace
        ry = 2.0 * expectations["i"] - trace
        rz = 2.0 * expectations["0"] - trace
        basis = _basis_from_bloch(rx / trace, ry / trace, rz / trace)
        bases.append(basis)
        path *= kets[:, target - 1, :] @ basis[dt_bits[step]].conj()
    final = np.einsum("g,ga->a", pts.coeffs * path, kets[:, k - 1, :])
    nrm = np.linalg.norm(final)
    if nrm**2 < ZERO_BRANCH_TOL:
        raise ZeroBranchError("hypothesis branch has vanishing probability")
    return bases, final / nrm
