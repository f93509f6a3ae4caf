"""Bit-packed n-qubit Pauli strings and real-coefficient Pauli-sum Hamiltonians.

A Pauli word is stored as a packed integer, 2 bits per qubit (I=0, X=1,
Y=2, Z=3), with qubit 1 in the most significant pair.  Integer order on
the packed code is therefore lexicographic order on the letter sequence,
which fixes the canonical term ordering used for serialization.

Amplitude-index convention: qubit 1 is the most significant bit of the
computational-basis index, project-wide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Union

import numpy as np

#: Largest qubit count for which dense 2^n x 2^n matrices are materialized.
DENSE_QUBIT_LIMIT = 12

_LETTERS = "IXYZ"
_CODE_OF = {c: i for i, c in enumerate(_LETTERS)}

# Single-qubit product table: result letter and exponent of i, so that
# letter_a * letter_b = i**ipow * letter_c.  Cyclic relations XY = iZ,
# YZ = iX, ZX = iY; reversed orders pick up i**3.
_MUL_LETTER = (
    (0, 1, 2, 3),
    (1, 0, 3, 2),
    (2, 3, 0, 1),
    (3, 2, 1, 0),
)
_MUL_IPOW = (
    (0, 0, 0, 0),
    (0, 0, 1, 3),
    (0, 3, 0, 1),
    (0, 1, 3, 0),
)
_I_POWERS = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


class DimensionError(ValueError):
    """Operands act on different qubit counts."""


class CapacityError(RuntimeError):
    """Request exceeds a configured desk-scale resource limit."""


@dataclass(frozen=True, order=True)
class PauliString:
    """An n-qubit Pauli word, bit-packed 2 bits per qubit."""

    n: int
    code: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one qubit, got n={self.n}")
        if not 0 <= self.code < 4**self.n:
            raise ValueError(f"packed code {self.code} out of range for n={self.n}")

    @classmethod
    def from_letters(cls, letters: str) -> "PauliString":
        code = 0
        for c in letters:
            try:
                code = (code << 2) | _CODE_OF[c]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {c!r}") from None
        return cls(len(letters), code)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        """The word with `letter` on `qubit` (1-based) and I elsewhere."""
        if not 1 <= qubit <= n:
            raise ValueError(f"qubit {qubit} out of range for n={n}")
        return cls(n, _CODE_OF[letter] << (2 * (n - qubit)))

    def letter(self, qubit: int) -> str:
        """Pauli letter on `qubit` (1-based)."""
        return _LETTERS[(self.code >> (2 * (self.n - qubit))) & 3]

    @property
    def letters(self) -> str:
        return "".join(self.letter(q) for q in range(1, self.n + 1))

    @property
    def weight(self) -> int:
        """Number of non-identity letters."""
        w, c = 0, self.code
        while c:
            w += (c & 3) != 0
            c >>= 2
        return w

    def action(self) -> tuple[np.ndarray, np.ndarray]:
        """Permutation form: columns and values of the one nonzero per row.

        Returns (cols, vals) with ``P[r, cols[r]] = vals[r]`` for every
        basis row r, exploiting that a Pauli word has exactly one nonzero
        entry per row.
        """
        return _action(self.n, self.code)

    def to_dense(self) -> np.ndarray:
        if self.n > DENSE_QUBIT_LIMIT:
            raise CapacityError(f"n={self.n} exceeds dense limit {DENSE_QUBIT_LIMIT}")
        cols, vals = self.action()
        mat = np.zeros((2**self.n, 2**self.n), dtype=np.complex128)
        mat[np.arange(2**self.n), cols] = vals
        return mat

    def __str__(self) -> str:
        return self.letters


@lru_cache(maxsize=65536)
def _action(n: int, code: int) -> tuple[np.ndarray, np.ndarray]:
    xmask = signmask = ny = 0
    for q in range(1, n + 1):
        letter = (code >> (2 * (n - q))) & 3
        bit = 1 << (n - q)
        if letter in (1, 2):  # X or Y flips the qubit bit
            xmask |= bit
        if letter in (2, 3):  # Y or Z contributes (-1)^bit
            signmask |= bit
        if letter == 2:
            ny += 1
    rows = np.arange(2**n, dtype=np.int64)
    cols = rows ^ xmask
    signs = 1 - 2 * (np.bitwise_count(rows & signmask).astype(np.int64) & 1)
    vals = ((-1j) ** ny) * signs.astype(np.complex128)
    cols.flags.writeable = False
    vals.flags.writeable = False
    return cols, vals


@lru_cache(maxsize=8)
def all_pauli_strings(n: int) -> tuple[PauliString, ...]:
    """All 4^n words on n qubits, in canonical (packed-code) order."""
    return tuple(PauliString(n, c) for c in range(4**n))


#: Stacked dense Pauli basis is materialized only up to this qubit count.
_STACK_QUBIT_LIMIT = 5


@lru_cache(maxsize=4)
def _pauli_stack(n: int) -> np.ndarray:
    """Dense stack of all 4^n Pauli words, shape (4^n, 2^n, 2^n)."""
    dim = 2**n
    rows = np.arange(dim)
    stack = np.zeros((4**n, dim, dim), dtype=np.complex128)
    for code in range(4**n):
        cols, vals = _action(n, code)
        stack[code, rows, cols] = vals
    stack.flags.writeable = False
    return stack


def pauli_mul(a: PauliString, b: PauliString) -> tuple[PauliString, complex]:
    """Product of two Pauli words: A*B = phase * C with phase in {1,-1,i,-i}."""
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")
    code = 0
    ipow = 0
    ca, cb = a.code, b.code
    for shift in range(0, 2 * a.n, 2):
        la, lb = ca & 3, cb & 3
        code |= _MUL_LETTER[la][lb] << shift
        ipow += _MUL_IPOW[la][lb]
        ca >>= 2
        cb >>= 2
    return PauliString(a.n, code), _I_POWERS[ipow & 3]


TermsLike = Union[Mapping, Iterable[tuple]]


@dataclass(frozen=True)
class SparseHamiltonian:
    """Traceless Hermitian operator as a sparse real Pauli sum.

    `norm_bound` is the declared operator-norm bound M; it is an input,
    not derived (see `validate_norm_bound`).  The identity component, if
    supplied, is dropped at construction and recorded in
    `dropped_identity` (it only shifts the unobservable global phase).
    """

    n: int
    terms: tuple[tuple[PauliString, float], ...]
    norm_bound: float
    dropped_identity: float = 0.0

    @classmethod
    def from_terms(
        cls,
        n: int,
        terms: TermsLike,
        norm_bound: float,
        *,
        relaxed_coefficients: bool = False,
    ) -> "SparseHamiltonian":
        """Build from {word: coefficient}; words may be PauliString or letter strings.

        Coefficients must satisfy |mu| <= 1 unless `relaxed_coefficients`
        (experiment configs with super-unit couplings opt out).
        """
        if norm_bound <= 0:
            raise ValueError(f"declared norm bound must be positive, got {norm_bound}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[PauliString, float] = {}
        dropped = 0.0
        for key, mu in items:
            word = PauliString.from_letters(key) if isinstance(key, str) else key
            if word.n != n:
                raise DimensionError(f"term {word} has n={word.n}, expected {n}")
            mu = float(mu)
            if word.code == 0:
                dropped += mu
                continue
            if mu != 0.0:
                merged[word] = merged.get(word, 0.0) + mu
        for word, mu in merged.items():
            if abs(mu) > 1.0 and not relaxed_coefficients:
                raise ValueError(
                    f"|coefficient| of {word} is {abs(mu):.6g} > 1; "
                    "pass relaxed_coefficients=True to allow"
                )
        ordered = tuple(sorted(((w, mu) for w, mu in merged.items() if mu != 0.0)))
        return cls(n, ordered, float(norm_bound), dropped)

    @classmethod
    def with_exact_norm_bound(
        cls, n: int, terms: TermsLike, *, relaxed_coefficients: bool = False
    ) -> "SparseHamiltonian":
        """Build with the declared M set to the exact operator norm."""
        h = cls.from_terms(n, terms, norm_bound=1.0, relaxed_coefficients=relaxed_coefficients)
        exact = operator_norm(h)
        if exact == 0.0:
            exact = 1.0  # zero operator: any positive bound is valid
        return cls(n, h.terms, exact, h.dropped_identity)

    def coefficient(self, word: PauliString) -> float:
        for w, mu in self.terms:
            if w == word:
                return mu
        return 0.0

    def as_dict(self) -> dict[PauliString, float]:
        return dict(self.terms)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def validate_norm_bound(self) -> float:
        """Check the declared M against the exact dense operator norm."""
        exact = operator_norm(self)
        if exact > self.norm_bound * (1 + 1e-12):
            raise ValueError(
                f"declared norm bound {self.norm_bound} below exact norm {exact}"
            )
        return exact


def to_dense(h: SparseHamiltonian, *, limit: int = DENSE_QUBIT_LIMIT) -> np.ndarray:
    """Dense 2^n x 2^n Hermitian matrix of the Pauli sum."""
    if h.n > limit:
        raise CapacityError(f"n={h.n} exceeds dense limit {limit}")
    dim = 2**h.n
    if h.n <= _STACK_QUBIT_LIMIT and h.n_terms > 2:
        stack = _pauli_stack(h.n)
        coeffs = np.zeros(4**h.n)
        for word, mu in h.terms:
            coeffs[word.code] = mu
        return (coeffs @ stack.reshape(4**h.n, -1)).reshape(dim, dim)
    rows = np.arange(dim)
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for word, mu in h.terms:
        cols, vals = word.action()
        mat[rows, cols] += mu * vals
    return mat


def frobenius_distance(h: SparseHamiltonian, h0: SparseHamiltonian) -> float:
    """Normalized Frobenius distance sqrt(Tr((H-H0)^2)/2^n).

    Equals the Euclidean norm of the coefficient difference because Pauli
    words are orthonormal under the normalized Hilbert-Schmidt product.
    """
    if h.n != h0.n:
        raise DimensionError(f"qubit counts differ: {h.n} vs {h0.n}")
    diff = dict(h.terms)
    for word, mu in h0.terms:
        diff[word] = diff.get(word, 0.0) - mu
    return math.sqrt(sum(d * d for d in diff.values()))


def operator_norm(h: SparseHamiltonian, *, limit: int = DENSE_QUBIT_LIMIT) -> float:
    """Largest |eigenvalue| of the dense form."""
    if not h.terms:
        return 0.0
    evals = np.linalg.eigvalsh(to_dense(h, limit=limit))
    return float(np.max(np.abs(evals)))


def pauli_coefficients(matrix: np.ndarray, *, atol: float = 1e-10) -> dict[PauliString, float]:
    """Project a Hermitian matrix onto the non-identity Pauli basis.

    Returns {word: Tr(P*A)/2^n} for every word with a coefficient above
    `atol`.  The identity component is discarded (tracelessness).
    """
    dim = matrix.shape[0]
    n = dim.bit_length() - 1
    if matrix.shape != (dim, dim) or 2**n != dim:
        raise DimensionError(f"matrix shape {matrix.shape} is not 2^n x 2^n")
    words = all_pauli_strings(n)
    if n <= _STACK_QUBIT_LIMIT:
        coeffs = _pauli_stack(n).reshape(4**n, -1) @ np.asarray(matrix).T.reshape(-1)
        coeffs /= dim
    else:
        rows = np.arange(dim)
        coeffs = np.array(
            [np.sum(vals * matrix[cols, rows]) for cols, vals in map(PauliString.action, words)]
        ) / dim
    out: dict[PauliString, float] = {}
    for word, coeff in zip(words[1:], coeffs[1:]):
        if abs(coeff.imag) > 1e-9 * max(1.0, abs(coeff.real)):
            raise ValueError("matrix is not Hermitian: complex Pauli coefficient")
        if abs(coeff.real) > atol:
            out[word] = float(coeff.real)
    return out


def rydberg_hamiltonian(
    n: int, omega: float, delta: float, r_b: float = 1.5, a: float = 1.0
) -> SparseHamiltonian:
    """Rydberg-chain target Hamiltonian on n qubits.

    Drive (omega/2) X_i, detuning -delta N_i and van der Waals coupling
    omega*(r_b/(a*|i-j|))^6 N_i N_j, with N_i = (I - Z_i)/2 expanded into
    Pauli words and the identity component dropped.  The declared norm
    bound is set to the exact operator norm.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if a <= 0:
        raise ValueError("lattice spacing a must be positive")
    x_coeff = {q: omega / 2.0 for q in range(1, n + 1)}
    z_coeff = {q: delta / 2.0 for q in range(1, n + 1)}
    zz_coeff: dict[tuple[int, int], float] = {}
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            v = omega * (r_b / (a * abs(i - j))) ** 6
            zz_coeff[(i, j)] = v / 4.0
            z_coeff[i] -= v / 4.0
            z_coeff[j] -= v / 4.0
    terms: dict[PauliString, float] = {}
    for q, mu in x_coeff.items():
        terms[PauliString.single(n, q, "X")] = mu
    for q, mu in z_coeff.items():
        terms[PauliString.single(n, q, "Z")] = mu
    for (i, j), mu in zz_coeff.items():
        word = PauliString(
            n,
            PauliString.single(n, i, "Z").code | PauliString.single(n, j, "Z").code,
        )
        terms[word] = mu
    return SparseHamiltonian.with_exact_norm_bound(n, terms, relaxed_coefficients=True)


def to_text(h: SparseHamiltonian) -> str:
    """Serialize as a text record: header line with n and M, one term per line."""
    lines = [f"n={h.n} M={h.norm_bound!r}"]
    lines += [f"{word.letters} {mu!r}" for word, mu in h.terms]
    return "\n".join(lines) + "\n"


def from_text(text: str, *, relaxed_coefficients: bool = True) -> SparseHamiltonian:
    """Parse the `to_text` record format."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty Hamiltonian record")
    header = dict(field.split("=", 1) for field in lines[0].split())
    try:
        n = int(header["n"])
        norm_bound = float(header["M"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad header line {lines[0]!r}") from exc
    terms = {}
    for ln in lines[1:]:
        word, coeff = ln.split()
        terms[word] = float(coeff)
    return SparseHamiltonian.from_terms(
        n, terms, norm_bound, relaxed_coefficients=relaxed_coefficients
    )
