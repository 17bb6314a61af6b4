# qstate.py
"""
Dense linear-algebra core: Pauli strings, operator sums, statevectors and
density matrices, exact expectations and exact diagonalization.

Qubit 0 is the leftmost tensor factor and basis indices are big-endian,
so ``|q0 q1 ... q_{k-1}>`` has index ``sum(q_i * 2**(k-1-i))``.
"""

from dataclasses import dataclass
from functools import cached_property, reduce
from pathlib import Path

import numpy as np
from loguru import logger

from photonic_vqe.exceptions import (
    DenseLimitError,
    DimensionMismatchError,
    NonHermitianError,
    NonUnitaryError,
    NormalizationError,
)

ATOL = 1e-10
DENSE_QUBIT_LIMIT = 8
PAULI_LETTERS = "IXYZ"

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_PAULI_MULT = {
    ("I", "I"): ("I", 1), ("I", "X"): ("X", 1), ("I", "Y"): ("Y", 1), ("I", "Z"): ("Z", 1),
    ("X", "I"): ("X", 1), ("X", "X"): ("I", 1), ("X", "Y"): ("Z", 1j), ("X", "Z"): ("Y", -1j),
    ("Y", "I"): ("Y", 1), ("Y", "X"): ("Z", -1j), ("Y", "Y"): ("I", 1), ("Y", "Z"): ("X", 1j),
    ("Z", "I"): ("Z", 1), ("Z", "X"): ("Y", 1j), ("Z", "Y"): ("X", -1j), ("Z", "Z"): ("I", 1),
}


def _check_dense_limit(num_qubits):
    if num_qubits > DENSE_QUBIT_LIMIT:
        raise DenseLimitError(
            f"dense limit exceeded: {num_qubits} qubits > {DENSE_QUBIT_LIMIT}"
        )


def _frozen_array(values, dtype=complex):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, e.g. ``PauliString("XZ")``."""

    letters: str

    def __post_init__(self):
        letters = "".join(self.letters).upper()
        if not letters:
            raise ValueError("a Pauli string needs at least one letter")
        bad = set(letters) - set(PAULI_LETTERS)
        if bad:
            raise ValueError(f"invalid Pauli letters {sorted(bad)} in {letters!r}")
        object.__setattr__(self, "letters", letters)

    def __str__(self):
        return self.letters

    def __len__(self):
        return len(self.letters)

    @property
    def num_qubits(self):
        return len(self.letters)

    @property
    def is_identity(self):
        return set(self.letters) == {"I"}

    @property
    def is_z_type(self):
        return set(self.letters) <= {"I", "Z"}

    @property
    def support(self):
        return tuple(i for i, c in enumerate(self.letters) if c != "I")

    def multiply(self, other):
        """Return ``(phase, string)`` with ``self @ other == phase * string``."""
        if len(other) != len(self):
            raise DimensionMismatchError(
                f"cannot multiply {self.letters} by {other.letters}"
            )
        phase = 1 + 0j
        out = []
        for a, b in zip(self.letters, other.letters):
            letter, p = _PAULI_MULT[(a, b)]
            out.append(letter)
            phase *= p
        return phase, PauliString("".join(out))

    def commutes_with(self, other):
        """General (matrix) commutation: an even number of clashing positions."""
        clashes = sum(
            1
            for a, b in zip(self.letters, other.letters)
            if a != "I" and b != "I" and a != b
        )
        return clashes % 2 == 0

    def qubitwise_commutes_with(self, other):
        return all(
            a == "I" or b == "I" or a == b
            for a, b in zip(self.letters, other.letters)
        )

    def symplectic(self):
        """Binary ``(x, z)`` vectors; Y has both bits set."""
        x = np.array([c in "XY" for c in self.letters], dtype=np.uint8)
        z = np.array([c in "ZY" for c in self.letters], dtype=np.uint8)
        return x, z

    @classmethod
    def from_symplectic(cls, x, z):
        table = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
        return cls("".join(table[(int(a), int(b))] for a, b in zip(x, z)))


def pauli_to_matrix(p):
    """
    Dense matrix of a Pauli string.

    Args:
        p (PauliString | str): The string; qubit 0 is the leftmost factor.

    Returns:
        numpy.ndarray: The ``2**k x 2**k`` Kronecker product.

    Raises:
        DenseLimitError: If ``k`` exceeds ``DENSE_QUBIT_LIMIT``.
    """
    if not isinstance(p, PauliString):
        p = PauliString(p)
    _check_dense_limit(p.num_qubits)
    return reduce(np.kron, (_PAULI_MATRICES[c] for c in p.letters))


@dataclass(frozen=True, eq=False)
class OperatorSum:
    """
    Weighted sum of Pauli strings in canonical (merged) form.

    Build instances with :meth:`from_terms`, which merges duplicate strings
    and drops exact zeros; the constructor only validates.
    """

    terms: tuple
    num_qubits: int

    def __post_init__(self):
        seen = set()
        for coeff, string in self.terms:
            if string.num_qubits != self.num_qubits:
                raise DimensionMismatchError(
                    f"term {string} has {string.num_qubits} qubits, expected {self.num_qubits}"
                )
            if string.letters in seen:
                raise ValueError(f"duplicate term {string}; use OperatorSum.from_terms")
            seen.add(string.letters)

    @classmethod
    def from_terms(cls, terms, num_qubits=None, drop_tol=0.0):
        """
        Merge ``(coefficient, string)`` pairs into canonical form.

        Terms keep the order of first appearance. Coefficients with
        ``abs(c) <= drop_tol`` are dropped after merging.
        """
        merged = {}
        for coeff, string in terms:
            if not isinstance(string, PauliString):
                string = PauliString(string)
            if num_qubits is None:
                num_qubits = string.num_qubits
            merged[string] = merged.get(string, 0j) + complex(coeff)
        if num_qubits is None:
            raise ValueError("num_qubits is required for an empty operator")
        kept = tuple(
            (c, s) for s, c in merged.items() if abs(c) > drop_tol
        )
        return cls(kept, num_qubits)

    @classmethod
    def identity(cls, num_qubits, coeff=1.0):
        return cls.from_terms([(coeff, "I" * num_qubits)])

    @classmethod
    def zero(cls, num_qubits):
        return cls((), num_qubits)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __repr__(self):
        body = " + ".join(f"({c:.6g})*{s}" for c, s in self.terms) or "0"
        return f"OperatorSum({body})"

    @property
    def strings(self):
        return [s for _, s in self.terms]

    @property
    def dim(self):
        return 2**self.num_qubits

    def coefficient(self, string):
        key = string.letters if isinstance(string, PauliString) else string
        for c, s in self.terms:
            if s.letters == key:
                return c
        return 0j

    @property
    def identity_coefficient(self):
        return self.coefficient("I" * self.num_qubits)

    def non_identity_terms(self):
        return [(c, s) for c, s in self.terms if not s.is_identity]

    def is_hermitian(self, atol=ATOL):
        return all(abs(c.imag) <= atol for c, _ in self.terms)

    @property
    def hermitian(self):
        return self.is_hermitian()

    def real_weights(self):
        """Coefficients as floats; raises if any has an imaginary part."""
        if not self.hermitian:
            raise NonHermitianError(f"{self!r} has complex coefficients")
        return [c.real for c, _ in self.terms]

    def adjoint(self):
        return OperatorSum(tuple((c.conjugate(), s) for c, s in self.terms), self.num_qubits)

    def __add__(self, other):
        if not isinstance(other, OperatorSum):
            other = OperatorSum.identity(self.num_qubits, other)
        if other.num_qubits != self.num_qubits:
            raise DimensionMismatchError("operator sums act on different qubit counts")
        return OperatorSum.from_terms(list(self.terms) + list(other.terms), self.num_qubits)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, OperatorSum):
            if other.num_qubits != self.num_qubits:
                raise DimensionMismatchError("operator sums act on different qubit counts")
            products = []
            for ca, sa in self.terms:
                for cb, sb in other.terms:
                    phase, s = sa.multiply(sb)
                    products.append((ca * cb * phase, s))
            return OperatorSum.from_terms(products, self.num_qubits)
        return OperatorSum.from_terms(
            [(c * complex(other), s) for c, s in self.terms], self.num_qubits
        )

    def __rmul__(self, other):
        return self * other

    def tensor(self, other):
        """Kronecker product; ``self`` occupies the leftmost qubits."""
        return OperatorSum.from_terms(
            [
                (ca * cb, PauliString(sa.letters + sb.letters))
                for ca, sa in self.terms
                for cb, sb in other.terms
            ],
            self.num_qubits + other.num_qubits,
        )

    def __pow__(self, exponent):
        result = OperatorSum.identity(self.num_qubits)
        for _ in range(int(exponent)):
            result = result * self
        return result

    @cached_property
    def matrix(self):
        _check_dense_limit(self.num_qubits)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c, s in self.terms:
            out += c * pauli_to_matrix(s)
        out.setflags(write=False)
        return out

    def to_matrix(self):
        return np.array(self.matrix)

    def to_text(self):
        lines = [f"{c.real!r} {c.imag!r} {s.letters}" for c, s in self.terms]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text, num_qubits=None):
        """Parse ``<re> <im> <letters>`` lines; ``#`` starts a comment."""
        terms = []
        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {line_number}: expected '<re> <im> <letters>', got {raw!r}")
            try:
                coeff = complex(float(parts[0]), float(parts[1]))
            except ValueError as e:
                raise ValueError(f"line {line_number}: bad coefficient in {raw!r}") from e
            terms.append((coeff, PauliString(parts[2])))
        return cls.from_terms(terms, num_qubits)


def load_operator(path):
    """Read an OperatorSum from a text file."""
    from photonic_vqe.utils import read_file_with_fallback

    logger.debug(f"Loading operator from {path}")
    return OperatorSum.from_text(read_file_with_fallback(path))


def dump_operator(op, path):
    Path(path).write_text(op.to_text(), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL:
            raise NormalizationError(f"state norm^2 is {norm:.12g}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen_array(amps))

    @classmethod
    def normalized(cls, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise NormalizationError("cannot normalize the zero vector")
        return cls(amps / norm)

    @classmethod
    def basis(cls, index, dim):
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def from_bits(cls, bits):
        """``StateVector.from_bits("01")`` is ``|01>``."""
        return cls.basis(int(bits, 2), 2 ** len(bits))

    @property
    def dim(self):
        return self.amplitudes.shape[0]

    @property
    def num_qubits(self):
        return int(np.log2(self.dim))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionMismatchError(f"density matrix must be square, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > ATOL:
            raise NonHermitianError("density matrix is not Hermitian")
        trace = np.trace(rho).real
        if abs(trace - 1.0) > ATOL:
            raise NormalizationError(f"density matrix trace is {trace:.12g}, expected 1")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-9:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", _frozen_array(rho))

    @classmethod
    def from_state(cls, state):
        psi = state.amplitudes
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dim):
        return cls(np.eye(dim, dtype=complex) / dim)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def num_qubits(self):
        return int(np.log2(self.dim))

    @property
    def purity(self):
        return float(np.real(np.trace(self.entries @ self.entries)))


def _check_dims(state, op):
    if state.dim != op.dim:
        raise DimensionMismatchError(
            f"state dimension {state.dim} does not match operator dimension {op.dim}"
        )


def expectation_exact(state, op):
    """
    Exact expectation value of an operator sum.

    Args:
        state (StateVector | DensityMatrix): The state.
        op (OperatorSum): The observable.

    Returns:
        complex: ``<psi|op|psi>`` or ``Tr[rho op]``.
    """
    _check_dims(state, op)
    m = op.matrix
    if isinstance(state, DensityMatrix):
        return complex(np.trace(state.entries @ m))
    psi = state.amplitudes
    return complex(np.vdot(psi, m @ psi))


def exact_eigensolve(op):
    """Full spectrum of a Hermitian operator sum, ascending."""
    if not op.hermitian:
        raise NonHermitianError("exact_eigensolve needs real coefficients")
    return np.linalg.eigvalsh(op.matrix)


def ground_state(op):
    """Lowest eigenpair ``(energy, StateVector)``."""
    if not op.hermitian:
        raise NonHermitianError("ground_state needs real coefficients")
    values, vectors = np.linalg.eigh(op.matrix)
    return float(values[0]), StateVector.normalized(vectors[:, 0])


def unitarity_residual(u):
    u = np.asarray(u, dtype=complex)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def check_unitary(u, atol=1e-8):
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {u.shape}")
    residual = unitarity_residual(u)
    if residual > atol:
        raise NonUnitaryError(residual)
    return u


def apply_unitary(state, u, atol=1e-8):
    u = check_unitary(u, atol)
    if u.shape[0] != state.dim:
        raise DimensionMismatchError(
            f"unitary of size {u.shape[0]} cannot act on a state of dimension {state.dim}"
        )
    return StateVector.normalized(u @ state.amplitudes)


def basis_probabilities(state):
    if isinstance(state, DensityMatrix):
        probs = np.real(np.diag(state.entries)).copy()
    else:
        probs = np.abs(state.amplitudes) ** 2
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def fidelity(a, b):
    """``|<a|b>|^2`` for pure states, ``<a|rho|a>`` when one side is mixed."""
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        raise TypeError("fidelity between two mixed states is not supported")
    if isinstance(a, DensityMatrix):
        a, b = b, a
    if isinstance(b, DensityMatrix):
        return float(np.real(np.vdot(a.amplitudes, b.entries @ a.amplitudes)))
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def random_state(dim, rng):
    """Haar-random pure state from a ``numpy.random.Generator``."""
    amps = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector.normalized(amps)


def random_density_matrix(dim, rng, rank=None):
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)
