# hamiltonians.py
"""
Problem Hamiltonians as OperatorSums, Jordan-Wigner qubitization, the UCCSD
ansatz state and molecular coefficient tables.
"""

import itertools
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from loguru import logger

from photonic_vqe.exceptions import (
    DenseLimitError,
    MalformedRowError,
    ModeIndexError,
    NonHermitianError,
    NoRowsError,
    NonMonotoneBondLengthError,
    UnsupportedModelError,
    WeightArityError,
)
from photonic_vqe.qstate import ATOL, OperatorSum, PauliString, StateVector
from photonic_vqe.utils import read_file_with_fallback

MAX_JW_MODES = 8
MAX_UCCSD_ORBITALS = 4
CHEMICAL_ACCURACY = 1.6e-3

H2_TERMS = ("II", "IZ", "ZI", "ZZ", "XX")
HEHPLUS_TERMS = ("II", "IZ", "ZI", "ZZ", "XX", "IX", "ZX", "XI", "XZ")
LIH_TERMS = (
    "IIII", "ZIII", "IZII", "IIZI", "IIIZ",
    "ZZII", "ZIZI", "ZIIZ", "IZZI", "IZIZ", "IIZZ",
    "XXYY", "YYXX", "XYYX", "YXXY",
    "XZXI", "IXZX", "YZYI", "IYZY",
)

MODEL_TEMPLATES = {"H2": H2_TERMS, "HeH+": HEHPLUS_TERMS, "LiH": LIH_TERMS}
BUNDLED_TABLES = {
    "H2": "h2_sto3g.txt",
    "HeH+": "hehplus_sto3g.txt",
    "LiH": "lih_sto3g.txt",
}
HEADER_KEYS = ("model", "basis", "generator", "oracle")


# Fermions


@dataclass(frozen=True, eq=False)
class FermionOperator:
    """
    Sum of normal-ordered products of creation/annihilation operators.

    ``terms`` holds ``(coefficient, factors)`` pairs where ``factors`` is a
    tuple of ``(mode, dagger)``; ``((0, True), (1, False))`` is a_0† a_1.
    """

    terms: tuple
    mode_count: int

    def __post_init__(self):
        cleaned = []
        for coeff, factors in self.terms:
            factors = tuple((int(m), bool(d)) for m, d in factors)
            for mode, _ in factors:
                if not 0 <= mode < self.mode_count:
                    raise ModeIndexError(
                        f"mode {mode} out of range for {self.mode_count} modes"
                    )
            cleaned.append((complex(coeff), factors))
        object.__setattr__(self, "terms", tuple(cleaned))

    @classmethod
    def term(cls, factors, mode_count, coeff=1.0):
        return cls(((coeff, tuple(factors)),), mode_count)

    @classmethod
    def creation(cls, mode, mode_count):
        return cls.term([(mode, True)], mode_count)

    @classmethod
    def annihilation(cls, mode, mode_count):
        return cls.term([(mode, False)], mode_count)

    def __add__(self, other):
        if other.mode_count != self.mode_count:
            raise ModeIndexError("fermion operators act on different mode counts")
        return FermionOperator(self.terms + other.terms, self.mode_count)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, FermionOperator):
            return FermionOperator(
                tuple(
                    (ca * cb, fa + fb)
                    for ca, fa in self.terms
                    for cb, fb in other.terms
                ),
                self.mode_count,
            )
        return FermionOperator(
            tuple((c * other, f) for c, f in self.terms), self.mode_count
        )

    __rmul__ = __mul__

    def adjoint(self):
        return FermionOperator(
            tuple(
                (c.conjugate(), tuple((m, not d) for m, d in reversed(f)))
                for c, f in self.terms
            ),
            self.mode_count,
        )


def _ladder_jw(mode, dagger, n):
    z_string = "Z" * mode
    pad = "I" * (n - mode - 1)
    sign = -0.5j if dagger else 0.5j
    return OperatorSum.from_terms(
        [(0.5, z_string + "X" + pad), (sign, z_string + "Y" + pad)], n
    )


def jordan_wigner(f):
    """
    Map a fermion operator to qubits.

    a_j† -> (X_j - iY_j)/2 Z_0...Z_{j-1} and a_j -> (X_j + iY_j)/2 Z_0...Z_{j-1};
    mode j is qubit j.

    Args:
        f (FermionOperator): Operator on at most ``MAX_JW_MODES`` modes.

    Returns:
        OperatorSum: The merged qubit operator.
    """
    n = f.mode_count
    if n > MAX_JW_MODES:
        raise DenseLimitError(f"jordan_wigner supports up to {MAX_JW_MODES} modes, got {n}")
    total = OperatorSum.zero(n)
    for coeff, factors in f.terms:
        product = OperatorSum.identity(n, coeff)
        for mode, dagger in factors:
            product = product * _ladder_jw(mode, dagger, n)
        total = total + product
    return total


# Model builders


def build_from_template(template, weights, name="model"):
    weights = [float(w) for w in weights]
    if len(weights) != len(template):
        raise ValueError(
            f"{name} needs exactly {len(template)} weights, got {len(weights)}"
        )
    return OperatorSum.from_terms(zip(weights, template), len(template[0]))


def build_h2(w):
    """``w0 II + w1 IZ + w2 ZI + w3 ZZ + w4 XX``."""
    return build_from_template(H2_TERMS, w, "H2")


def build_hehplus(w):
    """The H2 template plus ``w5 IX + w6 ZX + w7 XI + w8 XZ``."""
    return build_from_template(HEHPLUS_TERMS, w, "HeH+")


def build_lih(w):
    return build_from_template(LIH_TERMS, w, "LiH")


def build_heisenberg(w1, w2, w3):
    return OperatorSum.from_terms([(w1, "XX"), (w2, "YY"), (w3, "ZZ")], 2)


def build_schwinger(m):
    """Two-qubit Schwinger model ``II + XX + YY - ZI/2 + ZZ/2 + (m/2)(IZ - ZI)``."""
    m = float(m)
    return OperatorSum.from_terms(
        [
            (1.0, "II"),
            (1.0, "XX"),
            (1.0, "YY"),
            (-0.5, "ZI"),
            (0.5, "ZZ"),
            (m / 2, "IZ"),
            (-m / 2, "ZI"),
        ],
        2,
    )


def schwinger_exact_levels(m):
    root = math.sqrt(m * m + m + 17.0 / 4.0)
    return sorted([0.5 - root, 1.0, 2.0, 0.5 + root])


def build_exciton(alpha=1.46, beta=0.037):
    """Two-level exciton-transfer model ``alpha I + beta X`` (energies in eV)."""
    return OperatorSum.from_terms([(alpha, "I"), (beta, "X")], 1)


FACTORING_FORMS = ("eq15", "projector")
FACTORING_ALIASES = {"linear": "eq15"}


def build_factoring(n=35, form="eq15"):
    """
    Factoring Hamiltonian ``(n - x y)^2`` for two odd factors ``x, y in {5, 7}``.

    Each factor is one qubit, ``x = 6 - Z`` (``form="eq15"``, alias ``"linear"``) or equivalently
    ``x = 4 + 2 Pi + 1`` with ``Pi = (I - Z)/2`` (``form="projector"``).
    """
    if n != 35:
        raise UnsupportedModelError(f"built-in factoring forms encode n=35 only, got {n}")
    form = FACTORING_ALIASES.get(form, form)
    if form == "eq15":
        factor = OperatorSum.from_terms([(6.0, "I"), (-1.0, "Z")], 1)
    elif form == "projector":
        projector = OperatorSum.from_terms([(0.5, "I"), (-0.5, "Z")], 1)
        factor = OperatorSum.identity(1, 4.0) + projector * 2.0 + OperatorSum.identity(1, 1.0)
    else:
        raise UnsupportedModelError(f"unknown factoring form {form!r}; use one of {FACTORING_FORMS}")
    residual = OperatorSum.identity(2, float(n)) - factor.tensor(factor)
    return residual * residual


def decode_factors(bits):
    """``"01"`` -> ``(5, 7)``: bit 0 encodes 5, bit 1 encodes 7."""
    return tuple(5 + 2 * int(b) for b in bits)


# UCCSD


@dataclass(frozen=True)
class UccsdAmplitudes:
    """Cluster amplitudes ``t_ia`` and ``t_ijab`` keyed by orbital index tuples."""

    singles: dict
    doubles: dict
    orbital_count: int

    def __post_init__(self):
        k = self.orbital_count
        for key in self.singles:
            i, a = key
            if not (0 <= i < k and 0 <= a < k):
                raise ModeIndexError(f"single excitation {key} out of range for {k} orbitals")
            if i == a:
                raise ValueError(f"single excitation {key} needs i != a")
        for key in self.doubles:
            i, j, a, b = key
            if not all(0 <= x < k for x in key):
                raise ModeIndexError(f"double excitation {key} out of range for {k} orbitals")
            if i == j or a == b or {i, j} == {a, b}:
                raise ValueError(f"double excitation {key} needs distinct pairs")

    @classmethod
    def from_vector(cls, theta, excitations, orbital_count):
        theta = list(theta)
        if len(theta) != len(excitations):
            raise ValueError(f"{len(excitations)} amplitudes expected, got {len(theta)}")
        singles = {e: float(t) for e, t in zip(excitations, theta) if len(e) == 2}
        doubles = {e: float(t) for e, t in zip(excitations, theta) if len(e) == 4}
        return cls(singles, doubles, orbital_count)


def hartree_fock_index(n_electrons, orbital_count):
    """Basis index with the first ``n_electrons`` orbitals occupied."""
    bits = "1" * n_electrons + "0" * (orbital_count - n_electrons)
    return int(bits, 2)


def uccsd_excitations(reference, orbital_count):
    """Singles ``(i, a)`` then doubles ``(i, j, a, b)`` out of a reference occupation."""
    bits = format(reference, f"0{orbital_count}b")
    occupied = [q for q, b in enumerate(bits) if b == "1"]
    virtual = [q for q, b in enumerate(bits) if b == "0"]
    singles = [(i, a) for i in occupied for a in virtual]
    doubles = [
        (i, j, a, b)
        for i, j in itertools.combinations(occupied, 2)
        for a, b in itertools.combinations(virtual, 2)
    ]
    return singles + doubles


def uccsd_generator(amps):
    """``T - T†`` mapped to qubits; anti-Hermitian by construction."""
    k = amps.orbital_count
    t = FermionOperator((), k)
    for (i, a), amp in amps.singles.items():
        t = t + FermionOperator.term([(i, True), (a, False)], k, amp)
    for (i, j, a, b), amp in amps.doubles.items():
        t = t + FermionOperator.term([(i, True), (j, True), (a, False), (b, False)], k, amp)
    return jordan_wigner(t - t.adjoint())


def uccsd_state(reference, amps, orbital_count=None):
    """
    Apply ``exp(T - T†)`` to a reference basis state.

    Args:
        reference (int): Big-endian basis index of the Hartree-Fock reference.
        amps (UccsdAmplitudes): Cluster amplitudes.
        orbital_count (int, optional): Defaults to ``amps.orbital_count``.

    Returns:
        StateVector: The normalized ansatz state.
    """
    k = orbital_count or amps.orbital_count
    if k != amps.orbital_count:
        raise ValueError("orbital count does not match the amplitudes")
    if k > MAX_UCCSD_ORBITALS:
        raise DenseLimitError(f"uccsd_state supports up to {MAX_UCCSD_ORBITALS} orbitals")
    if not 0 <= reference < 2**k:
        raise ModeIndexError(f"reference index {reference} out of range for {k} orbitals")
    generator = uccsd_generator(amps).to_matrix()
    if np.max(np.abs(generator + generator.conj().T), initial=0.0) > ATOL:
        raise NonHermitianError("UCCSD generator is not anti-Hermitian")
    # exp(A) = exp(-i H) with H = iA Hermitian
    values, vectors = np.linalg.eigh(1j * generator)
    unitary = vectors @ np.diag(np.exp(-1j * values)) @ vectors.conj().T
    return StateVector.normalized(unitary[:, reference])


# Coefficient tables


@dataclass(frozen=True)
class CoefficientRow:
    bond_length: float
    weights: tuple
    reference_energy: float | None = None


@dataclass(frozen=True)
class MolecularCoefficients:
    model: str
    rows: tuple
    oracle: str = ""
    basis: str = ""
    generator: str = ""

    def __len__(self):
        return len(self.rows)

    @property
    def bond_lengths(self):
        return [row.bond_length for row in self.rows]

    def hamiltonian(self, index):
        return build_from_template(MODEL_TEMPLATES[self.model], self.rows[index].weights, self.model)

    def nearest(self, bond_length):
        """Index of the row closest to ``bond_length``."""
        return int(np.argmin([abs(r - bond_length) for r in self.bond_lengths]))


def _normalize_model(tag):
    for model in MODEL_TEMPLATES:
        if tag.strip().lower() == model.lower():
            return model
    raise UnsupportedModelError(f"unknown model {tag!r}; expected one of {list(MODEL_TEMPLATES)}")


def parse_coefficients(text, model=None):
    header = {}
    rows = []
    arity = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            key, sep, value = stripped.lstrip("#").partition(":")
            if sep and key.strip() in HEADER_KEYS and key.strip() not in header:
                header[key.strip()] = value.strip()
            continue
        line = stripped.split("#", 1)[0].strip()
        if not line:
            continue
        if model is None:
            if "model" not in header:
                raise MalformedRowError("data row before '# model:' header", line_number)
            model = _normalize_model(header["model"])
            arity = len(MODEL_TEMPLATES[model])
        elif arity is None:
            model = _normalize_model(model)
            arity = len(MODEL_TEMPLATES[model])
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError as e:
            raise MalformedRowError(f"non-numeric value in {raw!r}", line_number) from e
        if len(values) not in (arity + 1, arity + 2):
            raise WeightArityError(
                f"{model} rows need {arity} weights (+ optional reference energy), "
                f"got {len(values) - 1} values after the bond length",
                line_number,
            )
        if not all(math.isfinite(v) for v in values):
            raise MalformedRowError(f"non-finite value in {raw!r}", line_number)
        bond_length = values[0]
        if rows and bond_length <= rows[-1].bond_length:
            raise NonMonotoneBondLengthError(
                f"bond length {bond_length} does not increase after {rows[-1].bond_length}",
                line_number,
            )
        reference = values[arity + 1] if len(values) == arity + 2 else None
        rows.append(CoefficientRow(bond_length, tuple(values[1 : arity + 1]), reference))
    if not rows:
        raise NoRowsError("no rows")
    return MolecularCoefficients(
        model,
        tuple(rows),
        header.get("oracle", ""),
        header.get("basis", ""),
        header.get("generator", ""),
    )


def load_coefficients(path, model=None):
    """
    Load and validate a molecular coefficient table.

    Args:
        path (str or Path): Table file with a ``# model:`` header.
        model (str, optional): Overrides the header's model tag.

    Returns:
        MolecularCoefficients: The validated table.
    """
    table = parse_coefficients(read_file_with_fallback(path), model)
    logger.info(f"Loaded {len(table)} {table.model} rows from {Path(path).name}")
    return table


def bundled_coefficients(model):
    model = _normalize_model(model)
    resource = resources.files("photonic_vqe").joinpath("data").joinpath(BUNDLED_TABLES[model])
    with resources.as_file(resource) as path:
        return load_coefficients(path)
