# measurement.py
"""
Shot-based estimation of Pauli sums.

Terms are partitioned into groups that can be read from one measurement
setting. Qubit-wise commuting (QWC) groups need only single-qubit rotations;
generally commuting (GC) groups get one entangling diagonalizer found by
symplectic elimination. Every group records, for each string ``P``, the
signed Z-type image ``s * Z`` with ``C P C† = s Z``.
"""

import csv
import math
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np
from loguru import logger

from photonic_vqe.exceptions import (
    DimensionMismatchError,
    NonCommutingError,
    NonHermitianError,
    UncoveredTermError,
)
from photonic_vqe.qstate import (
    ATOL,
    DensityMatrix,
    PauliString,
    pauli_to_matrix,
)
from photonic_vqe.utils import emit_curve, read_file_with_fallback

BELL_LABELS = ("Phi+", "Psi+", "Phi-", "Psi-")
SHOT_ALLOCATIONS = ("equal", "weighted")
EXACT_COVER_LIMIT = 16

_I2 = np.eye(2, dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_P0 = np.diag([1.0, 0.0]).astype(complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class Counts:
    """Outcome histogram over basis indices ``0 .. dim-1``."""

    counts: dict
    shots: int
    dim: int

    def __post_init__(self):
        clean = {int(k): int(v) for k, v in self.counts.items() if int(v) != 0}
        if any(v < 0 for v in clean.values()):
            raise ValueError("counts must be non-negative")
        if any(not 0 <= k < self.dim for k in clean):
            raise DimensionMismatchError(f"outcome index outside 0..{self.dim - 1}")
        if sum(clean.values()) != self.shots:
            raise ValueError(f"counts sum to {sum(clean.values())}, expected {self.shots} shots")
        object.__setattr__(self, "counts", clean)

    def __getitem__(self, index):
        return self.counts.get(index, 0)

    def frequencies(self):
        freq = np.zeros(self.dim)
        for k, v in self.counts.items():
            freq[k] = v / self.shots
        return freq

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=int)
        return cls({k: int(v) for k, v in enumerate(values)}, int(values.sum()), len(values))


@dataclass(frozen=True, eq=False)
class MeasurementGroup:
    strings: tuple
    basis_change: np.ndarray
    signed_z_images: tuple
    kind: str = "gc"

    def image(self, string):
        key = string.letters if isinstance(string, PauliString) else string
        for s, img in zip(self.strings, self.signed_z_images):
            if s.letters == key:
                return img
        raise KeyError(key)

    def conjugation_residual(self):
        """Largest ``max|C P C† - s Z|`` over the group."""
        c = self.basis_change
        worst = 0.0
        for s, (sign, z) in zip(self.strings, self.signed_z_images):
            diff = c @ pauli_to_matrix(s) @ c.conj().T - sign * pauli_to_matrix(z)
            worst = max(worst, float(np.max(np.abs(diff))))
        return worst

    def __len__(self):
        return len(self.strings)


def _as_strings(strings):
    return [s if isinstance(s, PauliString) else PauliString(s) for s in strings]


def commutes(strings):
    strings = _as_strings(strings)
    return all(a.commutes_with(b) for i, a in enumerate(strings) for b in strings[i + 1 :])


def is_qubitwise_commuting(strings):
    strings = _as_strings(strings)
    return all(
        a.qubitwise_commutes_with(b) for i, a in enumerate(strings) for b in strings[i + 1 :]
    )


def sample_observable(state, basis_change, shots, rng_seed, readout_matrix=None):
    """
    Sample computational-basis outcomes after a basis change.

    Args:
        state (StateVector | DensityMatrix): State to measure.
        basis_change (numpy.ndarray): Unitary applied before readout.
        shots (int): Number of repetitions, at least 1.
        rng_seed: Seed or ``numpy.random.SeedSequence``.
        readout_matrix (numpy.ndarray, optional): Column-stochastic ``p(j|k)``
            applied to the ideal distribution, modelling readout errors.

    Returns:
        Counts: Multinomial draw, deterministic under the seed.
    """
    if shots < 1:
        raise ValueError(f"shots must be at least 1, got {shots}")
    c = np.asarray(basis_change, dtype=complex)
    if c.shape != (state.dim, state.dim):
        raise DimensionMismatchError(
            f"basis change of shape {c.shape} cannot act on dimension {state.dim}"
        )
    if isinstance(state, DensityMatrix):
        probs = np.real(np.diag(c @ state.entries @ c.conj().T))
    else:
        probs = np.abs(c @ state.amplitudes) ** 2
    if readout_matrix is not None:
        probs = np.asarray(readout_matrix, dtype=float) @ probs
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    rng = np.random.default_rng(rng_seed)
    return Counts.from_array(rng.multinomial(int(shots), probs))


# Diagonalization


def _embed_single(gate, qubit, k):
    factors = [_I2] * k
    factors[qubit] = gate
    return reduce(np.kron, factors)


def _embed_cnot(control, target, k):
    on = [_I2] * k
    off = [_I2] * k
    off[control] = _P0
    on[control] = _P1
    on[target] = _X
    return reduce(np.kron, off) + reduce(np.kron, on)


def _gate_matrix(gate, k):
    name, *qubits = gate
    if name == "h":
        return _embed_single(_H, qubits[0], k)
    if name == "sdg":
        return _embed_single(_SDG, qubits[0], k)
    return _embed_cnot(qubits[0], qubits[1], k)


def _conjugate_bits(gate, x, z):
    """Update symplectic rows ``x``, ``z`` (strings x qubits) in place."""
    name, *qubits = gate
    if name == "h":
        q = qubits[0]
        x[:, q], z[:, q] = z[:, q].copy(), x[:, q].copy()
    elif name == "sdg":
        q = qubits[0]
        z[:, q] ^= x[:, q]
    else:
        c, t = qubits
        x[:, t] ^= x[:, c]
        z[:, c] ^= z[:, t]


def simultaneous_diagonalizer(strings):
    """
    Find one Clifford unitary that maps every string to a signed Z-type string.

    Strings are eliminated one at a time on their binary ``(x, z)`` form:
    support outside earlier pivots is rotated to X (H for Z, S† for Y),
    collected onto a pivot with CNOTs, and turned into Z on the pivot by H.

    Args:
        strings (list[PauliString | str]): Pairwise commuting strings.

    Returns:
        tuple[numpy.ndarray, list[tuple[int, PauliString]]]: The unitary ``C``
        and ``(sign, image)`` per input string with ``C P C† = sign * image``.

    Raises:
        NonCommutingError: If two strings anticommute.
    """
    strings = _as_strings(strings)
    if not strings:
        raise ValueError("no strings to diagonalize")
    k = strings[0].num_qubits
    if any(s.num_qubits != k for s in strings):
        raise DimensionMismatchError("strings act on different qubit counts")
    for i, a in enumerate(strings):
        for b in strings[i + 1 :]:
            if not a.commutes_with(b):
                raise NonCommutingError(f"{a} and {b} do not commute")

    rows = [s.symplectic() for s in strings]
    x = np.array([r[0] for r in rows], dtype=np.uint8)
    z = np.array([r[1] for r in rows], dtype=np.uint8)
    used = set()
    gates = []
    for i in range(len(strings)):
        support = [q for q in range(k) if q not in used and (x[i, q] or z[i, q])]
        if not support:
            continue
        if len(support) == 1 and not x[i, support[0]]:
            used.add(support[0])
            continue
        step = []
        for q in support:
            if x[i, q] and z[i, q]:
                step.append(("sdg", q))
            elif z[i, q]:
                step.append(("h", q))
        pivot = support[0]
        step += [("cx", pivot, q) for q in support[1:]]
        step.append(("h", pivot))
        for gate in step:
            _conjugate_bits(gate, x, z)
        gates += step
        used.add(pivot)

    c = np.eye(2**k, dtype=complex)
    for gate in gates:
        c = _gate_matrix(gate, k) @ c

    images = []
    d = 2**k
    for s, xr, zr in zip(strings, x, z):
        if xr.any():
            raise NonCommutingError(f"elimination left {s} off-diagonal")
        image = PauliString.from_symplectic(xr, zr)
        conj = c @ pauli_to_matrix(s) @ c.conj().T
        zmat = pauli_to_matrix(image)
        sign = 1 if np.real(np.trace(conj @ zmat)) / d > 0 else -1
        if np.max(np.abs(conj - sign * zmat)) > ATOL:
            raise NonCommutingError(f"conjugation check failed for {s}")
        images.append((sign, image))
    logger.debug(f"Diagonalized {len(strings)} strings with {len(gates)} gates")
    return c, images


def _qwc_basis_change(strings):
    k = strings[0].num_qubits
    rotations = {"X": _H, "Y": _H @ _SDG, "Z": _I2, "I": _I2}
    factors = []
    for q in range(k):
        letters = {s.letters[q] for s in strings} - {"I"}
        factors.append(rotations[letters.pop()] if letters else _I2)
    return reduce(np.kron, factors)


def _z_image(string):
    return PauliString("".join("I" if c == "I" else "Z" for c in string.letters))


def _qwc_group(strings):
    c = _qwc_basis_change(strings)
    return MeasurementGroup(tuple(strings), c, tuple((1, _z_image(s)) for s in strings), "qwc")


def _gc_group(strings):
    c, images = simultaneous_diagonalizer(strings)
    return MeasurementGroup(tuple(strings), c, tuple(images), "gc")


def _sorted_strings(op):
    terms = op.non_identity_terms()
    ordered = sorted(terms, key=lambda t: -abs(t[0]))
    return [s for _, s in ordered]


def _greedy(items, compatible):
    bins = []
    for item in items:
        for b in bins:
            if all(compatible(item, other) for other in b):
                b.append(item)
                break
        else:
            bins.append([item])
    return bins


def _minimum_cover(items, compatible, below):
    """
    Smallest partition of ``items`` into mutually compatible bins, if one
    with fewer than ``below`` bins exists; otherwise ``None``.

    Backtracking over items ordered by fewest compatible partners. A new
    bin opens only after every existing bin has been tried.
    """
    n = len(items)
    adj = [[compatible(a, b) for b in items] for a in items]
    order = sorted(range(n), key=lambda i: (sum(adj[i]), i))

    def place(pos, bins, k):
        if pos == n:
            return True
        i = order[pos]
        for b in bins:
            if all(adj[i][j] for j in b):
                b.append(i)
                if place(pos + 1, bins, k):
                    return True
                b.pop()
        if len(bins) < k:
            bins.append([i])
            if place(pos + 1, bins, k):
                return True
            bins.pop()
        return False

    for k in range(1, below):
        bins = []
        if place(0, bins, k):
            bins = sorted((sorted(b) for b in bins), key=lambda b: b[0])
            return [[items[i] for i in b] for b in bins]
    return None


def qwc_groups(op):
    """
    Partition the non-identity terms into qubit-wise commuting groups.

    Terms are placed first-fit in order of descending ``|w|``.
    """
    bins = _greedy(_sorted_strings(op), lambda a, b: a.qubitwise_commutes_with(b))
    groups = [_qwc_group(b) for b in bins]
    logger.debug(f"QWC grouping: {len(op.non_identity_terms())} terms into {len(groups)} groups")
    return groups


def gc_groups(op):
    """
    Partition the non-identity terms into generally commuting groups.

    Two greedy colourings are tried: one over single terms and one that
    merges whole QWC groups. The smaller wins, ties going to the merged
    one, so the result never has more groups than :func:`qwc_groups`.
    Sums with at most ``EXACT_COVER_LIMIT`` terms are then searched for a
    minimum clique cover of the commutation graph, so the group count does
    not depend on the weights.
    """
    strings = _sorted_strings(op)
    plain = _greedy(strings, lambda a, b: a.commutes_with(b))
    seeded = _greedy(
        _greedy(strings, lambda a, b: a.qubitwise_commutes_with(b)),
        lambda a, b: all(p.commutes_with(q) for p in a for q in b),
    )
    seeded = [[s for part in merged for s in part] for merged in seeded]
    bins = plain if len(plain) < len(seeded) else seeded
    if len(strings) <= EXACT_COVER_LIMIT:
        bins = _minimum_cover(strings, lambda a, b: a.commutes_with(b), len(bins)) or bins
    groups = [_gc_group(b) for b in bins]
    logger.debug(f"GC grouping: {len(strings)} terms into {len(groups)} groups")
    return groups


def bell_basis_change():
    """``(H ⊗ I) · CNOT``: Φ+ -> |00>, Ψ+ -> |01>, Φ- -> |10>, Ψ- -> |11>."""
    return _embed_single(_H, 0, 2) @ _embed_cnot(0, 1, 2)


def bell_group(strings=("XX", "YY", "ZZ")):
    """Measurement group read out with the Bell-state analyzer."""
    strings = _as_strings(strings)
    c = bell_basis_change()
    images = []
    for s in strings:
        conj = c @ pauli_to_matrix(s) @ c.conj().T
        diag = np.diag(conj)
        if s.num_qubits != 2 or np.max(np.abs(conj - np.diag(diag))) > ATOL:
            raise NonCommutingError(f"{s} is not diagonal in the Bell basis")
        candidates = [PauliString(p) for p in ("II", "IZ", "ZI", "ZZ")]
        for z in candidates:
            overlap = np.real(np.trace(conj @ pauli_to_matrix(z))) / 4
            if abs(abs(overlap) - 1) <= ATOL:
                images.append((1 if overlap > 0 else -1, z))
                break
    return MeasurementGroup(tuple(strings), c, tuple(images), "bell")


def bell_groups(op):
    """Bell group for the XX, YY, ZZ terms of a two-qubit sum, QWC groups for the rest."""
    if op.num_qubits != 2:
        raise DimensionMismatchError("Bell grouping needs a two-qubit operator")
    strings = _sorted_strings(op)
    bell = [s for s in strings if s.letters in ("XX", "YY", "ZZ")]
    rest = [s for s in strings if s.letters not in ("XX", "YY", "ZZ")]
    groups = [bell_group(bell)] if bell else []
    groups += [
        _qwc_group(b) for b in _greedy(rest, lambda a, b: a.qubitwise_commutes_with(b))
    ]
    return groups


def bell_measurement(state, shots, rng_seed):
    """
    Measure a two-qubit state in the Bell basis.

    Returns:
        tuple[dict, dict]: Counts keyed by Bell label and the estimates of
        ``<XX>``, ``<YY>``, ``<ZZ>``.
    """
    if state.dim != 4:
        raise DimensionMismatchError(f"Bell measurement needs two qubits, got dimension {state.dim}")
    counts = sample_observable(state, bell_basis_change(), shots, rng_seed)
    by_label = {label: counts[i] for i, label in enumerate(BELL_LABELS)}
    n = counts.shots
    phi_p, psi_p, phi_m, psi_m = (by_label[label] for label in BELL_LABELS)
    estimates = {
        "XX": (psi_p + phi_p - psi_m - phi_m) / n,
        "YY": (psi_p + phi_m - psi_m - phi_p) / n,
        "ZZ": (phi_p + phi_m - psi_p - psi_m) / n,
    }
    return by_label, estimates


def _parities(image, k):
    mask = sum(1 << (k - 1 - q) for q in image.support)
    idx = np.arange(2**k)
    bits = np.array([bin(i & mask).count("1") for i in idx])
    return 1.0 - 2.0 * (bits % 2)


def _check_cover(op, groups):
    seen = {}
    for g_index, g in enumerate(groups):
        for s in g.strings:
            if s.letters in seen:
                raise UncoveredTermError(f"{s} appears in groups {seen[s.letters]} and {g_index}")
            seen[s.letters] = g_index
    missing = [str(s) for _, s in op.non_identity_terms() if s.letters not in seen]
    if missing:
        raise UncoveredTermError(f"terms not covered by any group: {missing}")


def allocate_shots(groups, op, total_shots, mode="equal"):
    """
    Split a shot budget across groups.

    ``equal`` gives every group the same share; ``weighted`` shares in
    proportion to the summed ``|w|`` of each group. Every group gets at
    least one shot and the totals add up to ``total_shots``.
    """
    if mode not in SHOT_ALLOCATIONS:
        raise ValueError(f"unknown shot allocation {mode!r}")
    n = len(groups)
    if total_shots < n:
        raise ValueError(f"{total_shots} shots cannot cover {n} groups")
    if mode == "equal":
        weights = np.ones(n)
    else:
        weights = np.array([sum(abs(op.coefficient(s)) for s in g.strings) for g in groups])
        if weights.sum() == 0:
            weights = np.ones(n)
    spare = total_shots - n
    raw = spare * weights / weights.sum()
    shares = np.floor(raw).astype(int)
    order = np.argsort(-(raw - shares), kind="stable")
    shares[order[: spare - shares.sum()]] += 1
    return [int(s) + 1 for s in shares]


def estimate_pauli_sum(state, op, groups, shots_per_group, rng_seed, confusion=None, readout_matrix=None):
    """
    Estimate ``E = sum_a w_a <P_a>`` from sampled counts, group by group.

    Args:
        state (StateVector | DensityMatrix): State to measure.
        op (OperatorSum): Hermitian observable.
        groups (list[MeasurementGroup]): Exact cover of the non-identity terms.
        shots_per_group (int | list[int]): Shots per group.
        rng_seed (int): Master seed; each group draws from its own spawned seed.
        confusion (ConfusionMatrix, optional): Readout mitigation applied to counts.
        readout_matrix (numpy.ndarray, optional): Readout error injected while sampling.

    Returns:
        tuple[float, float]: Energy estimate and its standard error, summing
        per group the sample variance of ``sum_a w_a s_a Z_a`` over its shots.
    """
    if not op.hermitian:
        raise NonHermitianError("estimate_pauli_sum needs real coefficients")
    _check_cover(op, groups)
    if isinstance(shots_per_group, (int, np.integer)):
        shots_per_group = [int(shots_per_group)] * len(groups)
    if len(shots_per_group) != len(groups):
        raise ValueError(f"{len(shots_per_group)} shot counts for {len(groups)} groups")
    if any(s < 1 for s in shots_per_group):
        raise ValueError("every group needs at least one shot")

    if confusion is not None:
        from photonic_vqe.noise_mitigation import mitigate_counts

    k = op.num_qubits
    energy = op.identity_coefficient.real
    variance = 0.0
    seeds = np.random.SeedSequence(rng_seed).spawn(len(groups))
    for g, shots, seed in zip(groups, shots_per_group, seeds):
        weights = {s.letters: op.coefficient(s).real for s in g.strings}
        if not any(weights.values()):
            continue
        counts = sample_observable(state, g.basis_change, shots, seed, readout_matrix)
        if confusion is not None:
            probs = mitigate_counts(counts, confusion).probabilities
        else:
            probs = counts.frequencies()
        # per-outcome value of the whole group observable
        outcome_values = sum(
            weights[s.letters] * sign * _parities(image, k) for s, (sign, image) in zip(g.strings, g.signed_z_images)
        )
        mean = float(probs @ outcome_values)
        energy += mean
        variance += max(0.0, float(probs @ outcome_values**2) - mean * mean) / shots
    return float(energy), math.sqrt(variance)


def group_report(groups):
    lines = []
    for i, g in enumerate(groups):
        lines.append(f"group {i} ({g.kind}, {len(g)} strings)")
        for s, (sign, image) in zip(g.strings, g.signed_z_images):
            lines.append(f"  {s} -> {'+' if sign > 0 else '-'}{image}")
    return "\n".join(lines) + "\n"


def counts_to_csv(counts, path):
    rows = [{"index": k, "count": v} for k, v in sorted(counts.counts.items())]
    return emit_curve(rows, path, columns=["index", "count"])


def counts_from_csv(path, dim):
    reader = csv.DictReader(read_file_with_fallback(path).splitlines())
    values = {int(row["index"]): int(row["count"]) for row in reader}
    return Counts(values, sum(values.values()), dim)


def write_group_report(groups, path):
    Path(path).write_text(group_report(groups), encoding="utf-8")
    return Path(path)
