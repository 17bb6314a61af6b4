# linopt.py
"""
Linear-optics layer: Reck and Clements beam-splitter meshes, loss, multi-photon
Fock evolution through permanents, rail post-selection, and wave-plate gates.

A mesh element on adjacent modes (m, m+1) is

    T(theta, phi) = [[e^{i phi} cos(theta), -sin(theta)],
                     [e^{i phi} sin(theta),  cos(theta)]]

and a mesh realizes ``U = D @ T_L @ ... @ T_1`` with ``D`` the diagonal of
output phases; ``elements[0]`` acts first on the input.
"""

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger

from photonic_vqe.exceptions import (
    DimensionMismatchError,
    ModeIndexError,
    NoiseStrengthError,
    PhotonCountError,
    PostSelectionError,
)
from photonic_vqe.qstate import StateVector, check_unitary
from photonic_vqe.utils import read_file_with_fallback

MAX_MODES = 8
MAX_PHOTONS = 3
_NULL_TOL = 1e-14


@dataclass(frozen=True)
class MeshElement:
    m: int
    n: int
    theta: float
    phi: float

    def __post_init__(self):
        if self.m < 0 or self.n != self.m + 1:
            raise ModeIndexError(f"mesh elements act on adjacent modes, got ({self.m}, {self.n})")
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("mesh element angles must be finite")


@dataclass(frozen=True, eq=False)
class BeamSplitterMesh:
    mode_count: int
    elements: tuple
    output_phases: np.ndarray
    layout: str = "custom"

    def __post_init__(self):
        phases = np.asarray(self.output_phases, dtype=float).reshape(-1)
        if phases.shape[0] != self.mode_count:
            raise DimensionMismatchError(
                f"{self.mode_count} output phases expected, got {phases.shape[0]}"
            )
        for e in self.elements:
            if e.n >= self.mode_count:
                raise ModeIndexError(f"element ({e.m}, {e.n}) outside {self.mode_count} modes")
        phases.setflags(write=False)
        object.__setattr__(self, "output_phases", phases)
        object.__setattr__(self, "elements", tuple(self.elements))

    def __len__(self):
        return len(self.elements)


@dataclass(frozen=True)
class FockState:
    occupations: tuple

    def __post_init__(self):
        occ = tuple(int(n) for n in self.occupations)
        if any(n < 0 for n in occ):
            raise PhotonCountError(f"negative occupation in {occ}")
        if sum(occ) > MAX_PHOTONS:
            raise PhotonCountError(f"{sum(occ)} photons exceed the {MAX_PHOTONS}-photon limit")
        object.__setattr__(self, "occupations", occ)

    @property
    def photons(self):
        return sum(self.occupations)

    @property
    def mode_count(self):
        return len(self.occupations)

    def photon_modes(self):
        """Mode index per photon, e.g. ``(2, 0, 1)`` -> ``[0, 0, 2]``."""
        return [mode for mode, n in enumerate(self.occupations) for _ in range(n)]

    def __str__(self):
        return "|" + ",".join(str(n) for n in self.occupations) + ">"


@dataclass(frozen=True)
class AmplitudeMap:
    amplitudes: dict = field(default_factory=dict)

    @property
    def total_probability(self):
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def amplitude(self, occupations):
        return self.amplitudes.get(FockState(tuple(occupations)), 0j)

    def probability(self, occupations):
        return abs(self.amplitude(occupations)) ** 2


# Mesh elements


def t_block(theta, phi):
    c, s = math.cos(theta), math.sin(theta)
    e = np.exp(1j * phi)
    return np.array([[e * c, -s], [e * s, c]], dtype=complex)


def bs_embed(e, mode_count):
    """Embed a mesh element into an ``M x M`` identity."""
    if e.n >= mode_count:
        raise ModeIndexError(f"element ({e.m}, {e.n}) outside {mode_count} modes")
    u = np.eye(mode_count, dtype=complex)
    u[e.m : e.n + 1, e.m : e.n + 1] = t_block(e.theta, e.phi)
    return u


def _t_inverse(theta, phi):
    return t_block(theta, phi).conj().T


def _null_right(a, b):
    """Angles of T whose inverse, applied on the right, zeroes ``a`` in ``[a, b]``."""
    if abs(a) < _NULL_TOL:
        return 0.0, 0.0
    theta = math.atan2(abs(a), abs(b))
    phi = float(np.mod(np.angle(a) - np.angle(b), 2 * np.pi))
    return theta, phi


def _null_left(a, b):
    """Angles of T that, applied on the left, zeroes ``b`` in ``[a, b]^T``."""
    if abs(b) < _NULL_TOL:
        return 0.0, 0.0
    theta = math.atan2(abs(b), abs(a))
    phi = float(np.mod(np.angle(-b) - np.angle(a), 2 * np.pi))
    return theta, phi


def _apply_right_null(u, row, col):
    theta, phi = _null_right(u[row, col], u[row, col + 1])
    u[:, col : col + 2] = u[:, col : col + 2] @ _t_inverse(theta, phi)
    return MeshElement(col, col + 1, theta, phi)


def _validated_square(u):
    u = check_unitary(u)
    if u.shape[0] > MAX_MODES:
        raise DimensionMismatchError(f"meshes support up to {MAX_MODES} modes, got {u.shape[0]}")
    return np.array(u, dtype=complex)


def clements_decompose(u):
    """
    Decompose a unitary into the square (Clements) mesh.

    Args:
        u (array_like): ``M x M`` unitary, ``M <= 8``.

    Returns:
        BeamSplitterMesh: ``M(M-1)/2`` elements plus ``M`` output phases.
    """
    work = _validated_square(u)
    size = work.shape[0]
    right_ops = []
    left_ops = []
    for i in range(1, size):
        if i % 2 == 1:
            for j in range(i):
                right_ops.append(_apply_right_null(work, size - 1 - j, i - 1 - j))
        else:
            for j in range(1, i + 1):
                row, col = size + j - i - 1, j - 1
                theta, phi = _null_left(work[row - 1, col], work[row, col])
                work[row - 1 : row + 1, :] = t_block(theta, phi) @ work[row - 1 : row + 1, :]
                left_ops.append(MeshElement(row - 1, row, theta, phi))

    phases = np.angle(np.diag(work)).astype(float)
    # T^-1(theta, phi) diag(a, b) == diag(b - phi, b) T(-theta, a - b)
    moved = []
    for op in reversed(left_ops):
        alpha, beta = phases[op.m], phases[op.n]
        moved.append(MeshElement(op.m, op.n, -op.theta + 0.0, float(np.mod(alpha - beta, 2 * np.pi))))
        phases[op.m] = beta - op.phi
    mesh = BeamSplitterMesh(
        size, tuple(right_ops + moved), np.mod(phases, 2 * np.pi), layout="clements"
    )
    logger.debug(f"Clements decomposition of {size} modes: {len(mesh)} elements")
    return mesh


def reck_decompose(u):
    """Decompose a unitary into the triangular (Reck) mesh."""
    work = _validated_square(u)
    size = work.shape[0]
    ops = []
    for row in range(size - 1, 0, -1):
        for col in range(row):
            ops.append(_apply_right_null(work, row, col))
    phases = np.mod(np.angle(np.diag(work)), 2 * np.pi)
    mesh = BeamSplitterMesh(size, tuple(ops), phases, layout="reck")
    logger.debug(f"Reck decomposition of {size} modes: {len(mesh)} elements")
    return mesh


def mesh_reconstruct(mesh):
    u = np.eye(mesh.mode_count, dtype=complex)
    for e in mesh.elements:
        u = bs_embed(e, mesh.mode_count) @ u
    return np.diag(np.exp(1j * mesh.output_phases)) @ u


def mesh_with_loss(mesh, transmission):
    """
    Reconstruct a mesh whose every element transmits amplitude ``sqrt(t)``.

    Returns:
        numpy.ndarray: The subunitary transfer matrix.
    """
    if not 0 < transmission <= 1:
        raise NoiseStrengthError(f"transmission must be in (0, 1], got {transmission}")
    amp = math.sqrt(transmission)
    a = np.eye(mesh.mode_count, dtype=complex)
    for e in mesh.elements:
        lossy = np.eye(mesh.mode_count, dtype=complex)
        lossy[e.m : e.n + 1, e.m : e.n + 1] = amp * t_block(e.theta, e.phi)
        a = lossy @ a
    return np.diag(np.exp(1j * mesh.output_phases)) @ a


def loss_fidelity(u_ideal, a):
    """Normalized overlap ``|Tr(U† A)|^2 / (M Tr(A† A))`` in [0, 1]."""
    u_ideal = np.asarray(u_ideal, dtype=complex)
    a = np.asarray(a, dtype=complex)
    size = u_ideal.shape[0]
    norm = np.trace(a.conj().T @ a).real
    if norm == 0:
        return 0.0
    return float(abs(np.trace(u_ideal.conj().T @ a)) ** 2 / (size * norm))


def haar_unitary(size, rng):
    """Haar-random unitary: QR of a complex Gaussian matrix with phase fixing."""
    z = (rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def clements_layout(size):
    """Adjacent-mode pairs of a rectangular mesh, layer by layer."""
    return [(m, m + 1) for layer in range(size) for m in range(layer % 2, size - 1, 2)]


def reck_layout(size):
    return [(c, c + 1) for row in range(size - 1, 0, -1) for c in range(row)]


# Fock evolution


def permanent(a):
    """Permanent by Ryser's formula."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0j
    total = 0j
    for size in range(1, n + 1):
        for cols in itertools.combinations(range(n), size):
            total += (-1) ** size * np.prod(a[:, cols].sum(axis=1))
    return (-1) ** n * total


def fock_basis(mode_count, photons):
    """All occupation tuples with ``photons`` photons, in a fixed order."""
    states = []
    for modes in itertools.combinations_with_replacement(range(mode_count), photons):
        occ = [0] * mode_count
        for m in modes:
            occ[m] += 1
        states.append(FockState(tuple(occ)))
    return states


def _factorial_norm(occupations):
    return math.sqrt(math.prod(math.factorial(n) for n in occupations))


def _check_transfer(u, state):
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatchError(f"transfer matrix must be square, got {u.shape}")
    if u.shape[0] > MAX_MODES:
        raise DimensionMismatchError(f"Fock evolution supports up to {MAX_MODES} modes")
    if state.mode_count != u.shape[0]:
        raise DimensionMismatchError(
            f"input has {state.mode_count} modes, transfer matrix has {u.shape[0]}"
        )
    return u


def fock_evolve(u, state):
    """
    Evolve a Fock state through a (possibly lossy) linear-optical transform.

    The amplitude of output S is ``Perm(U_{S,T}) / sqrt(prod s! prod t!)``
    with rows of ``U`` repeated by output occupation and columns by input
    occupation.

    Args:
        u (array_like): ``M x M`` unitary or subunitary transfer matrix.
        state (FockState): Input occupations, at most three photons.

    Returns:
        AmplitudeMap: Amplitudes over every output with the same photon number.
    """
    if not isinstance(state, FockState):
        state = FockState(tuple(state))
    u = _check_transfer(u, state)
    cols = state.photon_modes()
    in_norm = _factorial_norm(state.occupations)
    amplitudes = {}
    for out in fock_basis(state.mode_count, state.photons):
        rows = out.photon_modes()
        sub = u[np.ix_(rows, cols)]
        amplitudes[out] = complex(permanent(sub) / (in_norm * _factorial_norm(out.occupations)))
    return AmplitudeMap(amplitudes)


def fock_space_unitary(u, photons):
    """
    Dense transform on the ``photons``-photon Fock space by expanding each
    creation operator ``a_j† -> sum_i U_ij a_i†`` term by term.
    """
    u = np.asarray(u, dtype=complex)
    size = u.shape[0]
    basis = fock_basis(size, photons)
    index = {s: k for k, s in enumerate(basis)}
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    for col, state in enumerate(basis):
        modes_in = state.photon_modes()
        norm_in = _factorial_norm(state.occupations)
        for modes_out in itertools.product(range(size), repeat=photons):
            coeff = np.prod([u[o, i] for o, i in zip(modes_out, modes_in)]) if photons else 1.0
            occ = [0] * size
            for m in modes_out:
                occ[m] += 1
            target = FockState(tuple(occ))
            out[index[target], col] += coeff * _factorial_norm(target.occupations) / norm_in
    return basis, out


def rail_postselect(amps, rail_groups):
    """
    Keep outputs with exactly one photon per rail group.

    A group of ``r`` modes carries a qudit of dimension ``r``; the photon
    in the group's first mode is level 0. Levels combine big-endian in group
    order. Pairs give dual-rail qubits.

    Returns:
        tuple[StateVector, float]: Renormalized state and kept probability.
    """
    groups = [tuple(g) for g in rail_groups]
    flat = [m for g in groups for m in g]
    if len(set(flat)) != len(flat):
        raise ModeIndexError(f"rail groups overlap: {groups}")
    dims = [len(g) for g in groups]
    vec = np.zeros(math.prod(dims), dtype=complex)
    for state, amp in amps.amplitudes.items():
        if state.photons != len(groups):
            raise PhotonCountError(
                f"{state.photons} photons cannot fill {len(groups)} rail groups one each"
            )
        occ = state.occupations
        if any(occ[m] for m in range(len(occ)) if m not in flat):
            continue
        levels = []
        for g in groups:
            hits = [pos for pos, m in enumerate(g) if occ[m] == 1]
            if len(hits) != 1 or sum(occ[m] for m in g) != 1:
                break
            levels.append(hits[0])
        else:
            vec[np.ravel_multi_index(levels, dims)] += amp
    success = float(np.vdot(vec, vec).real)
    if success <= 1e-15:
        raise PostSelectionError("post-selection annihilated the state")
    if success < 1e-3:
        logger.warning(f"Post-selection success probability is only {success:.3e}")
    return StateVector(vec / math.sqrt(success)), success


def dual_rail_postselect(amps, rail_pairs):
    pairs = [tuple(p) for p in rail_pairs]
    if any(len(p) != 2 for p in pairs):
        raise ModeIndexError(f"dual-rail encoding needs mode pairs, got {pairs}")
    return rail_postselect(amps, pairs)


# Polarization gates


def waveplate(kind, angle):
    """
    Jones matrix of a half- or quarter-wave plate with its fast axis at ``angle`` (radians).

    HWP(t) = [[cos 2t, sin 2t], [sin 2t, -cos 2t]]
    QWP(t) = [[cos^2 t + i sin^2 t, (1 - i) sin t cos t],
              [(1 - i) sin t cos t, sin^2 t + i cos^2 t]]
    """
    kind = kind.upper()
    c, s = math.cos(angle), math.sin(angle)
    if kind == "HWP":
        c2, s2 = math.cos(2 * angle), math.sin(2 * angle)
        return np.array([[c2, s2], [s2, -c2]], dtype=complex)
    if kind == "QWP":
        off = (1 - 1j) * s * c
        return np.array([[c * c + 1j * s * s, off], [off, s * s + 1j * c * c]], dtype=complex)
    raise ValueError(f"unknown wave plate {kind!r}; use HWP or QWP")


def pbd_cnot():
    """CNOT with polarization (qubit 0) as control and path (qubit 1) as target."""
    return np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    )


def visibility_to_noise(visibility):
    if not 0 <= visibility <= 1:
        raise NoiseStrengthError(f"visibility must be in [0, 1], got {visibility}")
    return 1.0 - visibility


def hom_visibility(u):
    """Two-photon interference visibility ``1 - P_coinc / P_coinc,distinguishable``."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise DimensionMismatchError("HOM visibility is defined for two-mode transforms")
    quantum = abs(permanent(u)) ** 2
    classical = abs(u[0, 0] * u[1, 1]) ** 2 + abs(u[0, 1] * u[1, 0]) ** 2
    if classical == 0:
        return 0.0
    return float(1.0 - quantum / classical)


# Files


def unitary_to_text(u):
    u = np.asarray(u, dtype=complex)
    lines = [str(u.shape[0])]
    for row in u:
        lines.append(" ".join(f"{z.real!r},{z.imag!r}" for z in row))
    return "\n".join(lines) + "\n"


def unitary_from_text(text):
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty unitary file")
    size = int(lines[0])
    if len(lines) != size + 1:
        raise ValueError(f"expected {size} matrix rows, got {len(lines) - 1}")
    rows = []
    for k, line in enumerate(lines[1:], start=1):
        pairs = line.split()
        if len(pairs) != size:
            raise ValueError(f"row {k}: expected {size} entries, got {len(pairs)}")
        rows.append([complex(float(p.split(",")[0]), float(p.split(",")[1])) for p in pairs])
    return np.array(rows, dtype=complex)


def load_unitary(path):
    return unitary_from_text(read_file_with_fallback(path))


def dump_unitary(u, path):
    Path(path).write_text(unitary_to_text(u), encoding="utf-8")


def mesh_to_text(mesh):
    lines = [f"{e.m} {e.n} {e.theta!r} {e.phi!r}" for e in mesh.elements]
    lines.append("D: " + " ".join(repr(float(p)) for p in mesh.output_phases))
    return "\n".join(lines) + "\n"


def dump_mesh(mesh, path):
    Path(path).write_text(mesh_to_text(mesh), encoding="utf-8")
