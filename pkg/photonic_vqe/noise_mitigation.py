# noise_mitigation.py
"""
Noise channels parameterized by a strength ``eps``, readout confusion-matrix
calibration and inversion, and linear zero-noise extrapolation.
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
    ExtrapolationError,
    NoiseStrengthError,
    SingularConfusionError,
)
from photonic_vqe.measurement import Counts
from photonic_vqe.qstate import DensityMatrix, StateVector, pauli_to_matrix
from photonic_vqe.utils import derive_seeds, emit_curve, read_file_with_fallback

NOISE_KINDS = ("dephasing", "depolarizing", "white")
MAX_CONDITION = 1e6
NEGATIVITY_TOL = 1e-12


@dataclass(frozen=True)
class NoiseSpec:
    """
    A noise channel.

    Attributes:
        kind (str): ``dephasing``, ``depolarizing`` or ``white``.
        strength (float): Mixing strength ``eps`` in [0, 1].
        targets (tuple[int] | None): Qubits hit by a local channel; ``None``
            means every qubit. Ignored by ``white``.
    """

    kind: str
    strength: float
    targets: tuple | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not 0.0 <= self.strength <= 1.0:
            raise NoiseStrengthError(f"noise strength must be in [0, 1], got {self.strength}")
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))

    def scaled(self, factor):
        """Same channel with its strength multiplied by ``factor``."""
        return NoiseSpec(self.kind, self.strength * factor, self.targets)


def _local_pauli(letter, qubit, k):
    return pauli_to_matrix("I" * qubit + letter + "I" * (k - qubit - 1))


def apply_channel(rho, spec):
    """
    Apply a noise channel to a state.

    dephasing:    ``(1-eps) rho + eps (rho + Z rho Z) / 2`` on each target
    depolarizing: ``(1-eps) rho + eps sum_P P rho P / 4`` on each target
    white:        ``(1-eps) rho + eps I / d``

    Args:
        rho (DensityMatrix | StateVector): Input state.
        spec (NoiseSpec): The channel.

    Returns:
        DensityMatrix: The noisy state.
    """
    if isinstance(rho, StateVector):
        rho = DensityMatrix.from_state(rho)
    eps = spec.strength
    m = rho.entries.copy()
    d = rho.dim
    if spec.kind == "white":
        return DensityMatrix((1 - eps) * m + eps * np.eye(d) / d)

    k = int(round(math.log2(d)))
    if 2**k != d:
        raise DimensionMismatchError(f"{spec.kind} noise needs a qubit register, got dimension {d}")
    targets = range(k) if spec.targets is None else spec.targets
    for t in targets:
        if not 0 <= t < k:
            raise DimensionMismatchError(f"noise target {t} outside {k} qubits")
        if spec.kind == "dephasing":
            z = _local_pauli("Z", t, k)
            m = (1 - eps) * m + eps * (m + z @ m @ z) / 2
        else:
            mixed = sum(p @ m @ p for p in (_local_pauli(c, t, k) for c in "IXYZ")) / 4
            m = (1 - eps) * m + eps * mixed
    m = (m + m.conj().T) / 2
    return DensityMatrix(m)


def apply_channels(rho, specs):
    for spec in specs:
        rho = apply_channel(rho, spec)
    if isinstance(rho, StateVector):
        rho = DensityMatrix.from_state(rho)
    return rho


# Readout confusion


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Column-stochastic ``p(measured j | prepared k)``."""

    entries: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.entries, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise DimensionMismatchError(f"confusion matrix must be square, got {lam.shape}")
        if np.min(lam) < -NEGATIVITY_TOL:
            raise ValueError("confusion matrix entries must be non-negative")
        if np.max(np.abs(lam.sum(axis=0) - 1.0)) > 1e-9:
            raise ValueError("confusion matrix columns must sum to 1")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "entries", lam)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def condition_number(self):
        return float(np.linalg.cond(self.entries))


@dataclass(frozen=True, eq=False)
class QuasiDistribution:
    """Mitigated outcome weights; may hold small negative entries."""

    probabilities: np.ndarray
    negative: bool

    @property
    def total(self):
        return float(self.probabilities.sum())


def bit_flip_confusion(p, k):
    """Independent symmetric bit flips with probability ``p`` on ``k`` qubits."""
    if not 0.0 <= p <= 1.0:
        raise NoiseStrengthError(f"flip probability must be in [0, 1], got {p}")
    single = np.array([[1 - p, p], [p, 1 - p]])
    return ConfusionMatrix(reduce(np.kron, [single] * k))


def noisy_measure_fn(readout_matrix):
    """
    Calibration probe that prepares basis state ``index`` and reads it out
    through ``readout_matrix``.
    """
    lam = np.asarray(
        readout_matrix.entries if isinstance(readout_matrix, ConfusionMatrix) else readout_matrix,
        dtype=float,
    )

    def measure(index, shots, seed):
        rng = np.random.default_rng(seed)
        column = np.clip(lam[:, index], 0.0, None)
        return Counts.from_array(rng.multinomial(shots, column / column.sum()))

    return measure


def calibrate_confusion(measure_fn, basis_states, shots, rng_seed, max_condition=MAX_CONDITION):
    """
    Estimate the readout confusion matrix from prepared basis states.

    Args:
        measure_fn (callable): ``measure_fn(index, shots, seed) -> Counts``
            for the prepared basis state ``index``.
        basis_states (list[int]): Prepared indices; column order of the result.
        shots (int): Shots per prepared state.
        rng_seed (int): Master seed; each state gets a derived seed.
        max_condition (float): Largest condition number accepted.

    Returns:
        ConfusionMatrix: Column ``k`` is the empirical outcome distribution
        for ``basis_states[k]``.

    Raises:
        SingularConfusionError: If the estimate is too badly conditioned.
    """
    if shots < 1:
        raise ValueError(f"calibration needs at least one shot per state, got {shots}")
    basis_states = list(basis_states)
    m = len(basis_states)
    columns = []
    for index, seed in zip(basis_states, derive_seeds(rng_seed, m)):
        counts = measure_fn(index, shots, seed)
        if counts.dim != m:
            raise DimensionMismatchError(
                f"probe returned {counts.dim} outcomes for {m} prepared states"
            )
        columns.append(counts.frequencies())
    lam = ConfusionMatrix(np.column_stack(columns))
    cond = lam.condition_number
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularConfusionError(f"calibrated confusion matrix is singular (condition {cond:.3g})")
    logger.info(f"Calibrated {m}x{m} confusion matrix, condition number {cond:.3f}")
    return lam


def mitigate_counts(counts, confusion):
    """
    Invert readout noise: ``p_ideal = Lambda^-1 p_measured``.

    Negative entries are kept as they are and flagged.
    """
    if counts.dim != confusion.dim:
        raise DimensionMismatchError(
            f"counts over {counts.dim} outcomes do not match a {confusion.dim}-outcome confusion matrix"
        )
    try:
        quasi = np.linalg.solve(confusion.entries, counts.frequencies())
    except np.linalg.LinAlgError as e:
        raise SingularConfusionError(f"confusion matrix is singular: {e}") from e
    negative = bool(np.min(quasi) < -NEGATIVITY_TOL)
    if negative:
        logger.warning(f"Mitigated distribution has negative weight {np.min(quasi):.3e}")
    return QuasiDistribution(quasi, negative)


def confusion_to_csv(confusion, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in confusion.entries:
            writer.writerow([f"{v:.12g}" for v in row])
    return path


def load_confusion(path):
    rows = [r for r in csv.reader(read_file_with_fallback(path).splitlines()) if r]
    return ConfusionMatrix(np.array([[float(v) for v in r] for r in rows]))


# Zero-noise extrapolation


def _distinct(epsilons):
    if len(set(float(e) for e in epsilons)) < 2:
        raise ExtrapolationError(f"extrapolation needs two distinct noise strengths, got {list(epsilons)}")


def zne_estimate(points):
    """
    Extrapolate energies measured at several noise strengths to zero noise.

    Two points use ``(eps2 E1 - eps1 E2) / (eps2 - eps1)``; more points use
    the intercept of a least-squares line.

    Args:
        points (list[tuple[float, float]]): ``(eps, E(eps))`` pairs.

    Returns:
        float: The zero-noise estimate.
    """
    eps = [float(p[0]) for p in points]
    energies = [float(p[1]) for p in points]
    _distinct(eps)
    if len(points) == 2:
        (e1, y1), (e2, y2) = zip(eps, energies)
        return (e2 * y1 - e1 * y2) / (e2 - e1)
    _, intercept = np.polyfit(eps, energies, 1)
    return float(intercept)


def zne_weights(epsilons):
    """Weights ``c`` with ``E_est = sum_i c_i E(eps_i)`` for the linear fit."""
    eps = np.asarray(epsilons, dtype=float)
    _distinct(eps)
    design = np.column_stack([np.ones_like(eps), eps])
    return np.linalg.pinv(design)[0]


def zne_variance(sigma, eps1, eps2):
    """``sigma^2 (eps1^2 + eps2^2) / (eps2 - eps1)^2`` for two-point extrapolation."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if eps1 == eps2:
        raise ExtrapolationError("extrapolation variance diverges for equal noise strengths")
    return sigma**2 * (eps1**2 + eps2**2) / (eps2 - eps1) ** 2


@dataclass
class ZNEResult:
    points: list
    estimate: float
    stderr: float


def zne_study(energy_fn, epsilons, path=None):
    """
    Evaluate ``energy_fn(eps) -> (energy, stderr)`` at every strength and extrapolate.

    When ``path`` is given the rows go to CSV as ``epsilon,energy,stderr``
    followed by ``zne,<estimate>,<stderr>``.
    """
    epsilons = [float(e) for e in epsilons]
    _distinct(epsilons)
    points = []
    for eps in epsilons:
        energy, err = energy_fn(eps)
        logger.info(f"ZNE point eps={eps:.4f}: E={energy:.6f} +/- {err:.2e}")
        points.append((eps, float(energy), float(err)))
    weights = zne_weights(epsilons)
    estimate = zne_estimate([(e, y) for e, y, _ in points])
    stderr = float(math.sqrt(sum((w * s) ** 2 for w, (_, _, s) in zip(weights, points))))
    if path is not None:
        rows = [{"epsilon": e, "energy": y, "stderr": s} for e, y, s in points]
        rows.append({"epsilon": "zne", "energy": estimate, "stderr": stderr})
        emit_curve(rows, path, columns=["epsilon", "energy", "stderr"])
    return ZNEResult(points, float(estimate), stderr)
