# driver.py
"""
VQE runs: ansatz families, Hamiltonian sources, the energy objective over the
configured backend, noise and mitigation, and the optimizer loop.
"""

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from loguru import logger

from photonic_vqe.exceptions import (
    ConfigError,
    DimensionMismatchError,
    ParameterCountError,
)
from photonic_vqe.hamiltonians import (
    UccsdAmplitudes,
    build_exciton,
    build_factoring,
    build_heisenberg,
    build_schwinger,
    bundled_coefficients,
    load_coefficients,
    uccsd_excitations,
    uccsd_state,
)
from photonic_vqe.linopt import (
    BeamSplitterMesh,
    FockState,
    MeshElement,
    clements_layout,
    fock_evolve,
    mesh_reconstruct,
    pbd_cnot,
    rail_postselect,
    waveplate,
)
from photonic_vqe.measurement import (
    allocate_shots,
    bell_groups,
    estimate_pauli_sum,
    gc_groups,
    qwc_groups,
)
from photonic_vqe.noise_mitigation import (
    apply_channels,
    bit_flip_confusion,
    calibrate_confusion,
    noisy_measure_fn,
    zne_estimate,
    zne_weights,
)
from photonic_vqe.optimizers import OptimizerConfig, minimize, minimize_qng
from photonic_vqe.qstate import (
    StateVector,
    exact_eigensolve,
    expectation_exact,
    load_operator,
)

ANSATZ_FAMILIES = ("waveplate_hea", "mesh_phases", "uccsd", "raw_qudit")
HAMILTONIAN_MODELS = (
    "h2",
    "hehplus",
    "lih",
    "heisenberg",
    "schwinger",
    "factoring",
    "exciton",
    "operator",
)
TABLE_MODELS = {"h2": "H2", "hehplus": "HeH+", "lih": "LiH"}
BACKENDS = ("exact", "sampled")
GROUPINGS = ("qwc", "gc", "bell")
MITIGATIONS = ("none", "confusion", "zne")


@dataclass(frozen=True)
class AnsatzSpec:
    """
    Structure of a parameterized state.

    Attributes:
        family (str): ``waveplate_hea``, ``mesh_phases``, ``uccsd`` or ``raw_qudit``.
        dim (int): Qudit dimension (``raw_qudit``) or qubit count (``waveplate_hea``).
        layout (tuple[str]): Wave-plate program, tokens ``hwp:q``, ``qwp:q`` and
            ``cnot`` (polarization qubit 0 controls path qubit 1).
        modes (int): Mode count of a ``mesh_phases`` interferometer.
        rail_groups (tuple[tuple[int]] | None): Post-selection groups; defaults
            to mode pairs, or one group over every mode for a single photon.
        photons (int): Photons injected into a mesh, one per rail group.
        reference (int): Hartree-Fock basis index for ``uccsd``.
        orbital_count (int): Spin-orbital count for ``uccsd``.
    """

    family: str
    dim: int = 2
    layout: tuple = ()
    modes: int = 0
    rail_groups: tuple | None = None
    photons: int = 0
    reference: int = 0
    orbital_count: int = 0

    def __post_init__(self):
        if self.family not in ANSATZ_FAMILIES:
            raise ConfigError(f"unknown ansatz family {self.family!r}; expected one of {ANSATZ_FAMILIES}")
        if self.family == "raw_qudit" and self.dim < 2:
            raise ConfigError(f"raw_qudit needs dimension >= 2, got {self.dim}")
        if self.family == "waveplate_hea":
            object.__setattr__(self, "layout", tuple(tok.strip().lower() for tok in self.layout))
            for token in self.layout:
                self._plate(token)
        if self.family == "mesh_phases" and self.modes < 2:
            raise ConfigError("mesh_phases needs at least two modes")
        if self.family == "uccsd" and self.orbital_count < 1:
            raise ConfigError("uccsd needs a positive orbital count")
        if self.rail_groups is not None:
            object.__setattr__(self, "rail_groups", tuple(tuple(g) for g in self.rail_groups))

    def _plate(self, token):
        if token == "cnot":
            if self.dim < 2:
                raise ConfigError("cnot needs at least two qubits")
            return None
        kind, _, qubit = token.partition(":")
        if kind not in ("hwp", "qwp") or not qubit.isdigit() or int(qubit) >= self.dim:
            raise ConfigError(f"bad wave-plate token {token!r} for {self.dim} qubits")
        return kind.upper(), int(qubit)

    @property
    def groups(self):
        if self.rail_groups is not None:
            return self.rail_groups
        if self.photons <= 1:
            return (tuple(range(self.modes)),)
        return tuple((m, m + 1) for m in range(0, self.modes - 1, 2))

    @property
    def parameter_count(self):
        if self.family == "raw_qudit":
            return 2 * self.dim - 2
        if self.family == "waveplate_hea":
            return sum(1 for tok in self.layout if tok != "cnot")
        if self.family == "mesh_phases":
            return self.modes * self.modes
        return len(uccsd_excitations(self.reference, self.orbital_count))

    @property
    def state_dim(self):
        if self.family == "raw_qudit":
            return self.dim
        if self.family == "waveplate_hea":
            return 2**self.dim
        if self.family == "uccsd":
            return 2**self.orbital_count
        return math.prod(len(g) for g in self.groups)


@dataclass(frozen=True)
class HamiltonianSource:
    """
    Where the Hamiltonian comes from.

    ``h2``, ``hehplus`` and ``lih`` read a coefficient table (``path``, or the
    bundled one) at ``row`` or at the row nearest ``params["bond_length"]``;
    ``operator`` reads an operator file; the rest are built from ``params``.
    """

    model: str
    params: dict = field(default_factory=dict)
    path: str | None = None
    row: int = 0

    def __post_init__(self):
        if self.model not in HAMILTONIAN_MODELS:
            raise ConfigError(f"unknown Hamiltonian model {self.model!r}; expected one of {HAMILTONIAN_MODELS}")
        if self.model == "operator" and not self.path:
            raise ConfigError("operator Hamiltonians need a path")


@dataclass
class VQEConfig:
    hamiltonian: HamiltonianSource
    ansatz: AnsatzSpec
    backend: str = "exact"
    shots: int = 10000
    readout_error: float = 0.0
    grouping: str = "qwc"
    shot_allocation: str = "equal"
    noise: list = field(default_factory=list)
    mitigation: str = "none"
    zne_epsilons: tuple = (0.1, 0.2)
    calibration_shots: int = 100000
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 42

    def validate(self, op=None):
        """Check cross-field rules; ``op`` enables the dimension checks."""
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.grouping not in GROUPINGS:
            raise ConfigError(f"unknown grouping {self.grouping!r}; expected one of {GROUPINGS}")
        if self.mitigation not in MITIGATIONS:
            raise ConfigError(f"unknown mitigation {self.mitigation!r}; expected one of {MITIGATIONS}")
        if self.backend == "sampled" and self.shots < 1:
            raise ConfigError("sampled backend needs at least one shot")
        if not 0.0 <= self.readout_error <= 0.5:
            raise ConfigError(f"readout_error must be in [0, 0.5], got {self.readout_error}")
        if self.mitigation == "zne":
            if not self.noise or max(n.strength for n in self.noise) <= 0:
                raise ConfigError("zne mitigation needs at least one noise channel with positive strength")
            if len(set(self.zne_epsilons)) < 2:
                raise ConfigError("zne mitigation needs two distinct noise strengths")
        if self.mitigation == "confusion" and self.backend != "sampled":
            raise ConfigError("confusion mitigation needs the sampled backend")
        if self.optimizer.method == "qng" and self.noise:
            logger.warning("QNG uses the noiseless ansatz state for its metric")
        if op is not None:
            if self.grouping == "bell" and op.num_qubits != 2:
                raise ConfigError("bell grouping is only defined for two-qubit Hamiltonians")
            if self.ansatz.state_dim != op.dim:
                raise DimensionMismatchError(
                    f"ansatz prepares dimension {self.ansatz.state_dim}, Hamiltonian acts on {op.dim}"
                )
        return self


@dataclass
class VQETrace:
    """
    Optimizer trace plus the energy standard error and cumulative shots per iteration.

    ``final_energy`` is a fresh estimate at ``final_theta``, taken after the
    optimizer stops; ``best_estimate`` is the lowest value the optimizer saw,
    which is biased low on sampled backends.
    """

    opt_trace: object
    stderrs: list
    shots: list
    final_energy: float
    final_theta: np.ndarray
    exact_reference: float
    final_stderr: float = 0.0
    best_estimate: float | None = None

    @property
    def records(self):
        return self.opt_trace.records

    def rows(self):
        rows = []
        for r, err, shots in zip(self.records, self.stderrs, self.shots):
            row = {"iter": r.iteration, "energy": r.value, "stderr": err, "shots": shots, "evals": r.evaluations}
            row.update({f"theta{j}": float(t) for j, t in enumerate(r.theta)})
            rows.append(row)
        return rows


# Ansatz preparation


def _raw_qudit_state(d, theta):
    polar, phases = theta[: d - 1], theta[d - 1 :]
    amps = np.zeros(d, dtype=complex)
    sin_prod = 1.0
    for j in range(d):
        phase = 1.0 if j == 0 else np.exp(1j * phases[j - 1])
        if j < d - 1:
            amps[j] = phase * sin_prod * math.cos(polar[j])
            sin_prod *= math.sin(polar[j])
        else:
            amps[j] = phase * sin_prod
    return StateVector.normalized(amps)


def _waveplate_state(spec, theta):
    k = spec.dim
    psi = np.zeros(2**k, dtype=complex)
    psi[0] = 1.0
    angles = iter(theta)
    cnot = reduce(np.kron, [pbd_cnot()] + [np.eye(2)] * (k - 2))
    for token in spec.layout:
        plate = spec._plate(token)
        if plate is None:
            psi = cnot @ psi
            continue
        kind, qubit = plate
        factors = [np.eye(2)] * k
        factors[qubit] = waveplate(kind, next(angles))
        psi = reduce(np.kron, factors) @ psi
    return StateVector.normalized(psi)


def _mesh_state(spec, theta):
    m = spec.modes
    pairs = clements_layout(m)
    elements = [
        MeshElement(a, b, float(theta[2 * i]), float(theta[2 * i + 1])) for i, (a, b) in enumerate(pairs)
    ]
    phases = theta[2 * len(pairs) :]
    u = mesh_reconstruct(BeamSplitterMesh(m, tuple(elements), phases, layout="clements"))
    occupations = [0] * m
    for group in spec.groups:
        occupations[group[0]] = 1
    amps = fock_evolve(u, FockState(tuple(occupations)))
    state, _ = rail_postselect(amps, spec.groups)
    return state


def prepare_ansatz(spec, theta, noise=()):
    """
    Prepare the ansatz state at parameters ``theta``.

    Args:
        spec (AnsatzSpec): Ansatz structure.
        theta (array_like): ``spec.parameter_count`` real parameters.
        noise (list[NoiseSpec]): Channels applied after preparation.

    Returns:
        StateVector | DensityMatrix: Pure state, or mixed when noise is given.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != spec.parameter_count:
        raise ParameterCountError(
            f"{spec.family} expects {spec.parameter_count} parameters, got {theta.size}"
        )
    if spec.family == "raw_qudit":
        state = _raw_qudit_state(spec.dim, theta)
    elif spec.family == "waveplate_hea":
        state = _waveplate_state(spec, theta)
    elif spec.family == "mesh_phases":
        state = _mesh_state(spec, theta)
    else:
        excitations = uccsd_excitations(spec.reference, spec.orbital_count)
        amps = UccsdAmplitudes.from_vector(theta, excitations, spec.orbital_count)
        state = uccsd_state(spec.reference, amps, spec.orbital_count)
    if noise:
        return apply_channels(state, noise)
    return state


def build_hamiltonian(source):
    """Build the ``OperatorSum`` named by a :class:`HamiltonianSource`."""
    p = source.params
    if source.model in TABLE_MODELS:
        model = TABLE_MODELS[source.model]
        table = load_coefficients(source.path, model) if source.path else bundled_coefficients(model)
        row = table.nearest(float(p["bond_length"])) if "bond_length" in p else source.row
        if not 0 <= row < len(table):
            raise ConfigError(f"row {row} outside the {len(table)}-row {model} table")
        return table.hamiltonian(row)
    if source.model == "heisenberg":
        return build_heisenberg(float(p.get("w1", 1.0)), float(p.get("w2", 1.0)), float(p.get("w3", 1.0)))
    if source.model == "schwinger":
        return build_schwinger(float(p.get("m", 0.0)))
    if source.model == "factoring":
        return build_factoring(int(p.get("n", 35)), p.get("form", "eq15"))
    if source.model == "exciton":
        return build_exciton(float(p.get("alpha", 1.46)), float(p.get("beta", 0.037)))
    return load_operator(source.path)


def _scaled_noise(noise, epsilon):
    top = max(n.strength for n in noise)
    return [n.scaled(epsilon / top) for n in noise]


class EnergyObjective:
    """
    ``theta -> (energy, stderr)`` for one configuration.

    Sampling seeds come from ``(cfg.seed, evaluation counter)`` so two
    objectives built from the same config produce identical sequences.
    """

    def __init__(self, cfg, op=None):
        self.cfg = cfg
        self.op = op if op is not None else build_hamiltonian(cfg.hamiltonian)
        cfg.validate(self.op)
        self.calls = 0
        self.shots_used = 0
        self.shots_after = []
        self.evaluated = {}
        self.groups = None
        self.shot_plan = None
        self.readout = None
        self.confusion = None
        if cfg.backend == "sampled":
            grouping = {"qwc": qwc_groups, "gc": gc_groups, "bell": bell_groups}[cfg.grouping]
            self.groups = grouping(self.op)
            if self.groups:
                self.shot_plan = allocate_shots(self.groups, self.op, cfg.shots, cfg.shot_allocation)
            if cfg.readout_error > 0:
                self.readout = bit_flip_confusion(cfg.readout_error, self.op.num_qubits).entries
            if cfg.mitigation == "confusion":
                probe = noisy_measure_fn(self.readout if self.readout is not None else np.eye(self.op.dim))
                self.confusion = calibrate_confusion(
                    probe, range(self.op.dim), cfg.calibration_shots, cfg.seed
                )

    def _energy(self, state, seed):
        if self.cfg.backend == "exact":
            return float(expectation_exact(state, self.op).real), 0.0, 0
        if not self.groups:
            return float(self.op.identity_coefficient.real), 0.0, 0
        energy, err = estimate_pauli_sum(
            state,
            self.op,
            self.groups,
            self.shot_plan,
            seed,
            confusion=self.confusion,
            readout_matrix=self.readout,
        )
        return energy, err, sum(self.shot_plan)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        seed = [int(self.cfg.seed), self.calls]
        self.calls += 1
        spec = self.cfg.ansatz
        if self.cfg.mitigation == "zne":
            points, errs, shots = [], [], 0
            for k, eps in enumerate(self.cfg.zne_epsilons):
                state = prepare_ansatz(spec, theta, _scaled_noise(self.cfg.noise, eps))
                energy, err, used = self._energy(state, seed + [k])
                points.append((eps, energy))
                errs.append(err)
                shots += used
            weights = zne_weights(self.cfg.zne_epsilons)
            energy = zne_estimate(points)
            err = math.sqrt(sum((w * e) ** 2 for w, e in zip(weights, errs)))
        else:
            state = prepare_ansatz(spec, theta, self.cfg.noise)
            energy, err, shots = self._energy(state, seed)
        self.shots_used += shots
        self.shots_after.append(self.shots_used)
        self.evaluated[theta.tobytes()] = (energy, err)
        return energy, err


def energy_objective(cfg, op=None):
    return EnergyObjective(cfg, op)


def energy_at(cfg, theta):
    """One-off energy evaluation, e.g. for reporting a final parameter vector."""
    return EnergyObjective(cfg)(theta)


def final_state(cfg, theta):
    """Noiseless ansatz state at ``theta``."""
    return prepare_ansatz(cfg.ansatz, theta)


def initial_theta(cfg):
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(0.0, 2 * np.pi, size=cfg.ansatz.parameter_count)


def run_vqe(cfg, theta0=None):
    """
    Run one VQE optimization.

    Args:
        cfg (VQEConfig): The experiment.
        theta0 (array_like, optional): Start point; uniform in ``[0, 2 pi)``
            from ``cfg.seed`` when omitted.

    Returns:
        VQETrace: The trace with the exact ground energy attached.
    """
    op = build_hamiltonian(cfg.hamiltonian)
    objective = EnergyObjective(cfg, op)
    reference = float(exact_eigensolve(op)[0])
    theta0 = initial_theta(cfg) if theta0 is None else np.asarray(theta0, dtype=float)
    logger.info(
        f"VQE: {cfg.hamiltonian.model} with {cfg.ansatz.family} "
        f"({cfg.ansatz.parameter_count} parameters), {cfg.backend} backend, {cfg.optimizer.method}"
    )

    def scalar(theta):
        return objective(theta)[0]

    if cfg.optimizer.method == "qng":
        trace = minimize_qng(scalar, lambda t: prepare_ansatz(cfg.ansatz, t), theta0, cfg.optimizer)
    else:
        trace = minimize(scalar, theta0, cfg.optimizer)

    stderrs = [objective.evaluated.get(r.theta.tobytes(), (r.value, 0.0))[1] for r in trace.records]
    shots = [objective.shots_after[r.evaluations - 1] if r.evaluations else 0 for r in trace.records]
    best = trace.best_record
    final_energy, final_stderr = objective(best.theta)
    result = VQETrace(trace, stderrs, shots, final_energy, best.theta, reference, final_stderr, best.value)
    logger.info(
        f"VQE finished: E={result.final_energy:.8f}, exact={reference:.8f}, "
        f"gap={result.final_energy - reference:.2e}, shots={objective.shots_used}"
    )
    return result
