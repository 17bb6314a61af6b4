import math

import numpy as np
import pytest

from photonic_vqe.driver import (
    AnsatzSpec,
    EnergyObjective,
    HamiltonianSource,
    VQEConfig,
    build_hamiltonian,
    energy_at,
    final_state,
    initial_theta,
    prepare_ansatz,
    run_vqe,
)
from photonic_vqe.exceptions import (
    ConfigError,
    DimensionMismatchError,
    ParameterCountError,
)
from photonic_vqe.hamiltonians import CHEMICAL_ACCURACY
from photonic_vqe.noise_mitigation import NoiseSpec
from photonic_vqe.optimizers import OptimizerConfig, minimize
from photonic_vqe.qstate import (
    DensityMatrix,
    OperatorSum,
    StateVector,
    dump_operator,
    expectation_exact,
    fidelity,
    random_state,
)

SINGLET_THETA = [math.pi / 2, math.pi / 4, 0.0, 0.0, math.pi, 0.0]


@pytest.fixture
def heisenberg_cfg():
    return VQEConfig(
        HamiltonianSource("heisenberg"),
        AnsatzSpec("raw_qudit", dim=4),
        optimizer=OptimizerConfig(method="cobyla", max_iter=300),
    )


@pytest.fixture
def singlet():
    return StateVector.normalized([0, 1, -1, 0])


class TestAnsatzSpec:
    @pytest.mark.parametrize(
        "spec, count, dim",
        [
            (AnsatzSpec("raw_qudit", dim=4), 6, 4),
            (AnsatzSpec("raw_qudit", dim=16), 30, 16),
            (AnsatzSpec("waveplate_hea", dim=2, layout=("hwp:0", "cnot", "qwp:1")), 2, 4),
            (AnsatzSpec("mesh_phases", modes=3), 9, 3),
            (AnsatzSpec("mesh_phases", modes=4, photons=2), 16, 4),
            (AnsatzSpec("uccsd", reference=2, orbital_count=2), 1, 4),
        ],
    )
    def test_counts(self, spec, count, dim):
        assert spec.parameter_count == count
        assert spec.state_dim == dim

    def test_default_rail_groups(self):
        assert AnsatzSpec("mesh_phases", modes=3).groups == ((0, 1, 2),)
        assert AnsatzSpec("mesh_phases", modes=4, photons=2).groups == ((0, 1), (2, 3))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"family": "hardware"},
            {"family": "raw_qudit", "dim": 1},
            {"family": "waveplate_hea", "dim": 2, "layout": ("hwp:2",)},
            {"family": "waveplate_hea", "dim": 2, "layout": ("lens:0",)},
            {"family": "mesh_phases", "modes": 1},
            {"family": "uccsd"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            AnsatzSpec(**kwargs)


class TestPrepareAnsatz:
    def test_raw_qudit_singlet(self, singlet):
        state = prepare_ansatz(AnsatzSpec("raw_qudit", dim=4), SINGLET_THETA)
        assert fidelity(state, singlet) == pytest.approx(1.0)

    def test_raw_qudit_covers_sphere(self):
        rng = np.random.default_rng(1)
        state = prepare_ansatz(AnsatzSpec("raw_qudit", dim=5), rng.uniform(0, 2 * np.pi, 8))
        assert state.dim == 5

    def test_waveplates_make_bell_state(self):
        spec = AnsatzSpec("waveplate_hea", dim=2, layout=("hwp:0", "cnot"))
        state = prepare_ansatz(spec, [math.pi / 8])
        assert fidelity(state, StateVector.normalized([1, 0, 0, 1])) == pytest.approx(1.0)

    def test_mesh_identity_keeps_photon(self):
        state = prepare_ansatz(AnsatzSpec("mesh_phases", modes=2), np.zeros(4))
        assert np.allclose(np.abs(state.amplitudes), [1, 0])

    def test_two_photon_mesh_postselects(self):
        spec = AnsatzSpec("mesh_phases", modes=4, photons=2)
        state = prepare_ansatz(spec, np.random.default_rng(4).uniform(0, 2 * np.pi, 16))
        assert state.dim == 4

    def test_uccsd_zero_is_reference(self):
        state = prepare_ansatz(AnsatzSpec("uccsd", reference=2, orbital_count=2), [0.0])
        assert np.allclose(state.amplitudes, [0, 0, 1, 0])

    def test_noise_gives_mixed_state(self):
        rho = prepare_ansatz(AnsatzSpec("raw_qudit", dim=4), SINGLET_THETA, [NoiseSpec("white", 0.2)])
        assert isinstance(rho, DensityMatrix)
        assert rho.purity < 1

    def test_parameter_count(self):
        with pytest.raises(ParameterCountError):
            prepare_ansatz(AnsatzSpec("raw_qudit", dim=4), [0.1, 0.2])

    def test_raw_qudit_reaches_random_targets(self):
        spec = AnsatzSpec("raw_qudit", dim=4)
        rng = np.random.default_rng(8)
        cfg = OptimizerConfig(method="cobyla", max_iter=500, tol=1e-12)
        for _ in range(100):
            target = random_state(4, rng)

            def infidelity(theta, target=target):
                return 1.0 - fidelity(prepare_ansatz(spec, theta), target)

            best = 1.0
            for _ in range(4):
                trace = minimize(infidelity, rng.uniform(0, 2 * np.pi, spec.parameter_count), cfg)
                best = min(best, trace.best_value)
                if best <= 1e-6:
                    break
            assert best <= 1e-6


class TestBuildHamiltonian:
    def test_table_row_by_bond_length(self):
        op = build_hamiltonian(HamiltonianSource("h2", {"bond_length": 0.736}))
        assert op.coefficient("XX").real == pytest.approx(0.18093119978423156)
        op = build_hamiltonian(HamiltonianSource("h2", {"bond_length": 0.74}))
        assert op.coefficient("XX").real == pytest.approx(0.1813)

    def test_row_out_of_range(self):
        with pytest.raises(ConfigError):
            build_hamiltonian(HamiltonianSource("h2", row=99))

    def test_builders(self):
        assert build_hamiltonian(HamiltonianSource("schwinger", {"m": 1.0})).coefficient("IZ") == 0.5
        assert build_hamiltonian(HamiltonianSource("factoring")).num_qubits == 2
        assert build_hamiltonian(HamiltonianSource("exciton")).num_qubits == 1

    def test_operator_file(self, tmp_path):
        op = OperatorSum.from_terms([(0.5, "ZZ"), (0.25, "XI")])
        path = tmp_path / "op.txt"
        dump_operator(op, path)
        loaded = build_hamiltonian(HamiltonianSource("operator", path=str(path)))
        assert np.allclose(loaded.matrix, op.matrix)

    def test_unknown_model(self):
        with pytest.raises(ConfigError):
            HamiltonianSource("h3")
        with pytest.raises(ConfigError):
            HamiltonianSource("operator")


class TestVQEConfig:
    def test_zne_needs_noise(self, heisenberg_cfg):
        heisenberg_cfg.mitigation = "zne"
        with pytest.raises(ConfigError):
            heisenberg_cfg.validate()

    def test_confusion_needs_sampling(self, heisenberg_cfg):
        heisenberg_cfg.mitigation = "confusion"
        with pytest.raises(ConfigError):
            heisenberg_cfg.validate()

    def test_unknown_backend(self, heisenberg_cfg):
        heisenberg_cfg.backend = "hardware"
        with pytest.raises(ConfigError):
            heisenberg_cfg.validate()

    def test_dimension_mismatch(self):
        cfg = VQEConfig(HamiltonianSource("lih"), AnsatzSpec("raw_qudit", dim=4))
        with pytest.raises(DimensionMismatchError):
            EnergyObjective(cfg)

    def test_bell_grouping_needs_two_qubits(self):
        cfg = VQEConfig(HamiltonianSource("lih"), AnsatzSpec("raw_qudit", dim=16), backend="sampled", grouping="bell")
        with pytest.raises(ConfigError):
            EnergyObjective(cfg)


class TestEnergyObjective:
    def test_exact_singlet(self, heisenberg_cfg):
        energy, stderr = EnergyObjective(heisenberg_cfg)(SINGLET_THETA)
        assert energy == pytest.approx(-3.0)
        assert stderr == 0.0

    def test_sampled_is_reproducible(self, heisenberg_cfg):
        heisenberg_cfg.backend = "sampled"
        heisenberg_cfg.shots = 3000
        theta = initial_theta(heisenberg_cfg)
        a = EnergyObjective(heisenberg_cfg)
        b = EnergyObjective(heisenberg_cfg)
        assert [a(theta) for _ in range(3)] == [b(theta) for _ in range(3)]
        assert a.shots_used == 9000
        assert a.shots_after == [3000, 6000, 9000]

    def test_repeated_calls_draw_fresh_samples(self, heisenberg_cfg):
        heisenberg_cfg.backend = "sampled"
        heisenberg_cfg.shots = 3000
        objective = EnergyObjective(heisenberg_cfg)
        theta = initial_theta(heisenberg_cfg)
        assert objective(theta) != objective(theta)

    def test_bell_grouping_on_singlet(self, heisenberg_cfg):
        heisenberg_cfg.backend = "sampled"
        heisenberg_cfg.grouping = "bell"
        energy, stderr = EnergyObjective(heisenberg_cfg)(SINGLET_THETA)
        assert energy == pytest.approx(-3.0)
        assert stderr == pytest.approx(0.0)

    def test_white_noise_zne_is_exact(self, heisenberg_cfg):
        heisenberg_cfg.noise = [NoiseSpec("white", 0.1)]
        raw, _ = energy_at(heisenberg_cfg, SINGLET_THETA)
        assert raw == pytest.approx(-2.7)
        heisenberg_cfg.mitigation = "zne"
        mitigated, _ = energy_at(heisenberg_cfg, SINGLET_THETA)
        assert mitigated == pytest.approx(-3.0)

    def test_zne_scales_every_channel(self, heisenberg_cfg):
        heisenberg_cfg.noise = [NoiseSpec("white", 0.2), NoiseSpec("dephasing", 0.1)]
        heisenberg_cfg.mitigation = "zne"
        heisenberg_cfg.zne_epsilons = (0.2, 0.4)
        objective = EnergyObjective(heisenberg_cfg)
        energy, _ = objective(SINGLET_THETA)
        assert math.isfinite(energy)

    def test_confusion_mitigation(self):
        cfg = VQEConfig(
            HamiltonianSource("heisenberg"),
            AnsatzSpec("raw_qudit", dim=4),
            backend="sampled",
            shots=60000,
            readout_error=0.05,
            mitigation="confusion",
            calibration_shots=200000,
        )
        energy, _ = EnergyObjective(cfg)(SINGLET_THETA)
        assert energy == pytest.approx(-3.0, abs=0.05)


class TestRunVQE:
    def test_heisenberg_exact(self, heisenberg_cfg):
        trace = run_vqe(heisenberg_cfg)
        assert trace.exact_reference == pytest.approx(-3.0)
        assert trace.final_energy == pytest.approx(-3.0, abs=1e-5)
        assert trace.records[0].iteration == 0
        assert len(trace.stderrs) == len(trace.records) == len(trace.shots)

    def test_h2_uccsd_reaches_chemical_accuracy(self):
        cfg = VQEConfig(
            HamiltonianSource("h2", {"bond_length": 0.735}),
            AnsatzSpec("uccsd", reference=2, orbital_count=2),
            optimizer=OptimizerConfig(method="cobyla", max_iter=200),
        )
        trace = run_vqe(cfg, theta0=[0.0])
        assert abs(trace.final_energy - trace.exact_reference) < CHEMICAL_ACCURACY

    def test_schwinger_raw_qudit(self):
        cfg = VQEConfig(
            HamiltonianSource("schwinger", {"m": 0.0}),
            AnsatzSpec("raw_qudit", dim=4),
            optimizer=OptimizerConfig(method="cobyla", max_iter=500, tol=1e-12),
        )
        trace = run_vqe(cfg)
        assert trace.final_energy == pytest.approx(0.5 - math.sqrt(17) / 2, abs=1e-5)

    def test_qng_with_waveplates(self):
        cfg = VQEConfig(
            HamiltonianSource("exciton"),
            AnsatzSpec("waveplate_hea", dim=1, layout=("hwp:0",)),
            optimizer=OptimizerConfig(method="qng", max_iter=200, eta=10.0, tol=1e-12),
        )
        trace = run_vqe(cfg, theta0=[0.2])
        assert trace.final_energy == pytest.approx(1.46 - 0.037, abs=1e-4)

    def test_rows(self, heisenberg_cfg):
        heisenberg_cfg.optimizer = OptimizerConfig(method="gd", max_iter=3)
        rows = run_vqe(heisenberg_cfg).rows()
        assert len(rows) == 4
        assert list(rows[0])[:5] == ["iter", "energy", "stderr", "shots", "evals"]
        assert "theta5" in rows[0]

    def test_sampled_trace_tracks_shots(self, heisenberg_cfg):
        heisenberg_cfg.backend = "sampled"
        heisenberg_cfg.shots = 1000
        heisenberg_cfg.optimizer = OptimizerConfig(method="spsa", max_iter=5)
        trace = run_vqe(heisenberg_cfg)
        assert trace.shots == sorted(trace.shots)
        assert trace.shots[0] == 1000
        assert all(err > 0 for err in trace.stderrs[:1])

    def test_initial_theta_is_seeded(self, heisenberg_cfg):
        assert np.array_equal(initial_theta(heisenberg_cfg), initial_theta(heisenberg_cfg))
        assert initial_theta(heisenberg_cfg).shape == (6,)

    def test_exact_trace_respects_variational_bound(self, heisenberg_cfg):
        heisenberg_cfg.optimizer = OptimizerConfig(method="nelder_mead", max_iter=100)
        trace = run_vqe(heisenberg_cfg)
        assert min(trace.opt_trace.values) >= trace.exact_reference - 1e-9

    def test_full_run_is_deterministic(self, heisenberg_cfg):
        heisenberg_cfg.backend = "sampled"
        heisenberg_cfg.shots = 2000
        heisenberg_cfg.optimizer = OptimizerConfig(method="spsa", max_iter=10, seed=4)
        a = run_vqe(heisenberg_cfg)
        b = run_vqe(heisenberg_cfg)
        assert a.opt_trace.values == b.opt_trace.values
        assert a.stderrs == b.stderrs
        assert np.array_equal(a.final_theta, b.final_theta)

    def test_exact_energy_ignores_grouping(self, heisenberg_cfg):
        theta = initial_theta(heisenberg_cfg)
        energies = set()
        for grouping in ("qwc", "gc", "bell"):
            heisenberg_cfg.grouping = grouping
            energies.add(energy_at(heisenberg_cfg, theta)[0])
        assert len(energies) == 1

    def test_final_energy_is_a_fresh_estimate(self, heisenberg_cfg):
        heisenberg_cfg.backend = "sampled"
        heisenberg_cfg.shots = 2000
        heisenberg_cfg.optimizer = OptimizerConfig(method="spsa", max_iter=20, seed=2)
        trace = run_vqe(heisenberg_cfg)
        assert trace.best_estimate == min(trace.opt_trace.values)
        assert trace.final_stderr > 0
        op = build_hamiltonian(heisenberg_cfg.hamiltonian)
        exact = expectation_exact(final_state(heisenberg_cfg, trace.final_theta), op).real
        assert abs(trace.final_energy - exact) <= 5 * trace.final_stderr

    def test_exact_final_energy_matches_best(self, heisenberg_cfg):
        trace = run_vqe(heisenberg_cfg)
        assert trace.final_energy == trace.best_estimate
        assert trace.final_stderr == 0.0

    def test_lih_on_a_qudit(self):
        cfg = VQEConfig(
            HamiltonianSource("lih", row=0),
            AnsatzSpec("raw_qudit", dim=16),
            optimizer=OptimizerConfig(method="cobyla", max_iter=500),
        )
        trace = run_vqe(cfg)
        assert trace.final_energy - trace.exact_reference < 0.05
