import math

import numpy as np
import pytest

from photonic_vqe.exceptions import (
    DimensionMismatchError,
    ModeIndexError,
    NoiseStrengthError,
    NonUnitaryError,
    PhotonCountError,
    PostSelectionError,
)
from photonic_vqe.linopt import (
    FockState,
    MeshElement,
    bs_embed,
    clements_decompose,
    clements_layout,
    dual_rail_postselect,
    dump_mesh,
    dump_unitary,
    fock_basis,
    fock_evolve,
    fock_space_unitary,
    haar_unitary,
    hom_visibility,
    load_unitary,
    loss_fidelity,
    mesh_reconstruct,
    mesh_with_loss,
    pbd_cnot,
    permanent,
    rail_postselect,
    reck_decompose,
    reck_layout,
    visibility_to_noise,
    waveplate,
)

BALANCED_SPLITTER = np.array([[1, 1j], [1j, 1]]) / math.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


class TestMeshDecomposition:
    @pytest.mark.parametrize("size", [2, 3, 4, 5, 8])
    def test_clements_round_trip(self, rng, size):
        u = haar_unitary(size, rng)
        mesh = clements_decompose(u)
        assert len(mesh) == size * (size - 1) // 2
        assert np.max(np.abs(mesh_reconstruct(mesh) - u)) < 1e-10

    @pytest.mark.parametrize("size", [2, 3, 4, 6])
    def test_reck_round_trip(self, rng, size):
        u = haar_unitary(size, rng)
        mesh = reck_decompose(u)
        assert len(mesh) == size * (size - 1) // 2
        assert np.max(np.abs(mesh_reconstruct(mesh) - u)) < 1e-10

    def test_identity_and_permutation(self):
        for u in (np.eye(4), np.eye(4)[[1, 0, 3, 2]]):
            assert np.allclose(mesh_reconstruct(clements_decompose(u)), u, atol=1e-10)
            assert np.allclose(mesh_reconstruct(reck_decompose(u)), u, atol=1e-10)

    def test_layout_positions(self, rng):
        u = haar_unitary(6, rng)
        clements = clements_decompose(u)
        assert sorted((e.m, e.n) for e in clements.elements) == sorted(clements_layout(6))
        reck = reck_decompose(u)
        assert [(e.m, e.n) for e in reck.elements] == reck_layout(6)

    def test_non_unitary_input(self):
        with pytest.raises(NonUnitaryError):
            clements_decompose(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_mode_limit(self):
        with pytest.raises(DimensionMismatchError):
            reck_decompose(np.eye(9))

    def test_element_must_be_adjacent(self):
        with pytest.raises(ModeIndexError):
            MeshElement(0, 2, 0.1, 0.2)

    def test_embed_outside_mesh(self):
        with pytest.raises(ModeIndexError):
            bs_embed(MeshElement(3, 4, 0.1, 0.2), 4)


class TestLoss:
    def test_lossless_fidelity_is_one(self, rng):
        u = haar_unitary(5, rng)
        mesh = clements_decompose(u)
        assert loss_fidelity(u, mesh_with_loss(mesh, 1.0)) == pytest.approx(1.0)

    def test_uniform_loss_is_recoverable_for_balanced_mesh(self):
        # every mode of a 2-mode mesh crosses the single element
        u = BALANCED_SPLITTER
        mesh = clements_decompose(u)
        assert loss_fidelity(u, mesh_with_loss(mesh, 0.9)) == pytest.approx(1.0)

    def test_clements_beats_reck_under_loss(self):
        rng = np.random.default_rng(11)
        clements, reck = [], []
        for _ in range(20):
            u = haar_unitary(8, rng)
            clements.append(loss_fidelity(u, mesh_with_loss(clements_decompose(u), 0.98)))
            reck.append(loss_fidelity(u, mesh_with_loss(reck_decompose(u), 0.98)))
        assert np.mean(clements) >= np.mean(reck)

    def test_invalid_transmission(self, rng):
        mesh = clements_decompose(haar_unitary(3, rng))
        with pytest.raises(NoiseStrengthError):
            mesh_with_loss(mesh, 0.0)
        with pytest.raises(NoiseStrengthError):
            mesh_with_loss(mesh, 1.2)


class TestFockEvolution:
    def test_permanent(self):
        assert permanent(np.array([[1, 2], [3, 4]])) == pytest.approx(10)
        assert permanent(np.ones((3, 3))) == pytest.approx(6)
        assert permanent(np.zeros((0, 0))) == 1

    def test_hong_ou_mandel(self):
        amps = fock_evolve(BALANCED_SPLITTER, FockState((1, 1)))
        assert amps.probability((1, 1)) == pytest.approx(0.0, abs=1e-12)
        assert amps.probability((2, 0)) == pytest.approx(0.5)
        assert amps.probability((0, 2)) == pytest.approx(0.5)
        assert hom_visibility(BALANCED_SPLITTER) == pytest.approx(1.0)

    def test_visibility_to_noise(self):
        assert visibility_to_noise(0.9) == pytest.approx(0.1)
        with pytest.raises(NoiseStrengthError):
            visibility_to_noise(1.5)

    def test_probability_is_conserved(self, rng):
        u = haar_unitary(4, rng)
        amps = fock_evolve(u, FockState((1, 0, 1, 1)))
        assert amps.total_probability == pytest.approx(1.0)

    def test_lossy_transfer_loses_probability(self, rng):
        u = haar_unitary(3, rng) * math.sqrt(0.8)
        amps = fock_evolve(u, FockState((1, 1, 0)))
        assert amps.total_probability == pytest.approx(0.64)

    def test_matches_fock_space_unitary(self, rng):
        u = haar_unitary(3, rng)
        basis, big = fock_space_unitary(u, 2)
        assert np.allclose(big.conj().T @ big, np.eye(len(basis)), atol=1e-10)
        state = FockState((2, 0, 0))
        column = big[:, basis.index(state)]
        amps = fock_evolve(u, state)
        assert np.allclose([amps.amplitude(b.occupations) for b in basis], column)

    def test_fock_basis_size(self):
        assert len(fock_basis(4, 2)) == math.comb(5, 2)

    def test_photon_limit(self):
        with pytest.raises(PhotonCountError):
            FockState((2, 2))

    def test_mode_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            fock_evolve(np.eye(3), FockState((1, 0)))


class TestPostSelection:
    def test_dual_rail_identity(self):
        amps = fock_evolve(np.eye(4), FockState((1, 0, 0, 1)))
        state, success = dual_rail_postselect(amps, [(0, 1), (2, 3)])
        assert success == pytest.approx(1.0)
        assert np.allclose(state.amplitudes, [0, 1, 0, 0])

    def test_single_photon_qudit(self):
        u = np.eye(3)[[2, 0, 1]]
        amps = fock_evolve(u, FockState((1, 0, 0)))
        state, success = rail_postselect(amps, [(0, 1, 2)])
        assert success == pytest.approx(1.0)
        assert np.allclose(np.abs(state.amplitudes), [0, 1, 0])

    def test_bunched_outputs_are_discarded(self):
        u = np.kron(np.eye(2), BALANCED_SPLITTER)
        amps = fock_evolve(u, FockState((0, 0, 1, 1)))
        with pytest.raises(PostSelectionError):
            dual_rail_postselect(amps, [(0, 1), (2, 3)])

    def test_partial_success(self):
        u = np.eye(4, dtype=complex)
        u[1:3, 1:3] = BALANCED_SPLITTER
        amps = fock_evolve(u, FockState((1, 0, 1, 0)))
        state, success = dual_rail_postselect(amps, [(0, 1), (2, 3)])
        assert success == pytest.approx(0.5)
        assert np.allclose(np.abs(state.amplitudes), [1, 0, 0, 0])

    def test_photon_count_must_match_groups(self):
        amps = fock_evolve(np.eye(4), FockState((1, 0, 0, 0)))
        with pytest.raises(PhotonCountError):
            dual_rail_postselect(amps, [(0, 1), (2, 3)])

    def test_overlapping_groups(self):
        amps = fock_evolve(np.eye(3), FockState((1, 1, 0)))
        with pytest.raises(ModeIndexError):
            rail_postselect(amps, [(0, 1), (1, 2)])


class TestPolarization:
    @pytest.mark.parametrize("kind", ["HWP", "QWP"])
    def test_plates_are_unitary(self, kind):
        plate = waveplate(kind, 0.37)
        assert np.allclose(plate.conj().T @ plate, np.eye(2))

    def test_hwp_at_22_5_degrees_is_hadamard(self):
        plate = waveplate("hwp", math.pi / 8)
        assert np.allclose(plate, np.array([[1, 1], [1, -1]]) / math.sqrt(2))

    def test_unknown_plate(self):
        with pytest.raises(ValueError):
            waveplate("fwp", 0.1)

    def test_pbd_cnot(self):
        assert np.allclose(pbd_cnot() @ np.array([0, 0, 1, 0]), [0, 0, 0, 1])


class TestFiles:
    def test_unitary_file_round_trip(self, tmp_path, rng):
        u = haar_unitary(3, rng)
        path = tmp_path / "u.txt"
        dump_unitary(u, path)
        assert np.allclose(load_unitary(path), u)

    def test_mesh_file(self, tmp_path, rng):
        mesh = clements_decompose(haar_unitary(3, rng))
        path = tmp_path / "mesh.txt"
        dump_mesh(mesh, path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(mesh) + 1
        assert lines[-1].startswith("D: ")
