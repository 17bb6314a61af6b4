# experiments.py
"""
Parameter sweeps behind the command-line subcommands.

Sweep points run on a thread pool, each with a seed derived from the
master seed, and rows come back in sweep order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from loguru import logger

from photonic_vqe.config import resolve_workers
from photonic_vqe.driver import (
    AnsatzSpec,
    HamiltonianSource,
    VQEConfig,
    build_hamiltonian,
    energy_at,
    final_state,
    run_vqe,
)
from photonic_vqe.hamiltonians import (
    bundled_coefficients,
    decode_factors,
    load_coefficients,
    schwinger_exact_levels,
)
from photonic_vqe.linopt import (
    clements_decompose,
    haar_unitary,
    loss_fidelity,
    mesh_reconstruct,
    mesh_with_loss,
    reck_decompose,
)
from photonic_vqe.noise_mitigation import (
    NoiseSpec,
    bit_flip_confusion,
    calibrate_confusion,
    noisy_measure_fn,
)
from photonic_vqe.optimizers import OptimizerConfig
from photonic_vqe.qstate import basis_probabilities
from photonic_vqe.utils import derive_seeds

DISSOCIATION_MODELS = {"h2": "H2", "hehplus": "HeH+", "lih": "LiH"}


def run_points(task, points, seed, workers=None):
    """
    Evaluate ``task(point, seed)`` for every point in parallel.

    Returns:
        list: Results in the order of ``points``.
    """
    points = list(points)
    seeds = derive_seeds(seed, len(points))
    workers = resolve_workers(workers)
    guarded = logger.catch(task, reraise=True)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(guarded, points, seeds))


def dissociation_ansatz(model):
    if model == "h2":
        return AnsatzSpec("uccsd", reference=2, orbital_count=2)
    if model == "hehplus":
        return AnsatzSpec("raw_qudit", dim=4)
    return AnsatzSpec("raw_qudit", dim=16)


def dissociation_sweep(model, seed, path=None, max_iter=500, workers=None):
    """
    Ground-state energy curve over the rows of a coefficient table.

    Args:
        model (str): ``h2``, ``hehplus`` or ``lih``.
        seed (int): Master seed.
        path (str, optional): Coefficient table; the bundled one otherwise.
        max_iter (int): Optimizer iteration cap per row.
        workers (int, optional): Thread count.

    Returns:
        list[dict]: ``bond_length, E_vqe, E_exact, error`` per row.
    """
    if model not in DISSOCIATION_MODELS:
        raise ValueError(f"unknown dissociation model {model!r}; expected one of {sorted(DISSOCIATION_MODELS)}")
    table_model = DISSOCIATION_MODELS[model]
    table = load_coefficients(path, table_model) if path else bundled_coefficients(table_model)
    ansatz = dissociation_ansatz(model)

    def point(row, point_seed):
        source = HamiltonianSource(model, path=path, row=row)
        cfg = VQEConfig(
            source,
            ansatz,
            optimizer=OptimizerConfig(method="cobyla", max_iter=max_iter, seed=point_seed % 2**32),
            seed=point_seed,
        )
        trace = run_vqe(cfg)
        bond = table.rows[row].bond_length
        logger.info(f"{table_model} R={bond:.3f}: E_vqe={trace.final_energy:.6f}, E_exact={trace.exact_reference:.6f}")
        return {
            "bond_length": bond,
            "E_vqe": trace.final_energy,
            "E_exact": trace.exact_reference,
            "error": trace.final_energy - trace.exact_reference,
        }

    return run_points(point, range(len(table)), seed, workers)


def schwinger_sweep(m_values, seed, backend="exact", shots=10000, noise=None, max_iter=300, workers=None):
    """
    Schwinger-model ground energy versus mass.

    With ``noise=(eps1, eps2)`` every point runs under white noise with
    zero-noise extrapolation, and the raw energy at ``eps1`` is reported
    alongside.

    Returns:
        list[dict]: ``m, E_vqe, E_exact`` (plus ``E_raw`` under noise).
    """

    def point(m, point_seed):
        cfg = VQEConfig(
            HamiltonianSource("schwinger", {"m": float(m)}),
            AnsatzSpec("raw_qudit", dim=4),
            backend=backend,
            shots=shots,
            optimizer=OptimizerConfig(method="cobyla", max_iter=max_iter, seed=point_seed % 2**32),
            seed=point_seed,
        )
        if noise:
            cfg = replace(
                cfg,
                noise=[NoiseSpec("white", float(noise[0]))],
                mitigation="zne",
                zne_epsilons=tuple(float(e) for e in noise),
            )
        trace = run_vqe(cfg)
        row = {"m": float(m), "E_vqe": trace.final_energy, "E_exact": schwinger_exact_levels(m)[0]}
        if noise:
            raw_cfg = replace(cfg, mitigation="none")
            row["E_raw"] = energy_at(raw_cfg, trace.final_theta)[0]
        logger.info(f"Schwinger m={m:+.2f}: E_vqe={row['E_vqe']:.6f}, E_exact={row['E_exact']:.6f}")
        return row

    return run_points(point, m_values, seed, workers)


def factor_experiment(n=35, shots=10000, seed=42, max_iter=200):
    """
    Factor ``n`` by sampled VQE on the two-qubit factoring Hamiltonian.

    Returns:
        dict: JSON-ready summary with the exact ground bitstrings, the
        dominant VQE bitstring and the decoded factors.
    """
    cfg = VQEConfig(
        HamiltonianSource("factoring", {"n": n}),
        AnsatzSpec("waveplate_hea", dim=2, layout=("hwp:0", "hwp:1")),
        backend="sampled",
        shots=shots,
        optimizer=OptimizerConfig(method="nelder_mead", max_iter=max_iter, nm_step=0.3, seed=seed),
        seed=seed,
    )
    op = build_hamiltonian(cfg.hamiltonian)
    diagonal = np.real(np.diag(op.matrix))
    ground = [format(i, "02b") for i in np.flatnonzero(np.isclose(diagonal, diagonal.min()))]
    trace = run_vqe(cfg)
    probs = basis_probabilities(final_state(cfg, trace.final_theta))
    best = format(int(np.argmax(probs)), "02b")
    ground_mass = float(sum(probs[int(b, 2)] for b in ground))
    logger.info(f"Factoring {n}: VQE bitstring {best} -> {decode_factors(best)}, ground mass {ground_mass:.4f}")
    return {
        "n": n,
        "shots": shots,
        "ground_bitstrings": ground,
        "ground_energy": float(diagonal.min()),
        "vqe_bitstring": best,
        "final_energy": trace.final_energy,
        "best_estimate": trace.best_estimate,
        "ground_mass": ground_mass,
        "probabilities": {format(i, "02b"): float(p) for i, p in enumerate(probs)},
        "factors": list(decode_factors(best)),
    }


def mesh_study(modes, samples, transmission, seed, workers=None):
    """
    Round-trip error and lossy fidelity of both mesh layouts on Haar-random unitaries.

    Returns:
        list[dict]: One row per sample.
    """

    def point(sample, point_seed):
        u = haar_unitary(modes, np.random.default_rng(point_seed))
        row = {"sample": sample}
        for name, decompose in (("clements", clements_decompose), ("reck", reck_decompose)):
            mesh = decompose(u)
            row[f"roundtrip_{name}"] = float(np.linalg.norm(mesh_reconstruct(mesh) - u))
            row[f"fidelity_{name}"] = loss_fidelity(u, mesh_with_loss(mesh, transmission))
        return row

    rows = run_points(point, range(samples), seed, workers)
    if rows:
        mean_c = np.mean([r["fidelity_clements"] for r in rows])
        mean_r = np.mean([r["fidelity_reck"] for r in rows])
        logger.info(f"Mesh study M={modes}, t={transmission}: mean fidelity Clements {mean_c:.6f}, Reck {mean_r:.6f}")
    return rows


def calibrate_experiment(qubits, flip_probability, shots, seed):
    """Calibrate a confusion matrix against injected symmetric bit flips."""
    truth = bit_flip_confusion(flip_probability, qubits)
    return calibrate_confusion(noisy_measure_fn(truth), range(2**qubits), shots, seed)
