import json
from unittest.mock import patch

import pytest
from loguru import logger

from photonic_vqe.__main__ import dispatch, setup_logging
from photonic_vqe.config import (
    PRESETS,
    _parse_noise,
    load_vqe_config,
    parse_vqe_config,
    preset_config,
    resolve_workers,
    write_vqe_config,
)
from photonic_vqe.exceptions import ConfigError
from photonic_vqe.noise_mitigation import NoiseSpec
from photonic_vqe.utils import (
    RunManifest,
    derive_seeds,
    emit_curve,
    read_file_with_fallback,
)

SAMPLED_CONFIG = """
[hamiltonian]
model = heisenberg
w1 = 1.0
w2 = 0.5

[ansatz]
family = raw_qudit
dim = 4

[backend]
kind = sampled
shots = 2000
grouping = gc
shot_allocation = weighted

[noise]
channels = white:0.1, dephasing:0.05@0+1

[mitigation]
kind = zne
epsilons = 0.1, 0.3

[optimizer]
method = spsa
max_iter = 40
spsa_a = 0.3
spsa_A = 5
seed = 9

[run]
seed = 7
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "vqe.ini"
    path.write_text(SAMPLED_CONFIG)
    return path


class TestConfig:
    def test_parse_sections(self):
        cfg = parse_vqe_config(SAMPLED_CONFIG)
        assert cfg.hamiltonian.model == "heisenberg"
        assert cfg.hamiltonian.params == {"w1": 1.0, "w2": 0.5}
        assert cfg.ansatz.dim == 4
        assert cfg.backend == "sampled"
        assert cfg.shots == 2000
        assert cfg.grouping == "gc"
        assert cfg.shot_allocation == "weighted"
        assert cfg.mitigation == "zne"
        assert cfg.zne_epsilons == (0.1, 0.3)
        assert cfg.optimizer.method == "spsa"
        assert cfg.optimizer.spsa_a == 0.3
        assert cfg.optimizer.spsa_A == 5.0
        assert cfg.optimizer.seed == 9
        assert cfg.seed == 7

    def test_defaults(self):
        cfg = parse_vqe_config("[hamiltonian]\nmodel = schwinger\n")
        assert cfg.backend == "exact"
        assert cfg.ansatz.family == "raw_qudit"
        assert cfg.ansatz.dim == 4
        assert cfg.optimizer.method == "cobyla"
        assert cfg.noise == []

    def test_noise_entries(self):
        specs = _parse_noise("white:0.1, dephasing:0.05@0+1")
        assert specs == [NoiseSpec("white", 0.1), NoiseSpec("dephasing", 0.05, (0, 1))]
        with pytest.raises(ConfigError):
            _parse_noise("white")

    @pytest.mark.parametrize(
        "text",
        [
            "[ansatz]\nfamily = raw_qudit\n",
            "[hamiltonian]\nmodel = helium\n",
            "[hamiltonian]\nmodel = schwinger\n[optimizer]\nmethod = bfgs\n",
            "[hamiltonian]\nmodel = schwinger\n[optimizer]\nlearning_rate = 0.1\n",
            "[hamiltonian]\nmodel = schwinger\n[backend]\nkind = hardware\n",
            "[hamiltonian]\nmodel = schwinger\n[mitigation]\nkind = zne\n",
            "not an ini file",
        ],
    )
    def test_invalid_config(self, text):
        with pytest.raises(ConfigError):
            parse_vqe_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_vqe_config(tmp_path / "missing.ini")

    def test_write_and_reload(self, config_file, tmp_path):
        cfg = load_vqe_config(config_file)
        out = write_vqe_config(cfg, tmp_path / "copy.ini")
        again = load_vqe_config(out)
        assert again.optimizer == cfg.optimizer
        assert again.noise == cfg.noise
        assert again.zne_epsilons == cfg.zne_epsilons
        assert again.hamiltonian == cfg.hamiltonian
        assert again.ansatz == cfg.ansatz
        assert again.seed == cfg.seed

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_parse(self, name):
        assert preset_config(name).hamiltonian.model

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_config("hydrogen")


class TestWorkers:
    def test_explicit_request_is_capped(self):
        with patch("photonic_vqe.config.get_total_threads", return_value=2):
            assert resolve_workers(8) == 2
            assert resolve_workers(1) == 1

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("PHOTONIC_VQE_WORKERS", "1")
        assert resolve_workers() == 1

    @pytest.mark.parametrize("value", ["many", "0", "-2"])
    def test_invalid_environment(self, monkeypatch, value):
        monkeypatch.setenv("PHOTONIC_VQE_WORKERS", value)
        with pytest.raises(ConfigError):
            resolve_workers()


class TestUtilities:
    def test_emit_curve(self, tmp_path):
        path = emit_curve([{"x": 1, "y": 0.5}, {"x": 2, "y": 1 / 3}], tmp_path / "curve.csv")
        assert path.read_bytes() == b"x,y\n1,0.5\n2,0.333333333333\n"

    def test_emit_curve_rejects_ragged_rows(self, tmp_path):
        with pytest.raises(ValueError):
            emit_curve([{"x": 1}, {"y": 2}], tmp_path / "bad.csv")

    def test_emit_curve_empty_table(self, tmp_path):
        path = emit_curve([], tmp_path / "empty.csv", ["a", "b"])
        assert path.read_text() == "a,b\n"

    def test_read_file_with_fallback(self, tmp_path):
        path = tmp_path / "latin.txt"
        path.write_bytes("# Ångström\n".encode("latin-1"))
        assert "ngstr" in read_file_with_fallback(path)

    def test_derive_seeds(self):
        assert derive_seeds(42, 3) == derive_seeds(42, 3)
        assert len(set(derive_seeds(42, 5))) == 5
        assert derive_seeds(42, 2) != derive_seeds(43, 2)

    def test_manifest(self, tmp_path):
        path = RunManifest("mesh", None, 3, str(tmp_path), arguments={"modes": 4}).write()
        payload = json.loads(path.read_text())
        assert payload["command"] == "mesh"
        assert payload["seed"] == 3
        assert payload["arguments"] == {"modes": 4}
        assert "tool_version" in payload


class TestLogging:
    def test_setup_logging_adds_two_sinks(self, tmp_path):
        with patch.object(logger, "add") as mock_add:
            log_dir = setup_logging(tmp_path)
        assert log_dir == tmp_path / "logs"
        assert log_dir.is_dir()
        assert mock_add.call_count == 2
        assert mock_add.call_args_list[1].kwargs["level"] == "ERROR"


class TestDispatch:
    def test_version(self, capsys):
        assert dispatch(["--version"]) == 0
        assert "photonic-vqe" in capsys.readouterr().out

    def test_missing_command(self):
        assert dispatch([]) == 1

    def test_unknown_option(self):
        assert dispatch(["mesh", "--size", "3"]) == 1

    def test_missing_config_file(self, tmp_path):
        assert dispatch(["run", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 1

    def test_bad_sweep_steps(self, tmp_path):
        assert dispatch(["schwinger", "--steps", "0", "--out", str(tmp_path)]) == 1

    def test_runtime_failure(self, tmp_path):
        with patch("photonic_vqe.experiments.calibrate_experiment", side_effect=RuntimeError("boom")):
            assert dispatch(["calibrate", "--out", str(tmp_path)]) == 2

    def test_calibrate(self, tmp_path):
        code = dispatch(["calibrate", "--qubits", "1", "--shots", "2000", "--seed", "5", "--out", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "confusion.csv").read_text().splitlines()
        assert len(lines) == 2
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "calibrate"
        assert manifest["seed"] == 5

    def test_mesh(self, tmp_path):
        code = dispatch(
            ["mesh", "--modes", "3", "--samples", "2", "--workers", "1", "--out", str(tmp_path)]
        )
        assert code == 0
        lines = (tmp_path / "mesh.csv").read_text().splitlines()
        assert lines[0] == "sample,roundtrip_clements,fidelity_clements,roundtrip_reck,fidelity_reck"
        assert len(lines) == 3

    def test_run_preset(self, tmp_path):
        assert dispatch(["run", "--preset", "schwinger-exact", "--out", str(tmp_path)]) == 0
        result = json.loads((tmp_path / "result.json").read_text())
        assert result["final_energy"] == pytest.approx(result["exact_reference"], abs=1e-3)
        assert result["best_estimate"] == pytest.approx(result["final_energy"])
        assert result["final_stderr"] == 0.0
        assert (tmp_path / "trace.csv").read_text().startswith("iter,energy,stderr,shots,evals,theta0")
        assert load_vqe_config(tmp_path / "config.ini").optimizer.method == "cobyla"
        assert not (tmp_path / "groups.txt").exists()

    def test_run_sampled_writes_groups(self, config_file, tmp_path):
        assert dispatch(["run", "--config", str(config_file), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "groups.txt").read_text().startswith("group 0 (gc")
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config_path"] == str(config_file)

    def test_same_seed_gives_identical_csv(self, tmp_path):
        argv = ["schwinger", "--steps", "2", "--max-iter", "40", "--workers", "2", "--seed", "3"]
        assert dispatch(argv + ["--out", str(tmp_path / "a")]) == 0
        assert dispatch(argv + ["--out", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "schwinger.csv").read_bytes()
        assert first == (tmp_path / "b" / "schwinger.csv").read_bytes()
        assert first.startswith(b"m,E_vqe,E_exact\n")
