# config.py
import configparser
import multiprocessing
import os
from dataclasses import fields
from pathlib import Path

from loguru import logger

from photonic_vqe.driver import AnsatzSpec, HamiltonianSource, VQEConfig
from photonic_vqe.exceptions import ConfigError, PhotonicVQEError
from photonic_vqe.noise_mitigation import NoiseSpec
from photonic_vqe.optimizers import OptimizerConfig
from photonic_vqe.utils import read_file_with_fallback

MAX_WORKERS = 4
WORKERS_ENV = "PHOTONIC_VQE_WORKERS"


def get_total_threads():
    return multiprocessing.cpu_count()


total_threads = get_total_threads()

if total_threads < MAX_WORKERS:
    MAX_WORKERS = total_threads


def resolve_workers(requested=None):
    """
    Number of sweep workers.

    Uses ``requested``, else ``PHOTONIC_VQE_WORKERS``, else ``MAX_WORKERS``,
    always capped by the CPU count.

    Raises:
        ConfigError: If the environment value is not a positive integer.
    """
    if requested is None:
        raw = os.environ.get(WORKERS_ENV)
        if raw is None:
            requested = MAX_WORKERS
        else:
            try:
                requested = int(raw)
            except ValueError as e:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
    if requested < 1:
        raise ConfigError(f"worker count must be positive, got {requested}")
    workers = min(requested, get_total_threads())
    logger.info(f"Total available threads: {get_total_threads()} -> using {workers} workers")
    return workers


_HAMILTONIAN_KEYS = ("model", "path", "row")
_OPTIMIZER_FIELDS = {f.name: f.type for f in fields(OptimizerConfig)}


def _parse_scalar(text):
    try:
        return float(text)
    except ValueError:
        return text


def _parse_noise(text):
    """``white:0.1, dephasing:0.05@0+1`` -> NoiseSpec list."""
    specs = []
    for item in (tok.strip() for tok in text.split(",")):
        if not item:
            continue
        body, _, where = item.partition("@")
        kind, sep, strength = body.partition(":")
        if not sep:
            raise ConfigError(f"noise entry {item!r} needs the form kind:strength[@q+q]")
        targets = tuple(int(q) for q in where.split("+")) if where else None
        specs.append(NoiseSpec(kind.strip(), float(strength), targets))
    return specs


def _format_noise(specs):
    items = []
    for n in specs:
        item = f"{n.kind}:{n.strength!r}"
        if n.targets is not None:
            item += "@" + "+".join(str(q) for q in n.targets)
        items.append(item)
    return ", ".join(items)


def _parse_groups(text):
    """``0-1, 2-3`` -> ((0, 1), (2, 3))."""
    return tuple(tuple(int(m) for m in g.split("-")) for g in text.split(",") if g.strip())


def _optimizer_from(section):
    kwargs = {}
    for key, raw in section.items():
        if key == "method" or key == "qng_metric":
            kwargs[key] = raw.strip()
        elif key in ("max_iter", "window", "swarm_size", "seed"):
            kwargs[key] = int(raw)
        elif key in _OPTIMIZER_FIELDS:
            kwargs[key] = float(raw)
        else:
            raise ConfigError(f"unknown optimizer key {key!r}")
    return OptimizerConfig(**kwargs)


def parse_vqe_config(text, source="<string>"):
    """
    Build a :class:`VQEConfig` from INI text.

    Sections: ``[hamiltonian]`` (required ``model``), ``[ansatz]``,
    ``[backend]``, ``[noise]``, ``[mitigation]``, ``[optimizer]``, ``[run]``.
    """
    config = configparser.ConfigParser()
    config.optionxform = str
    try:
        config.read_string(text, source=str(source))
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {source}: {e}") from e
    if "hamiltonian" not in config or "model" not in config["hamiltonian"]:
        raise ConfigError(f"{source}: [hamiltonian] model is required")
    try:
        h = config["hamiltonian"]
        params = {k: _parse_scalar(v) for k, v in h.items() if k not in _HAMILTONIAN_KEYS}
        hamiltonian = HamiltonianSource(
            model=h["model"].strip().lower(),
            params=params,
            path=h.get("path") or None,
            row=h.getint("row", 0),
        )

        a = config["ansatz"] if "ansatz" in config else {}
        family = a.get("family", "raw_qudit").strip()
        default_dim = hamiltonian_dim_hint(hamiltonian) if family == "raw_qudit" else 2
        layout = tuple(tok.strip() for tok in a.get("layout", "").split(",") if tok.strip())
        ansatz = AnsatzSpec(
            family=family,
            dim=int(a.get("dim", default_dim)),
            layout=layout,
            modes=int(a.get("modes", 0)),
            rail_groups=_parse_groups(a["rail_groups"]) if "rail_groups" in a else None,
            photons=int(a.get("photons", 0)),
            reference=int(a.get("reference", 0)),
            orbital_count=int(a.get("orbital_count", 0)),
        )

        b = config["backend"] if "backend" in config else {}
        m = config["mitigation"] if "mitigation" in config else {}
        noise = _parse_noise(config["noise"].get("channels", "")) if "noise" in config else []
        optimizer = _optimizer_from(config["optimizer"]) if "optimizer" in config else OptimizerConfig()
        run = config["run"] if "run" in config else {}
        epsilons = tuple(float(e) for e in m.get("epsilons", "0.1, 0.2").split(","))
        cfg = VQEConfig(
            hamiltonian=hamiltonian,
            ansatz=ansatz,
            backend=b.get("kind", "exact").strip(),
            shots=int(b.get("shots", 10000)),
            readout_error=float(b.get("readout_error", 0.0)),
            grouping=b.get("grouping", "qwc").strip(),
            shot_allocation=b.get("shot_allocation", "equal").strip(),
            noise=noise,
            mitigation=m.get("kind", "none").strip(),
            zne_epsilons=epsilons,
            calibration_shots=int(m.get("calibration_shots", 100000)),
            optimizer=optimizer,
            seed=int(run.get("seed", 42)),
        )
    except ConfigError:
        raise
    except (PhotonicVQEError, ValueError, KeyError) as e:
        raise ConfigError(f"{source}: {e}") from e
    return cfg.validate()


def hamiltonian_dim_hint(source):
    """Default qudit dimension for a raw_qudit ansatz on the named model."""
    return {"lih": 16, "exciton": 2}.get(source.model, 4)


def load_vqe_config(file):
    """
    Read a VQE configuration file.

    Args:
        file (str or Path): Path to the INI file.

    Returns:
        VQEConfig: The validated configuration.
    """
    logger.info(f"Loading config from {file}")
    if not os.path.exists(file):
        raise ConfigError(f"config file {file} does not exist")
    return parse_vqe_config(read_file_with_fallback(file), source=file)


def vqe_config_to_ini(cfg):
    config = configparser.ConfigParser()
    config.optionxform = str
    h = cfg.hamiltonian
    config["hamiltonian"] = {"model": h.model, "row": str(h.row)}
    if h.path:
        config["hamiltonian"]["path"] = str(h.path)
    for key, value in h.params.items():
        config["hamiltonian"][key] = str(value)
    a = cfg.ansatz
    config["ansatz"] = {
        "family": a.family,
        "dim": str(a.dim),
        "modes": str(a.modes),
        "photons": str(a.photons),
        "reference": str(a.reference),
        "orbital_count": str(a.orbital_count),
    }
    if a.layout:
        config["ansatz"]["layout"] = ", ".join(a.layout)
    if a.rail_groups is not None:
        config["ansatz"]["rail_groups"] = ", ".join("-".join(str(m) for m in g) for g in a.rail_groups)
    config["backend"] = {
        "kind": cfg.backend,
        "shots": str(cfg.shots),
        "readout_error": repr(cfg.readout_error),
        "grouping": cfg.grouping,
        "shot_allocation": cfg.shot_allocation,
    }
    config["noise"] = {"channels": _format_noise(cfg.noise)}
    config["mitigation"] = {
        "kind": cfg.mitigation,
        "epsilons": ", ".join(repr(float(e)) for e in cfg.zne_epsilons),
        "calibration_shots": str(cfg.calibration_shots),
    }
    config["optimizer"] = {f.name: str(getattr(cfg.optimizer, f.name)) for f in fields(OptimizerConfig)}
    config["run"] = {"seed": str(cfg.seed)}
    return config


def write_vqe_config(cfg, file):
    """
    Write a configuration back to an INI file.

    Args:
        cfg (VQEConfig): The configuration.
        file (str or Path): Destination path.
    """
    logger.info(f"Writing config for {cfg.hamiltonian.model} to {file}")
    with open(file, "w") as configfile:
        vqe_config_to_ini(cfg).write(configfile)
    return Path(file)


PRESETS = {
    "schwinger-exact": """
[hamiltonian]
model = schwinger
m = 0.0

[ansatz]
family = raw_qudit
dim = 4

[optimizer]
method = cobyla
max_iter = 300
""",
    "schwinger-zne": """
[hamiltonian]
model = schwinger
m = 0.0

[ansatz]
family = raw_qudit
dim = 4

[noise]
channels = white:0.1

[mitigation]
kind = zne
epsilons = 0.1, 0.2

[optimizer]
method = cobyla
max_iter = 300
""",
    "factoring-sampled": """
[hamiltonian]
model = factoring
n = 35

[ansatz]
family = waveplate_hea
dim = 2
layout = hwp:0, hwp:1

[backend]
kind = sampled
shots = 10000
grouping = qwc

[optimizer]
method = nelder_mead
max_iter = 200
nm_step = 0.3
""",
    "h2-uccsd": """
[hamiltonian]
model = h2
bond_length = 0.735

[ansatz]
family = uccsd
reference = 2
orbital_count = 2

[optimizer]
method = cobyla
max_iter = 200
""",
    "hehplus-qudit": """
[hamiltonian]
model = hehplus
row = 0

[ansatz]
family = raw_qudit
dim = 4

[optimizer]
method = cobyla
max_iter = 500
""",
    "heisenberg-bell": """
[hamiltonian]
model = heisenberg

[ansatz]
family = raw_qudit
dim = 4

[backend]
kind = sampled
shots = 10000
grouping = bell

[optimizer]
method = nelder_mead
max_iter = 300
""",
    "lih-qudit": """
[hamiltonian]
model = lih
row = 0

[ansatz]
family = raw_qudit
dim = 16

[optimizer]
method = cobyla
max_iter = 500
""",
}


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_vqe_config(PRESETS[name], source=f"preset:{name}")
