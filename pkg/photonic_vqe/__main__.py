# __main__.py
import argparse
import os
import sys
from pathlib import Path

import numpy as np
from loguru import logger

from photonic_vqe import __version__
from photonic_vqe.exceptions import ConfigError

HOME_ENV = "PHOTONIC_VQE_HOME"


def app_home():
    return Path(os.environ.get(HOME_ENV, Path.home() / ".photonic-vqe"))


def setup_logging(home=None):
    """Add the rotating stdout/stderr file sinks under ``<home>/logs``."""
    log_dir = Path(home or app_home()) / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    # Add a new handler for stdout logs
    logger.add(
        log_dir / "stdout.log",
        format="{time} {level} {message}",
        level="DEBUG",
        rotation="10 MB",
    )
    # Add a new handler for error logs
    logger.add(log_dir / "stderr.log", level="ERROR", rotation="10 MB")
    return log_dir


class CommandLineParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as :class:`ConfigError`."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    parser = CommandLineParser(
        prog="photonic-vqe",
        description="Simulate photonic variational quantum eigensolver experiments",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
        help="Show the version number and exit",
    )
    common = CommandLineParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="Master seed (default: 42)")
    common.add_argument("--out", default=".", help="Output directory (default: current directory)")
    common.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Sweep worker threads (default: PHOTONIC_VQE_WORKERS or the CPU-capped maximum)",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CommandLineParser)

    p = sub.add_parser("dissociation", parents=[common], help="Ground-state energy versus bond length")
    p.add_argument("--model", choices=["h2", "hehplus", "lih"], default="h2")
    p.add_argument("--table", default=None, help="Coefficient table (default: bundled)")
    p.add_argument("--max-iter", type=int, default=500)

    p = sub.add_parser("schwinger", parents=[common], help="Schwinger-model mass sweep")
    p.add_argument("--m-min", type=float, default=-2.0)
    p.add_argument("--m-max", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=9)
    p.add_argument("--backend", choices=["exact", "sampled"], default="exact")
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument(
        "--zne",
        type=float,
        nargs="+",
        default=None,
        metavar="EPS",
        help="White-noise strengths for zero-noise extrapolation",
    )
    p.add_argument("--max-iter", type=int, default=300)

    p = sub.add_parser("factor", parents=[common], help="Factor an integer with sampled VQE")
    p.add_argument("--n", type=int, default=35)
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--max-iter", type=int, default=200)

    p = sub.add_parser("mesh", parents=[common], help="Mesh round-trip and loss study")
    p.add_argument("--modes", type=int, default=8)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--transmission", type=float, default=0.99)
    p.add_argument("--unitary", default=None, help="Decompose this unitary file instead of sampling")

    p = sub.add_parser("calibrate", parents=[common], help="Calibrate a readout confusion matrix")
    p.add_argument("--qubits", type=int, default=2)
    p.add_argument("--flip", type=float, default=0.1, help="Injected bit-flip probability")
    p.add_argument("--shots", type=int, default=100000)

    p = sub.add_parser("run", parents=[common], help="Run a VQE configuration file")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", default=None, help="INI configuration file")
    source.add_argument("--preset", default=None, help="Named preset configuration")
    return parser


def _output_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, out, config_path=None):
    from photonic_vqe.utils import RunManifest

    arguments = {k: v for k, v in vars(args).items() if k not in ("command", "seed", "out")}
    RunManifest(args.command, config_path, args.seed, str(out), arguments=arguments).write(out)


def cmd_dissociation(args):
    from photonic_vqe.experiments import dissociation_sweep
    from photonic_vqe.utils import emit_curve

    out = _output_dir(args)
    rows = dissociation_sweep(args.model, args.seed, args.table, args.max_iter, args.workers)
    emit_curve(rows, out / f"dissociation_{args.model}.csv", ["bond_length", "E_vqe", "E_exact", "error"])
    _manifest(args, out, args.table)


def cmd_schwinger(args):
    from photonic_vqe.experiments import schwinger_sweep
    from photonic_vqe.utils import emit_curve

    if args.steps < 1:
        raise ConfigError("--steps must be at least 1")
    if args.zne is not None and len(set(args.zne)) < 2:
        raise ConfigError("--zne needs at least two distinct strengths")
    out = _output_dir(args)
    masses = np.linspace(args.m_min, args.m_max, args.steps)
    rows = schwinger_sweep(masses, args.seed, args.backend, args.shots, args.zne, args.max_iter, args.workers)
    columns = ["m", "E_vqe", "E_exact"] + (["E_raw"] if args.zne else [])
    emit_curve(rows, out / "schwinger.csv", columns)
    _manifest(args, out)


def cmd_factor(args):
    from photonic_vqe.experiments import factor_experiment
    from photonic_vqe.utils import write_json

    out = _output_dir(args)
    result = factor_experiment(args.n, args.shots, args.seed, args.max_iter)
    write_json(result, out / "factor.json")
    _manifest(args, out)


def cmd_mesh(args):
    from photonic_vqe.experiments import mesh_study
    from photonic_vqe.linopt import clements_decompose, dump_mesh, load_unitary, reck_decompose
    from photonic_vqe.utils import emit_curve

    out = _output_dir(args)
    if args.unitary:
        u = load_unitary(args.unitary)
        dump_mesh(clements_decompose(u), out / "clements_mesh.txt")
        dump_mesh(reck_decompose(u), out / "reck_mesh.txt")
    else:
        rows = mesh_study(args.modes, args.samples, args.transmission, args.seed, args.workers)
        columns = ["sample", "roundtrip_clements", "fidelity_clements", "roundtrip_reck", "fidelity_reck"]
        emit_curve(rows, out / "mesh.csv", columns)
    _manifest(args, out, args.unitary)


def cmd_calibrate(args):
    from photonic_vqe.experiments import calibrate_experiment
    from photonic_vqe.noise_mitigation import confusion_to_csv

    out = _output_dir(args)
    confusion = calibrate_experiment(args.qubits, args.flip, args.shots, args.seed)
    confusion_to_csv(confusion, out / "confusion.csv")
    _manifest(args, out)


def cmd_run(args):
    from dataclasses import replace

    from photonic_vqe.config import load_vqe_config, preset_config, write_vqe_config
    from photonic_vqe.driver import build_hamiltonian, run_vqe
    from photonic_vqe.measurement import bell_groups, gc_groups, qwc_groups, write_group_report
    from photonic_vqe.utils import emit_curve, write_json

    cfg = load_vqe_config(args.config) if args.config else preset_config(args.preset)
    cfg = replace(cfg, seed=args.seed)
    out = _output_dir(args)
    trace = run_vqe(cfg)
    emit_curve(trace.rows(), out / "trace.csv")
    if cfg.backend == "sampled":
        grouping = {"qwc": qwc_groups, "gc": gc_groups, "bell": bell_groups}[cfg.grouping]
        write_group_report(grouping(build_hamiltonian(cfg.hamiltonian)), out / "groups.txt")
    write_vqe_config(cfg, out / "config.ini")
    write_json(
        {
            "final_energy": trace.final_energy,
            "final_stderr": trace.final_stderr,
            "best_estimate": trace.best_estimate,
            "exact_reference": trace.exact_reference,
            "final_theta": [float(t) for t in trace.final_theta],
            "iterations": len(trace.records) - 1,
            "shots": trace.shots[-1] if trace.shots else 0,
        },
        out / "result.json",
    )
    _manifest(args, out, args.config or f"preset:{args.preset}")


COMMANDS = {
    "dissociation": cmd_dissociation,
    "schwinger": cmd_schwinger,
    "factor": cmd_factor,
    "mesh": cmd_mesh,
    "calibrate": cmd_calibrate,
    "run": cmd_run,
}


def dispatch(argv):
    """
    Parse ``argv`` and run one subcommand.

    Returns:
        int: 0 on success, 1 on a usage or configuration error, 2 on any
        other failure.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logger.debug(f"Command-line arguments: {args}")
        COMMANDS[args.command](args)
    except SystemExit as e:
        return int(e.code or 0)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"Command failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    logger.info(f"{args.command} completed")
    return 0


@logger.catch
def main():
    """
    Entry point of the application.

    Subcommands: ``dissociation``, ``schwinger``, ``factor``, ``mesh``,
    ``calibrate`` and ``run``. Every subcommand takes ``--seed`` and
    ``--out`` and writes a ``manifest.json`` next to its outputs.

    The function logs its progress to two separate log files: one for standard output and one for errors.
    """
    setup_logging()
    logger.info("Starting photonic-vqe")
    sys.exit(dispatch(sys.argv[1:]))


# Run the main function if the script is run directly
if __name__ == "__main__":
    main()
