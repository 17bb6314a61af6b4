# utils.py
import csv
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import chardet
import numpy as np
from loguru import logger

from photonic_vqe import __version__


def detect_file_encoding(file_path):
    """
    Detect the encoding of a file using chardet.

    Args:
        file_path (str or Path): Path to the file

    Returns:
        str: Detected encoding, defaults to 'utf-8' if detection fails
    """
    try:
        raw_data = Path(file_path).read_bytes()
        result = chardet.detect(raw_data)
        encoding = result["encoding"]
        confidence = result["confidence"] or 0.0
        logger.debug(f"Detected encoding {encoding} with {confidence:.2%} confidence for {file_path}")
        return encoding if encoding else "utf-8"
    except OSError as e:
        logger.warning(f"Error detecting encoding for {file_path}: {e}")
        return "utf-8"


def read_file_with_fallback(file_path, encodings=None):
    """
    Read a text file trying multiple encodings in order of preference.

    Coefficient tables, operator files and unitaries are hand-edited and
    travel between machines, so the detected encoding is tried first.

    Args:
        file_path (str or Path): Path to the file
        encodings (list): Encodings to try, defaults to detected + common ones

    Returns:
        str: File contents

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If file cannot be read with any encoding
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"{file_path} does not exist")
    if encodings is None:
        detected = detect_file_encoding(file_path)
        encodings = [detected, "utf-8", "latin-1"]

    errors = []
    for encoding in encodings:
        try:
            content = file_path.read_text(encoding=encoding)
            logger.debug(f"Successfully read {file_path} using {encoding} encoding")
            return content
        except (UnicodeDecodeError, LookupError) as e:
            errors.append(f"{encoding}: {e}")

    error_msg = f"Failed to read {file_path} with any encoding. Errors:\n" + "\n".join(errors)
    logger.error(error_msg)
    raise ValueError(error_msg)


def format_value(value):
    """Render a CSV cell; floats get 12 significant digits."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def emit_curve(rows, path, columns=None):
    """
    Write homogeneous rows (dicts) as a CSV file with LF line endings.

    Args:
        rows (list[dict]): One dict per row, all with the same keys.
        path (str or Path): Output file.
        columns (list[str], optional): Column order; required for an empty table.

    Returns:
        Path: The written file.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    for i, row in enumerate(rows):
        if set(row.keys()) != set(columns):
            raise ValueError(f"row {i} has columns {sorted(row)}; expected {sorted(columns)}")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def write_json(payload, path):
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass
class RunManifest:
    """Provenance record written next to every CLI output."""

    command: str
    config_path: str | None
    seed: int
    output_dir: str
    tool_version: str = __version__
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )
    arguments: dict = field(default_factory=dict)

    def write(self, directory=None):
        target = Path(directory or self.output_dir) / "manifest.json"
        return write_json(asdict(self), target)


def derive_seeds(master_seed, count):
    """Independent integer seeds for ``count`` tasks, reproducible from one master seed."""
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
