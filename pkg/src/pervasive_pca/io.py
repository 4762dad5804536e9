"""CSV and manifest files.

All CSV files are comma-separated with a header row, ``.`` decimals, UTF-8 and
LF line endings. Floats are written with ``repr`` (shortest round-trip form) so
identical values give identical bytes.

Matrix CSV layout: the first header cell names the row kind (``variable``,
``observation`` or ``component``) and the first column carries 1-based row
labels; the remaining header cells label the columns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__

ROW_KINDS = ("variable", "observation", "component")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if math.isnan(v) else repr(v)
    return str(value)


def write_rows(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    """Write dict rows as CSV with a fixed column order."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c, "")) for c in columns])
    return path


def write_frame(path: Path, frame, columns: Optional[Sequence[str]] = None) -> Path:
    columns = list(columns or frame.columns)
    return write_rows(path, columns, frame.to_dict("records"))


def write_matrix(path: Path, M: np.ndarray, row_kind: str, col_prefix: str) -> Path:
    """Write a matrix with a label column (``row_kind``) and ``col_prefix_<i>`` headers."""
    if row_kind not in ROW_KINDS:
        raise ValueError(f"row kind must be one of {ROW_KINDS}")
    M = np.atleast_2d(M)
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([row_kind] + [f"{col_prefix}_{i + 1}" for i in range(M.shape[1])])
        for i, row in enumerate(M):
            w.writerow([str(i + 1)] + [repr(float(x)) for x in row])
    return path


class CsvFormatError(ValueError):
    pass


def read_matrix(path: Path) -> tuple[np.ndarray, str]:
    """Read a matrix CSV, returning the values and the header's row kind.

    A first column is treated as labels when its header cell is one of
    ``variable``/``observation``/``component`` or is empty; otherwise every
    column is numeric. Errors name the offending row and column (1-based, as
    shown in a spreadsheet including the header row).
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CsvFormatError(f"{path}: cannot read ({exc.strerror})") from None
    rows = [r for r in rows if r]
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = rows[0]
    if len(rows) < 2:
        raise CsvFormatError(f"{path}: header row but no data rows")
    first = header[0].strip().lower()
    labelled = first in ROW_KINDS or first == ""
    kind = first if first in ROW_KINDS else ""
    width = len(header)
    values = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise CsvFormatError(f"{path}: row {r} has {len(row)} fields, header has {width}")
        cells = row[1:] if labelled else row
        out = []
        for c, cell in enumerate(cells, start=2 if labelled else 1):
            try:
                v = float(cell)
            except ValueError:
                raise CsvFormatError(f"{path}: row {r}, column {c}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise CsvFormatError(f"{path}: row {r}, column {c}: non-finite value {cell!r}")
            out.append(v)
        values.append(out)
    M = np.array(values, dtype=float)
    if M.size == 0:
        raise CsvFormatError(f"{path}: no numeric columns")
    return M, kind


def read_vector(path: Path) -> np.ndarray:
    """Read a single numeric column (header row required); the last column is used."""
    M, _ = read_matrix(path)
    return M[:, -1]


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path,
    subcommand: str,
    config_path: Optional[str],
    config: Optional[dict],
    seed: Optional[int],
    threads: int,
    argv: Sequence[str],
    outputs: Sequence[Path],
    extra: Optional[dict] = None,
) -> Path:
    """Record how an output directory was produced.

    Schema (JSON object): ``subcommand``, ``config_path``, ``config`` (the parsed
    config, with the effective seed), ``seed``, ``threads``, ``argv``,
    ``output_dir``, ``tool_version``, ``timestamp`` (UTC ISO-8601) and
    ``outputs`` (file name -> sha256). Only ``timestamp`` differs between
    reruns of the same command.
    """
    out_dir = Path(out_dir)
    manifest = {
        "subcommand": subcommand,
        "config_path": config_path,
        "config": config,
        "seed": seed,
        "threads": threads,
        "argv": list(argv),
        "output_dir": str(out_dir),
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": {Path(p).name: sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path
