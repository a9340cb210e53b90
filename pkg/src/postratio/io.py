"""CSV and JSON readers/writers used by the CLI and the experiment drivers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataFileError


def _parse_float(cell: str) -> float:
    return float(cell.strip())


def read_matrix(path) -> np.ndarray:
    """Read a numeric CSV: one row per sample, an optional single header line.

    Raises
    ------
    DataFileError
        On ragged rows, non-numeric cells or non-finite values; the message
        names the 1-based line number.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            lines = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if any(c.strip() for c in row)]
    except OSError as exc:
        raise DataFileError(f"{path}: cannot read ({exc.strerror})", path=path) from None
    if not lines:
        raise DataFileError(f"{path}: no data rows", path=path)

    first = lines[0][1]
    try:
        [_parse_float(c) for c in first]
    except ValueError:
        lines = lines[1:]  # header
        if not lines:
            raise DataFileError(f"{path}: header but no data rows", path=path) from None
    width = len(lines[0][1])
    rows = []
    for lineno, row in lines:
        if len(row) != width:
            raise DataFileError(
                f"{path}: row {lineno} has {len(row)} columns, expected {width}", path=path, row=lineno
            )
        try:
            values = [_parse_float(c) for c in row]
        except ValueError:
            raise DataFileError(f"{path}: row {lineno} has a non-numeric value", path=path, row=lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise DataFileError(f"{path}: row {lineno} has a non-finite value", path=path, row=lineno)
        rows.append(values)
    return np.asarray(rows, dtype=float)


def read_vector(path) -> np.ndarray:
    """Read a single-column CSV (optional header) into a 1-D array."""
    M = read_matrix(path)
    if M.shape[1] != 1:
        raise DataFileError(f"{path}: expected a single column, found {M.shape[1]}", path=path)
    return M[:, 0]


def fmt(x) -> str:
    """Numbers are written with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def to_jsonable(obj):
    """Turn dataclasses/arrays into plain containers, keeping floats as floats."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float rendered at 17 significant digits."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if o is None:
            return "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, (bool, int, float, np.generic)):
            return fmt(o)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(to_jsonable(obj), 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path, header, rows) -> None:
    """Write rows of numbers and labels; ``None``/NaN cells are left empty."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return v if isinstance(v, str) else fmt(v)


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataFileError(f"{path}: cannot read ({exc.strerror})", path=path) from None
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON at line {exc.lineno}", path=path, row=exc.lineno) from None
