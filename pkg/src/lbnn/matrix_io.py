"""Matrix file formats shared by the library and the CLI.

Two formats are supported:

* CSV: one row per line, comma-separated, no header.
* JSON: an object ``{"rows": m, "cols": n, "data": [...]}`` with the
  entries flattened in row-major order.

Both readers reject NaN/Inf. Writers format floats with 17 significant
digits, which round-trips IEEE doubles exactly and keeps outputs
byte-stable across runs.
"""

from __future__ import annotations

import json
import os

import numpy as np


def format_float(x: float) -> str:
    """17-significant-digit decimal representation (exact double round trip)."""
    return format(float(x), ".17g")


def _check_finite(a: np.ndarray, source: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{source} contains NaN or Inf entries")
    return a


def read_matrix_csv(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError(f"{path} holds no matrix rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path} has ragged rows (lengths {sorted(widths)})")
    return _check_finite(np.asarray(rows, dtype=float), path)


def write_matrix_csv(path: str, mat: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    _check_finite(mat, "matrix")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in mat:
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")


def read_matrix_json(path: str) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        obj = json.load(fh)
    return matrix_from_dict(obj, source=path)


def write_matrix_json(path: str, mat: np.ndarray) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(matrix_to_dict(mat), fh, sort_keys=True)
        fh.write("\n")


def matrix_to_dict(mat: np.ndarray) -> dict:
    """Row-major JSON object form of a matrix."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    _check_finite(mat, "matrix")
    return {
        "rows": int(mat.shape[0]),
        "cols": int(mat.shape[1]),
        "data": [float(v) for v in mat.reshape(-1)],
    }


def matrix_from_dict(obj: dict, source: str = "json object") -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = np.asarray(obj["data"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{source} is not a matrix object: {exc}") from exc
    if data.size != rows * cols:
        raise ValueError(
            f"{source}: data length {data.size} does not match {rows}x{cols}"
        )
    return _check_finite(data.reshape(rows, cols), source)


def read_matrix(path: str) -> np.ndarray:
    """Dispatch on file extension (.csv or .json)."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".csv":
        return read_matrix_csv(path)
    if ext == ".json":
        return read_matrix_json(path)
    raise ValueError(f"unsupported matrix file extension on {path!r}")


def write_matrix(path: str, mat: np.ndarray) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".csv":
        write_matrix_csv(path, mat)
    elif ext == ".json":
        write_matrix_json(path, mat)
    else:
        raise ValueError(f"unsupported matrix file extension on {path!r}")
