"""Result serialization: JSON with complex numbers as [re, im], CSV tables."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = [
    "encode",
    "decode_complex_matrix",
    "write_json",
    "write_csv",
    "matrix_to_json",
    "matrix_csv_rows",
    "sha256_file",
]


def encode(obj):
    """Make numpy and complex values JSON-serializable."""
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def matrix_to_json(m):
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_complex_matrix(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(encode(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def matrix_csv_rows(m):
    """Rows ``(i, j, re, im, abs, phase)`` of a complex matrix."""
    m = np.asarray(m, dtype=complex)
    return [
        (i, j, m[i, j].real, m[i, j].imag, abs(m[i, j]), float(np.angle(m[i, j])))
        for i in range(m.shape[0])
        for j in range(m.shape[1])
    ]


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
