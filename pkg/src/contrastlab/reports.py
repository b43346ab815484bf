"""Deterministic JSON/CSV writers and their readers.

Floats are written with ``repr`` so a read-back reproduces them exactly;
JSON keys are sorted and NaN/inf become ``null``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def plain(obj):
    """Recursively convert numpy values, tuples and non-finite floats to JSON-safe objects."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def write_embeddings(path, Z, labels) -> Path:
    Z = np.asarray(Z)
    header = ["index", "label"] + [f"z{j}" for j in range(Z.shape[1])]
    rows = ([i, int(lab)] + Z[i].tolist() for i, lab in enumerate(labels))
    return write_csv(path, header, rows)


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    header, rows = read_csv(path)
    if header[:2] != ["index", "label"]:
        raise ValueError(f"{path}: not an embeddings file (header {header[:2]})")
    labels = np.array([int(r[1]) for r in rows], dtype=int)
    Z = np.array([[float(x) for x in r[2:]] for r in rows], dtype=np.float64)
    return Z.reshape(len(rows), len(header) - 2), labels


def write_loss_curve(path, losses) -> Path:
    return write_csv(path, ["epoch", "train_loss"], ([e, float(v)] for e, v in enumerate(losses)))


def read_loss_curve(path) -> list[float]:
    header, rows = read_csv(path)
    if header != ["epoch", "train_loss"]:
        raise ValueError(f"{path}: not a loss curve (header {header})")
    return [float(r[1]) for r in rows]


HIST_HEADER = ["bin_left", "bin_right", "count_target_nn", "count_noise_nn"]


def write_histogram(path, hist) -> Path:
    return write_csv(path, HIST_HEADER, hist.rows())


def read_histogram(path):
    header, rows = read_csv(path)
    if header != HIST_HEADER:
        raise ValueError(f"{path}: not a histogram (header {header})")
    return [(float(a), float(b), int(c), int(d)) for a, b, c, d in rows]
