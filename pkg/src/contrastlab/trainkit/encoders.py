"""Embedding maps trained directly on the sphere.

Both encoders expose ``forward(batch) -> Z``, ``backward(dZ) -> grads`` and
``embed(x)``; ``params`` is a dict of arrays updated in place by the
optimizer, after which ``project()`` restores any sphere constraint.
"""

from __future__ import annotations

import numpy as np

from ..core import renormalize_rows
from .data import Batch


def _normalize_backward(u: np.ndarray, z: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Pull ``dL/dz`` back through ``z = u / |u|``."""
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    return (dz - z * np.sum(z * dz, axis=1, keepdims=True)) / norms


class FreeEmbeddingTable:
    """One learnable unit vector per training item, initialized from its features."""

    kind = "table"

    def __init__(self, features: np.ndarray):
        self.params = {"table": renormalize_rows(np.array(features, dtype=np.float64))}
        self._cache = None

    @property
    def table(self) -> np.ndarray:
        return self.params["table"]

    def forward(self, batch: Batch, features=None) -> np.ndarray:
        u = (self.table[batch.items][None] + batch.perturbation).reshape(batch.size, -1)
        z = renormalize_rows(u)
        self._cache = (batch, u, z)
        return z

    def backward(self, dZ: np.ndarray) -> dict[str, np.ndarray]:
        batch, u, z = self._cache
        du = _normalize_backward(u, z, dZ)
        g = np.zeros_like(self.table)
        m = batch.items.shape[0]
        # both views of an item land on the same row; add in a fixed order
        np.add.at(g, batch.items, du[:m])
        np.add.at(g, batch.items, du[m:])
        return {"table": g}

    def project(self) -> None:
        # rows already unit to rounding are left alone, so a zero step changes nothing
        norms = np.linalg.norm(self.table, axis=1)
        off = np.abs(norms - 1.0) > 4 * np.finfo(float).eps
        if off.any():
            self.table[off] = renormalize_rows(self.table[off])

    def embed(self, x=None) -> np.ndarray:
        return self.table.copy()


class MLPEncoder:
    """``z = normalize(tanh(x W1 + b1) W2 + b2)`` on augmented, renormalized inputs."""

    kind = "mlp"

    def __init__(self, d_in: int, d_out: int, hidden: int, rng: np.random.Generator):
        self.params = {
            "W1": rng.standard_normal((d_in, hidden)) / np.sqrt(d_in),
            "b1": np.zeros(hidden),
            "W2": rng.standard_normal((hidden, d_out)) / np.sqrt(hidden),
            "b2": np.zeros(d_out),
        }
        self._cache = None

    def _apply(self, x):
        p = self.params
        h = np.tanh(x @ p["W1"] + p["b1"])
        u = h @ p["W2"] + p["b2"]
        return h, u, renormalize_rows(u)

    def forward_features(self, x: np.ndarray) -> np.ndarray:
        h, u, z = self._apply(x)
        self._cache = (x, h, u, z)
        return z

    def forward(self, batch: Batch, features: np.ndarray) -> np.ndarray:
        return self.forward_features(batch.views(features))

    def backward(self, dZ: np.ndarray) -> dict[str, np.ndarray]:
        x, h, u, z = self._cache
        p = self.params
        du = _normalize_backward(u, z, dZ)
        dh = (du @ p["W2"].T) * (1.0 - h * h)
        return {"W1": x.T @ dh, "b1": dh.sum(axis=0), "W2": h.T @ du, "b2": du.sum(axis=0)}

    def project(self) -> None:
        pass

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(x, dtype=np.float64))[2]
