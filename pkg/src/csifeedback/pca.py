"""Principal component basis learned from vectorized training channels.

Row-vector convention throughout: a latent vector is ``z = (h - mean) @ V``
and the reconstruction is ``z @ V^H + mean``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container


@dataclass(frozen=True, eq=False)
class PcaModel:
    components: np.ndarray   # (D, R) complex, orthonormal columns
    eigenvalues: np.ndarray  # (R,) descending, >= 0
    mean: np.ndarray         # (D,) complex
    dims: tuple[int, int, int]

    @property
    def rank(self) -> int:
        return self.components.shape[1]

    @property
    def size(self) -> int:
        return self.components.shape[0]

    def basis(self, n_p: int) -> np.ndarray:
        """First ``n_p`` components as a ``(D, n_p)`` view."""
        _check_np(n_p, self.rank)
        return self.components[:, :n_p]


def _check_np(n_p: int, rank: int) -> None:
    if not 1 <= n_p <= rank:
        raise ValueError(f"n_p must be in [1, {rank}], got {n_p}")


def fix_gauge(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    return v * phase.conj()[None, :]


def fit(training_set: np.ndarray, dims: tuple[int, int, int] | None = None) -> PcaModel:
    """Fit on ``N_train x D`` rows (already normalized, one channel per row).

    Eigenpairs of the sample covariance come from the SVD of the centered
    data; ``R = min(N_train - 1, D)`` components are kept, which drops only
    the direction annihilated by centering.
    """
    x = np.asarray(training_set)
    if x.ndim != 2:
        raise ValueError(f"training set must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 training samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("training set contains non-finite entries")
    if dims is None:
        dims = (d, 1, 1)
    if int(np.prod(dims)) != d:
        raise ValueError(f"dims {dims} do not match vector length {d}")

    mean = x.mean(axis=0)
    centered = (x - mean).astype(complex)
    _, s, vh = np.linalg.svd(centered, full_matrices=False)
    r = min(n - 1, d)
    v = fix_gauge(vh[:r].conj().T)
    eig = s[:r] ** 2 / (n - 1)
    return PcaModel(np.ascontiguousarray(v), eig, mean.astype(complex), tuple(int(t) for t in dims))


def project(model: PcaModel, h: np.ndarray, n_p: int) -> np.ndarray:
    """Latent coordinates on the first ``n_p`` components.

    ``h`` may be a single vector or a stack of row vectors.
    """
    return (np.asarray(h) - model.mean) @ model.basis(n_p)


def reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    n_p = z.shape[-1]
    if n_p > model.rank:
        raise ValueError(f"latent length {n_p} exceeds model rank {model.rank}")
    if n_p == 0:
        return np.broadcast_to(model.mean, z.shape[:-1] + model.mean.shape).copy()
    return z @ model.basis(n_p).conj().T + model.mean


def save(model: PcaModel, path, meta: dict | None = None) -> str:
    arrays = {
        "components": model.components.astype(np.complex64),
        "eigenvalues": model.eigenvalues.astype(np.float64),
        "mean": model.mean.astype(np.complex64),
        "dims": np.array(model.dims, dtype=np.int64),
    }
    return container.save(path, arrays, {"kind": "pca", **(meta or {})})


def load(path) -> tuple[PcaModel, dict]:
    arrays, meta = container.load(path)
    model = PcaModel(
        arrays["components"].astype(complex),
        arrays["eigenvalues"],
        arrays["mean"].astype(complex),
        tuple(int(t) for t in arrays["dims"]),
    )
    return model, meta
