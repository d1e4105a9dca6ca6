"""Angular-delay sparsification of the PCA basis and offload accounting.

The BS reshapes each component to ``n_x x n_y x n_c``, takes a unitary 3-D
DFT, and ships only the ``floor(D / eta)`` largest-magnitude coefficients with
their flat positions. The UE inverts the transform and re-orthonormalizes with
modified Gram-Schmidt. The BS runs the very same ``densify`` on what it ships,
so both ends hold bit-identical bases.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import RankCollapseError
from .pca import PcaModel

COLLAPSE_TOL = 1e-12
_MAGIC = b"CSIS"
_VERSION = 1


@dataclass(frozen=True, eq=False)
class SparsifiedModel:
    values: np.ndarray     # (n_p, keep) complex
    positions: np.ndarray  # (n_p, keep) uint32, strictly increasing per row
    eta: float
    mean: np.ndarray       # (D,) complex
    dims: tuple[int, int, int]

    @property
    def n_p(self) -> int:
        return self.values.shape[0]

    @property
    def keep(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def to_bytes(self) -> bytes:
        """Little-endian wire image; values and mean are sent as complex64."""
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<H3IId", _VERSION, *self.dims, self.n_p, float(self.eta)))
        buf.write(self.mean.astype("<c8").tobytes())
        for pos, val in zip(self.positions, self.values):
            buf.write(struct.pack("<I", len(pos)))
            buf.write(pos.astype("<u4").tobytes())
            buf.write(val.astype("<c8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SparsifiedModel":
        if data[:4] != _MAGIC:
            raise ValueError("not a sparsified model (bad magic)")
        head = struct.Struct("<H3IId")
        version, nx, ny, nc, n_p, eta = head.unpack_from(data, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported sparsified model version {version}")
        pos = 4 + head.size
        d = nx * ny * nc
        mean = np.frombuffer(data, "<c8", d, pos).astype(complex)
        pos += 8 * d
        positions, values = [], []
        for _ in range(n_p):
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            positions.append(np.frombuffer(data, "<u4", count, pos).copy())
            pos += 4 * count
            values.append(np.frombuffer(data, "<c8", count, pos).astype(complex))
            pos += 8 * count
        if pos != len(data):
            raise ValueError("trailing bytes in sparsified model")
        keep = len(positions[0]) if positions else math.floor(d / eta)
        return cls(np.array(values).reshape(n_p, keep),
                   np.array(positions, dtype=np.uint32).reshape(n_p, keep),
                   eta, mean, (nx, ny, nc))

    def header_bytes(self) -> int:
        return 4 + struct.calcsize("<H3IId")


def kept_count(size: int, eta: float) -> int:
    return math.floor(size / eta)


def to_angular_delay(components: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Unitary 3-D DFT of each column; returns ``(n, D)`` flattened spectra."""
    n = components.shape[1]
    grid = components.T.reshape((n, *dims))
    return np.fft.fftn(grid, axes=(1, 2, 3), norm="ortho").reshape(n, -1)


def from_angular_delay(spectra: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    n = spectra.shape[0]
    grid = spectra.reshape((n, *dims))
    return np.fft.ifftn(grid, axes=(1, 2, 3), norm="ortho").reshape(n, -1).T


def _check_eta(eta: float, size: int) -> None:
    if not 1 <= eta <= size:
        raise ValueError(f"eta must be in [1, {size}], got {eta}")


def sparsify(model: PcaModel, n_p: int, eta: float) -> SparsifiedModel:
    """Keep the ``floor(D / eta)`` largest angular-delay coefficients per component.

    Magnitude ties at the cut go to the lowest flat index.
    """
    D = model.size
    _check_eta(eta, D)
    if not 1 <= n_p <= model.rank:
        raise ValueError(f"n_p must be in [1, {model.rank}], got {n_p}")
    keep = kept_count(D, eta)
    spectra = to_angular_delay(model.components[:, :n_p], model.dims)
    mags = np.abs(spectra)
    # stable sort on -|f| keeps ascending index order among equal magnitudes
    top = np.argsort(-mags, axis=1, kind="stable")[:, :keep]
    positions = np.sort(top, axis=1)
    values = np.take_along_axis(spectra, positions, axis=1)
    return SparsifiedModel(values, positions.astype(np.uint32), float(eta), model.mean.copy(), model.dims)


def retained_energy(model: PcaModel, n_p: int, eta: float) -> np.ndarray:
    """Fraction of each component's energy that survives the mask."""
    sp = sparsify(model, n_p, eta)
    return np.sum(np.abs(sp.values) ** 2, axis=1) / np.sum(np.abs(model.components[:, :n_p]) ** 2, axis=0)


def to_wire_precision(sparse: SparsifiedModel) -> SparsifiedModel:
    """What the UE actually receives: values and mean rounded to complex64."""
    return SparsifiedModel.from_bytes(sparse.to_bytes())


def gram_schmidt(a: np.ndarray, tol: float = COLLAPSE_TOL) -> np.ndarray:
    """Modified Gram-Schmidt over columns, in order, with one re-orthogonalization sweep.

    Column ``j`` of the result depends only on columns ``0..j`` of the input,
    and is computed with the same operations regardless of how many columns
    follow, so leading blocks agree bit for bit.
    """
    a = np.asarray(a, dtype=complex)
    q = np.empty_like(a)
    for j in range(a.shape[1]):
        v = a[:, j].copy()
        for _ in range(2):
            for i in range(j):
                qi = q[:, i]
                v -= np.vdot(qi, v) * qi
        norm = np.linalg.norm(v)
        if norm < tol:
            raise RankCollapseError(
                f"rank collapse at component {j}; decrease eta or N_P")
        q[:, j] = v / norm
    return q


def densify(sparse: SparsifiedModel) -> np.ndarray:
    """Rebuild the orthonormal ``(D, n_p)`` basis from a sparsified model."""
    spectra = np.zeros((sparse.n_p, sparse.size), dtype=complex)
    np.put_along_axis(spectra, sparse.positions.astype(np.int64), sparse.values, axis=1)
    return gram_schmidt(from_angular_delay(spectra, sparse.dims))


def count_model_params(n_a: int, n_c: int, n_p: int, eta: float = 1, mode: str = "exact") -> int:
    """Real parameters offloaded for the basis and the mean.

    ``exact``: full complex basis plus mean. ``sparsified``: kept complex
    coefficients, one position each, plus mean.
    """
    D = n_a * n_c
    if mode == "exact":
        return 2 * D * n_p + 2 * D
    if mode == "sparsified":
        if eta < 1:
            raise ValueError("eta must be >= 1")
        keep = kept_count(D, eta)
        return 2 * keep * n_p + keep * n_p + 2 * D
    raise ValueError(f"unknown mode {mode!r}")


def count_codebook_params(alloc, mode: str = "per_component") -> int:
    """Real parameters offloaded for the quantizer (levels, scalings, bit order)."""
    bits = np.asarray(alloc.bits, dtype=np.int64)
    B = alloc.total
    if mode == "per_component":
        # sum_{r=1}^{b} 2^r = 2^(b+1) - 2
        return int(2 * np.sum(2 ** (bits[bits > 0] + 1) - 2) + B)
    if mode == "shared":
        n_p = alloc.latent_dim
        b1 = int(bits[0]) if len(bits) else 0
        return 2 * (2 ** (b1 + 1) - 2) + n_p + B
    raise ValueError(f"unknown mode {mode!r}")
