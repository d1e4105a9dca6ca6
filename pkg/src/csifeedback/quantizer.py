"""k-means codebooks for complex latent coordinates.

Complex scalars are treated as points in R^2. Two codebook variants:

* ``per_component`` -- component ``n`` owns one center set per rate
  ``r = 1 .. b_n``;
* ``shared`` -- one center set per rate ``r = 1 .. b_1`` fitted on all
  columns after dividing each by its RMS ``sigma_n``; component ``n`` uses
  ``sigma_n * centers``. Lloyd iterations commute with scaling, which is what
  makes a single normalized codebook valid for every column.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .bits import BitAllocation
from .errors import ModelMismatchError

PER_COMPONENT = "per_component"
SHARED = "shared"
_SHARED_TAG = 1 << 30

# above this many point-center pairs, assignment goes through a k-d tree
_BRUTE_FORCE_LIMIT = 1 << 22


@dataclass(frozen=True)
class KMeansConfig:
    seed: int = 0
    max_iter: int = 300
    tol: float = 1e-6


@dataclass(frozen=True, eq=False)
class KMeansResult:
    centers: np.ndarray  # (k, 2)
    distortion: float    # mean squared distance to the nearest center
    n_iter: int
    degenerate: bool = False


def derive_seed(master: int, component: int, rate: int) -> int:
    """Independent, reproducible seed for the fit of ``(component, rate)``."""
    ss = np.random.SeedSequence([int(master), int(component), int(rate)])
    return int(ss.generate_state(1)[0])


def as_points(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z).reshape(-1)
    return np.column_stack([z.real, z.imag]).astype(float)


def as_complex(points: np.ndarray) -> np.ndarray:
    return points[:, 0] + 1j * points[:, 1]


def _sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    dx = points[:, 0, None] - centers[None, :, 0]
    dy = points[:, 1, None] - centers[None, :, 1]
    return dx * dx + dy * dy


def nearest(points: np.ndarray, centers: np.ndarray, exact_ties: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest center.

    With ``exact_ties`` the lowest index wins equidistant ties; otherwise a
    k-d tree may be used for large problems (ties then follow the tree).
    """
    n, k = len(points), len(centers)
    if exact_ties or n * k <= _BRUTE_FORCE_LIMIT:
        idx = np.empty(n, dtype=np.int64)
        dist = np.empty(n)
        step = max(1, _BRUTE_FORCE_LIMIT // max(k, 1))
        for s in range(0, n, step):
            d = _sq_dist(points[s:s + step], centers)
            i = np.argmin(d, axis=1)
            idx[s:s + step] = i
            dist[s:s + step] = d[np.arange(len(i)), i]
        return idx, dist
    d, idx = cKDTree(centers).query(points)
    return idx.astype(np.int64), d * d


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, 2))
    centers[0] = points[rng.integers(n)]
    closest = _sq_dist(points, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = points[rng.integers(n)]
        else:
            u = rng.random() * total
            pick = int(np.searchsorted(np.cumsum(closest), u, side="right"))
            centers[j] = points[min(pick, n - 1)]
        closest = np.minimum(closest, _sq_dist(points, centers[j:j + 1])[:, 0])
    return centers


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    init: np.ndarray | None = None,
) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds (or from ``init``).

    Stops when the Frobenius norm of the center update falls below ``tol``
    times the RMS norm of the data. A cluster that empties is moved onto the
    point farthest from its current center. If there are fewer distinct
    points than ``k``, the distinct points are returned (cycled to length
    ``k``) with ``degenerate=True``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got {points.shape}")
    if len(points) == 0:
        raise ValueError("no points to cluster")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    distinct = np.unique(points, axis=0)
    if len(distinct) <= k and init is None:
        centers = np.resize(distinct, (k, 2))
        _, dist = nearest(points, centers)
        return KMeansResult(centers, float(dist.mean()), 0, degenerate=len(distinct) < k)

    if init is not None:
        centers = np.array(init, dtype=float, copy=True)
        if centers.shape != (k, 2):
            raise ValueError(f"init must be ({k}, 2), got {centers.shape}")
    else:
        centers = kmeans_plus_plus(points, k, np.random.default_rng(seed))

    scale = np.sqrt(np.mean(np.sum(points * points, axis=1)))
    centers, n_iter = _lloyd(points, centers, max_iter, tol * scale)
    _, dist = nearest(points, centers)
    return KMeansResult(centers, float(dist.mean()), n_iter)


def _two_nearest(points: np.ndarray, centers: np.ndarray):
    """Nearest center index, its distance, and the second-nearest distance."""
    if len(centers) == 1:
        d = np.sqrt(_sq_dist(points, centers)[:, 0])
        return np.zeros(len(points), dtype=np.int64), d, np.full(len(points), np.inf)
    if len(points) * len(centers) <= _BRUTE_FORCE_LIMIT:
        d = _sq_dist(points, centers)
        part = np.argpartition(d, 1, axis=1)[:, :2]
        dd = np.take_along_axis(d, part, axis=1)
        swap = dd[:, 1] < dd[:, 0]
        part[swap] = part[swap, ::-1]
        dd[swap] = dd[swap, ::-1]
        return part[:, 0].astype(np.int64), np.sqrt(dd[:, 0]), np.sqrt(dd[:, 1])
    d, idx = cKDTree(centers).query(points, k=2)
    return idx[:, 0].astype(np.int64), d[:, 0], d[:, 1]


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int, stop: float):
    """Lloyd iterations with Hamerly's distance bounds.

    ``upper`` bounds the distance to the assigned center and ``lower`` the
    distance to any other center; a point is re-examined only when the
    bounds no longer prove its assignment, so labels match plain Lloyd.
    """
    k = len(centers)
    labels, upper, lower = _two_nearest(points, centers)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=k)
        sums = np.column_stack([
            np.bincount(labels, weights=points[:, 0], minlength=k),
            np.bincount(labels, weights=points[:, 1], minlength=k),
        ])
        new = centers.copy()
        full = counts > 0
        new[full] = sums[full] / counts[full, None]
        empty = np.flatnonzero(~full)
        if len(empty):
            own = np.sqrt(np.sum((points - centers[labels]) ** 2, axis=1))
            order = np.argsort(-own, kind="stable")
            new[empty] = points[order[:len(empty)]]
        move = np.sqrt(np.sum((new - centers) ** 2, axis=1))
        shift = np.sqrt(np.sum(move ** 2))
        centers = new
        if shift <= stop and not len(empty):
            break
        if len(empty):
            labels, upper, lower = _two_nearest(points, centers)
            continue
        upper = upper + move[labels]
        lower = lower - move.max()
        if k > 1:
            sep = 0.5 * cKDTree(centers).query(centers, k=2)[0][:, 1] if k > 64 else \
                0.5 * np.sqrt(np.sort(_sq_dist(centers, centers), axis=1)[:, 1])
        else:
            sep = np.full(1, np.inf)
        bound = np.maximum(sep[labels], lower)
        stale = np.flatnonzero(upper > bound)
        if len(stale):
            upper[stale] = np.sqrt(np.sum((points[stale] - centers[labels[stale]]) ** 2, axis=1))
            stale = stale[upper[stale] > bound[stale]]
        if len(stale):
            labels[stale], upper[stale], lower[stale] = _two_nearest(points[stale], centers)
    return centers, n_iter


@dataclass(frozen=True, eq=False)
class Codebook:
    variant: str
    allocation: BitAllocation
    # per_component: levels[n][r - 1]; shared: levels[0][r - 1]
    levels: tuple
    sigma: np.ndarray | None = None
    degenerate: frozenset = field(default_factory=frozenset)

    def centers(self, n: int, r: int) -> np.ndarray:
        """Complex quantization levels of component ``n`` (0-based) at rate ``r``."""
        if r < 1:
            raise ValueError("rate must be >= 1")
        if self.variant == SHARED:
            return self.sigma[n] * self.levels[0][r - 1]
        return self.levels[n][r - 1]

    def at_wire_precision(self) -> "Codebook":
        """Copy with levels rounded to complex64, as persisted and offloaded."""
        def rnd(a):
            return a.astype(np.complex64).astype(complex)
        levels = tuple(tuple(rnd(lv) for lv in sets) for sets in self.levels)
        return Codebook(self.variant, self.allocation, levels, self.sigma, self.degenerate)

    def max_rate(self, n: int) -> int:
        if self.variant == SHARED:
            return len(self.levels[0]) if n < len(self.sigma) else 0
        return len(self.levels[n]) if n < len(self.levels) else 0


def _columns(z_train: np.ndarray, alloc: BitAllocation) -> np.ndarray:
    z = np.asarray(z_train)
    if z.ndim != 2 or z.shape[1] < alloc.latent_dim:
        raise ValueError(
            f"latent training matrix needs {alloc.latent_dim} columns, got shape {z.shape}")
    return z[:, :alloc.latent_dim]


def build_per_component(
    z_train: np.ndarray,
    alloc: BitAllocation,
    kmeans: KMeansConfig = KMeansConfig(),
    fit_cache: dict | None = None,
) -> Codebook:
    """Fit ``2^r`` centers on every column ``n`` for every ``r <= b_n``.

    ``fit_cache`` may hold ``(n, r) -> KMeansResult`` from an empirical
    distortion oracle that used the same seeds; those fits are reused.
    """
    z = _columns(z_train, alloc)
    levels = []
    degenerate = set()
    for n in range(alloc.latent_dim):
        pts = as_points(z[:, n])
        sets = []
        for r in range(1, int(alloc.bits[n]) + 1):
            res = (fit_cache or {}).get((n, r))
            if res is None:
                res = kmeans_fit(pts, 2 ** r, derive_seed(kmeans.seed, n, r), kmeans.max_iter, kmeans.tol)
            if res.degenerate:
                degenerate.add((n, r))
            sets.append(as_complex(res.centers))
        levels.append(tuple(sets))
    return Codebook(PER_COMPONENT, alloc, tuple(levels), None, frozenset(degenerate))


def column_rms(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(np.abs(z) ** 2, axis=0))


def build_shared(z_train: np.ndarray, alloc: BitAllocation, kmeans: KMeansConfig = KMeansConfig()) -> Codebook:
    """One normalized codebook per rate, rescaled per component by ``sigma``."""
    z = _columns(z_train, alloc)
    sigma = column_rms(z)
    bad = np.flatnonzero(~(sigma > 0))
    if len(bad):
        raise ValueError(f"zero-variance latent columns: {bad.tolist()}")
    pooled = as_points((z / sigma).T)
    b1 = int(alloc.bits[0]) if alloc.total else 0
    sets = []
    degenerate = set()
    for r in range(1, b1 + 1):
        res = kmeans_fit(pooled, 2 ** r, derive_seed(kmeans.seed, _SHARED_TAG, r), kmeans.max_iter, kmeans.tol)
        if res.degenerate:
            degenerate.add((-1, r))
        sets.append(as_complex(res.centers))
    return Codebook(SHARED, alloc, (tuple(sets),), sigma, frozenset(degenerate))


class LevelTable:
    """Dense ``(N_P, 2^b_max)`` table of the levels used under one allocation.

    Unused slots are NaN. Built once and reused by the codec so that
    quantizing a vector is a single vectorized nearest-level search.
    """

    def __init__(self, codebook: Codebook, alloc: BitAllocation):
        n_p = alloc.latent_dim
        rates = np.asarray(alloc.bits[:n_p], dtype=np.int64)
        width = 2 ** int(rates.max()) if n_p else 1
        table = np.full((n_p, width), np.nan + 1j * np.nan)
        for n in range(n_p):
            r = int(rates[n])
            if r > codebook.max_rate(n):
                raise ValueError(f"codebook has no rate-{r} levels for component {n}")
            table[n, :2 ** r] = codebook.centers(n, r)
        self.rates = rates
        self.table = table
        self.sizes = 2 ** rates

    def quantize(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)[..., :len(self.rates)]
        d = np.abs(z[..., None] - self.table) ** 2
        d = np.where(np.isnan(d), np.inf, d)
        return np.argmin(d, axis=-1)

    def dequantize(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.shape[-1] != len(self.rates):
            raise ModelMismatchError("corrupt frame: wrong number of indices")
        if np.any(indices < 0) or np.any(indices >= self.sizes):
            raise ModelMismatchError("corrupt frame")
        return np.take_along_axis(
            np.broadcast_to(self.table, indices.shape[:-1] + self.table.shape),
            indices[..., None], axis=-1)[..., 0]


def quantize(z: np.ndarray, codebook: Codebook, alloc: BitAllocation) -> np.ndarray:
    """Nearest-level index for every component with ``b_n >= 1``."""
    return LevelTable(codebook, alloc).quantize(z)


def dequantize(indices: np.ndarray, codebook: Codebook, alloc: BitAllocation, n_out: int | None = None) -> np.ndarray:
    """Levels for ``indices``; components without bits (up to ``n_out``) decode to 0."""
    z = LevelTable(codebook, alloc).dequantize(indices)
    if n_out is not None and n_out > z.shape[-1]:
        pad = np.zeros(z.shape[:-1] + (n_out - z.shape[-1],), dtype=complex)
        z = np.concatenate([z, pad], axis=-1)
    return z


def codebook_arrays(codebook: Codebook) -> dict[str, np.ndarray]:
    """Arrays persisted for a codebook (levels as complex64)."""
    arrays = {
        "alloc_bits": codebook.allocation.bits,
        "alloc_order": codebook.allocation.order,
    }
    if codebook.variant == SHARED:
        for r, lv in enumerate(codebook.levels[0], start=1):
            arrays[f"shared_r{r}"] = lv.astype(np.complex64)
        arrays["sigma"] = codebook.sigma.astype(np.float64)
    else:
        for n, sets in enumerate(codebook.levels):
            for r, lv in enumerate(sets, start=1):
                arrays[f"c{n}_r{r}"] = lv.astype(np.complex64)
    return arrays


def save_codebook(codebook: Codebook, path, meta: dict | None = None) -> str:
    from . import container

    meta = {"kind": "codebook", "variant": codebook.variant,
            "allocation": codebook.allocation.to_dict(),
            "degenerate": sorted(list(t) for t in codebook.degenerate), **(meta or {})}
    return container.save(path, codebook_arrays(codebook), meta)


def load_codebook(path) -> tuple[Codebook, dict]:
    from . import container

    arrays, meta = container.load(path)
    alloc = BitAllocation.from_dict(meta["allocation"])
    degenerate = frozenset(tuple(t) for t in meta.get("degenerate", []))
    if meta["variant"] == SHARED:
        b1 = int(alloc.bits[0]) if alloc.total else 0
        levels = (tuple(arrays[f"shared_r{r}"].astype(complex) for r in range(1, b1 + 1)),)
        return Codebook(SHARED, alloc, levels, arrays["sigma"], degenerate), meta
    levels = tuple(
        tuple(arrays[f"c{n}_r{r}"].astype(complex) for r in range(1, int(alloc.bits[n]) + 1))
        for n in range(alloc.latent_dim))
    return Codebook(PER_COMPONENT, alloc, levels, None, degenerate), meta
