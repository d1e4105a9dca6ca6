"""Greedy allocation of feedback bits to principal components.

The allocator hands out one bit at a time to the component whose distortion
drops the most. Because optimal allocations are non-increasing in the
component index, only component 0 and components sitting one step below
their predecessor can receive the next bit, so each round inspects at most
``b_1 + 1`` candidates.
"""
from __future__ import annotations

import itertools
import math
import threading

import numpy as np

from .bits import BitAllocation
from .quantizer import KMeansConfig, KMeansResult, as_points, derive_seed, kmeans_fit

ANALYTIC = "analytic"
EMPIRICAL = "empirical"


def analytic_distortion(sigma_sq: float, b: int) -> float:
    """Distortion-rate bound of a CSCG variable: ``sigma_sq * 2**-b``."""
    if sigma_sq < 0:
        raise ValueError(f"variance must be non-negative, got {sigma_sq}")
    return math.ldexp(float(sigma_sq), -int(b))


def column_variance(column: np.ndarray) -> float:
    column = np.asarray(column)
    return float(np.mean(np.abs(column - column.mean()) ** 2))


def kmeans_distortion(column: np.ndarray, b: int, kmeans: KMeansConfig = KMeansConfig(),
                      component: int = 0) -> KMeansResult | None:
    """k-means fit behind one empirical distortion value (``None`` for b = 0)."""
    if b == 0:
        return None
    return kmeans_fit(as_points(column), 2 ** b, derive_seed(kmeans.seed, component, b),
                      kmeans.max_iter, kmeans.tol)


def empirical_distortion(column: np.ndarray, b: int, kmeans_cfg: KMeansConfig = KMeansConfig()) -> float:
    """Mean squared error of a ``2**b``-level k-means quantizer fitted on ``column``.

    Returns 0 once ``2**b`` reaches the number of distinct values.
    """
    column = np.asarray(column)
    if column.size == 0:
        raise ValueError("empty column")
    if b == 0:
        return column_variance(column)
    return kmeans_distortion(column, b, kmeans_cfg).distortion


class DistortionOracle:
    """Memoized ``d_n(b)`` for every component ``n`` (0-based).

    Analytic mode uses ``variances[n] * 2**-b``; empirical mode runs k-means
    on column ``n`` of the projected training matrix. Empirical fits are kept
    in ``fits`` so the codebook builder can reuse them (same seeds).
    """

    def __init__(self, mode: str, variances=None, projected_training=None,
                 kmeans: KMeansConfig = KMeansConfig()):
        if mode == ANALYTIC:
            if variances is None:
                raise ValueError("analytic oracle needs variances")
            self.variances = np.asarray(variances, dtype=float)
            if np.any(self.variances < 0):
                raise ValueError("variances must be non-negative")
            self.projected = None
        elif mode == EMPIRICAL:
            if projected_training is None:
                raise ValueError("empirical oracle needs the projected training matrix")
            self.projected = np.asarray(projected_training)
            self.variances = np.array([column_variance(c) for c in self.projected.T])
        else:
            raise ValueError(f"unknown oracle mode {mode!r}")
        self.mode = mode
        self.kmeans = kmeans
        self.cache: dict[tuple[int, int], float] = {}
        self.fits: dict[tuple[int, int], KMeansResult] = {}
        self.degenerate: set[tuple[int, int]] = set()
        self._lock = threading.Lock()

    @classmethod
    def analytic(cls, variances) -> "DistortionOracle":
        return cls(ANALYTIC, variances=variances)

    @classmethod
    def empirical(cls, projected_training, kmeans: KMeansConfig = KMeansConfig()) -> "DistortionOracle":
        return cls(EMPIRICAL, projected_training=projected_training, kmeans=kmeans)

    @property
    def n_components(self) -> int:
        return len(self.variances)

    def __call__(self, n: int, b: int) -> float:
        key = (int(n), int(b))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if b == 0:
            value = float(self.variances[n])
        elif self.mode == ANALYTIC:
            value = analytic_distortion(self.variances[n], b)
        else:
            fit = kmeans_distortion(self.projected[:, n], b, self.kmeans, component=n)
            value = fit.distortion
            with self._lock:
                self.fits[key] = fit
                if fit.degenerate:
                    self.degenerate.add(key)
        with self._lock:
            self.cache.setdefault(key, value)
        return value

    def total(self, bits) -> float:
        return math.fsum(self(n, int(b)) for n, b in enumerate(bits))

    def per_component_fits(self) -> dict[tuple[int, int], KMeansResult]:
        """Fits keyed by ``(component, rate)`` in the codebook builder's convention."""
        return dict(self.fits)


def _candidates(bits: np.ndarray, prune: bool) -> np.ndarray:
    if not prune:
        return np.arange(len(bits))
    steps = np.flatnonzero(np.diff(bits) < 0) + 1
    return np.concatenate([[0], steps])


def allocate_bits(B: int, oracle: DistortionOracle, prune: bool = True) -> BitAllocation:
    """Distribute ``B`` bits greedily; ties go to the lowest component index.

    ``prune=False`` evaluates every component each round (reference only).
    """
    if B < 0:
        raise ValueError(f"B must be non-negative, got {B}")
    R = oracle.n_components
    if R < 1:
        raise ValueError("oracle has no components")
    if B > 0 and not np.any(oracle.variances > 0):
        raise ValueError("no information to allocate")
    bits = np.zeros(R, dtype=np.int64)
    order = np.empty(B, dtype=np.int64)
    for i in range(B):
        best, m = -math.inf, -1
        for n in _candidates(bits, prune):
            b = int(bits[n])
            gain = oracle(n, b) - oracle(n, b + 1)
            if gain > best:
                best, m = gain, int(n)
        bits[m] += 1
        order[i] = m
    seed = oracle.kmeans.seed if oracle.mode == EMPIRICAL else None
    return BitAllocation(bits, order, oracle_mode=oracle.mode, seed=seed)


def _compositions(total: int, parts: int):
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cut:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 1 - prev - 1)
        yield out


def exhaustive_allocate(B: int, oracle: DistortionOracle, r_max: int) -> BitAllocation:
    """Brute-force minimizer of the total distortion over the first ``r_max`` components.

    Ties go to the lexicographically largest bit vector. Guarded to
    ``r_max <= 8`` and ``B <= 12``.
    """
    if r_max > 8 or B > 12:
        raise ValueError("exhaustive search limited to r_max <= 8 and B <= 12")
    if B < 0 or r_max < 1:
        raise ValueError("need B >= 0 and r_max >= 1")
    R = oracle.n_components
    r_max = min(r_max, R)
    best_vec, best_val = None, math.inf
    for head in _compositions(B, r_max):
        vec = head + [0] * (R - r_max)
        val = oracle.total(vec)
        if val < best_val or (val == best_val and vec > best_vec):
            best_vec, best_val = vec, val
    bits = np.asarray(best_vec, dtype=np.int64)
    order = np.repeat(np.arange(R), bits)
    return BitAllocation(bits, order, oracle_mode=oracle.mode)
