"""Geometric multipath generator for paired uplink/downlink channels.

Every user gets ``n_paths`` planar-wave paths. The same paths (gain, angle,
delay) are used at both carriers; only the carrier-dependent phases and the
steering vectors' electrical spacing differ, so the two channels share their
geometry but are decorrelated at the small-scale level.

Antenna ``(ix, iy)`` sits at row ``ix * n_y + iy`` of the channel matrix; the
vectorized channel is the row-major flattening of the ``n_a x n_c`` matrix, so
``vec.reshape(n_x, n_y, n_c)`` recovers the space-frequency tensor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .errors import DegenerateChannelError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PathGeometry:
    gains: np.ndarray      # (L,) complex
    azimuth: np.ndarray    # (L,) rad, uniform on [-pi/2, pi/2]
    elevation: np.ndarray  # (L,) rad, uniform on [-pi/2, pi/2]
    delays: np.ndarray     # (L,) seconds


def _rng(*seeds: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(s) for s in seeds]))


def draw_paths(cfg: ScenarioConfig, user_seed: int) -> PathGeometry:
    """Path parameters of one user; exposed so tests can inspect geometry."""
    rng = _rng(cfg.seed, user_seed)
    L = cfg.n_paths
    gains = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / math.sqrt(2.0)
    azimuth = rng.uniform(-np.pi / 2, np.pi / 2, L)
    elevation = rng.uniform(-np.pi / 2, np.pi / 2, L)
    delays = rng.uniform(0.0, cfg.max_delay, L)
    return PathGeometry(gains, azimuth, elevation, delays)


def steering_matrix(cfg: ScenarioConfig, paths: PathGeometry, f_center: float) -> np.ndarray:
    """UPA response, ``n_a x L``.

    Element spacing is half a wavelength at the downlink carrier; at another
    carrier the electrical spacing scales by ``f_center / f_dl``.
    """
    u = np.cos(paths.elevation) * np.sin(paths.azimuth)
    v = np.sin(paths.elevation)
    ix = np.arange(cfg.n_x)[:, None, None]
    iy = np.arange(cfg.n_y)[None, :, None]
    phase = np.pi * (f_center / cfg.f_dl) * (ix * u + iy * v)
    return np.exp(1j * phase).reshape(cfg.n_a, -1)


def subcarrier_frequencies(cfg: ScenarioConfig, f_center: float) -> np.ndarray:
    spacing = cfg.bandwidth / cfg.n_c
    return f_center + (np.arange(cfg.n_c) - cfg.n_c / 2) * spacing


def channel_from_paths(cfg: ScenarioConfig, paths: PathGeometry, f_center: float) -> np.ndarray:
    a = steering_matrix(cfg, paths, f_center)
    freqs = subcarrier_frequencies(cfg, f_center)
    # the absolute carrier enters the phase on purpose: it decorrelates bands
    delay_phase = np.exp(-2j * np.pi * np.outer(paths.delays, freqs))
    return (a * paths.gains) @ delay_phase


def generate_channel_pair(cfg: ScenarioConfig, user_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H_ul, H_dl)``, each ``n_a x n_c``, built from one set of paths."""
    paths = draw_paths(cfg, user_seed)
    return channel_from_paths(cfg, paths, cfg.f_ul), channel_from_paths(cfg, paths, cfg.f_dl)


def add_noise(h: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """Add CSCG noise with ``||H||_F^2 / E||N||_F^2`` equal to the linear SNR.

    ``snr_db = inf`` returns an unchanged copy. The noise power follows the
    realized norm of ``h``, so an all-zero input stays zero.
    """
    h = np.asarray(h)
    if math.isinf(snr_db) and snr_db > 0:
        return h.copy()
    if math.isnan(snr_db):
        raise ValueError("snr_db is NaN")
    energy = float(np.vdot(h, h).real)
    var = energy / (10.0 ** (snr_db / 10.0) * h.size)
    rng = _rng(seed)
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + noise * math.sqrt(var / 2.0)


def normalize_channel(h: np.ndarray) -> np.ndarray:
    """Scale ``h`` so that its squared Frobenius norm equals its size."""
    h = np.asarray(h)
    norm = np.linalg.norm(h)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateChannelError("degenerate channel")
    return h * (math.sqrt(h.size) / norm)


def vectorize(h: np.ndarray) -> np.ndarray:
    return np.asarray(h).reshape(-1)


def generate_dataset(cfg: ScenarioConfig, n_users: int, first_user: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Normalized noiseless pairs for users ``first_user .. first_user + n_users - 1``.

    Returns two ``(n_users, n_a, n_c)`` arrays.
    """
    ul = np.empty((n_users, cfg.n_a, cfg.n_c), dtype=complex)
    dl = np.empty_like(ul)
    for i in range(n_users):
        h_ul, h_dl = generate_channel_pair(cfg, first_user + i)
        ul[i] = normalize_channel(h_ul)
        dl[i] = normalize_channel(h_dl)
    return ul, dl


def noisy_normalized(h: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """Noisy observation of each channel in a stack, renormalized.

    Channel ``i`` uses noise seed ``(seed, i)``.
    """
    out = np.empty_like(h, dtype=complex)
    for i in range(h.shape[0]):
        noisy = add_noise(h[i], snr_db, seed=_seed_for(seed, i))
        out[i] = normalize_channel(noisy)
    return out


def _seed_for(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])
