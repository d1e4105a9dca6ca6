"""Reconstruction metrics, ZF/water-filling sum rate and the Monte Carlo harness."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import CodecState
from .errors import NumericalError

WF_TOL = 1e-10
RANK_TOL = 1e-10


def nmse(h_hat: np.ndarray, h: np.ndarray) -> float:
    h_hat, h = np.asarray(h_hat), np.asarray(h)
    if h_hat.shape != h.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h.shape}")
    ref = float(np.vdot(h, h).real)
    if ref == 0.0:
        raise ValueError("reference channel is zero")
    err = h_hat - h
    return float(np.vdot(err, err).real) / ref


def cosine_similarity(h_hat: np.ndarray, h: np.ndarray) -> float:
    """Mean over subcarriers (columns) of ``|h_hat^H h| / (||h_hat|| ||h||)``."""
    h_hat, h = np.asarray(h_hat), np.asarray(h)
    if h_hat.shape != h.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h.shape}")
    n1 = np.linalg.norm(h_hat, axis=0)
    n2 = np.linalg.norm(h, axis=0)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise ValueError("zero column in cosine similarity")
    inner = np.abs(np.sum(h_hat.conj() * h, axis=0))
    return float(np.mean(np.minimum(inner / (n1 * n2), 1.0)))


def water_filling(gains: np.ndarray, total_power: float, noise: float = 1.0) -> np.ndarray:
    """Powers maximizing ``sum log2(1 + p_k g_k / noise)`` with ``sum p_k = total_power``.

    Iterative level search: start with every channel active, compute the
    water level, drop the weakest channel while it would get negative power.
    """
    gains = np.asarray(gains, dtype=float)
    powers = np.zeros_like(gains)
    if total_power <= 0 or not np.any(gains > 0):
        return powers
    inv = np.full_like(gains, np.inf)
    pos = gains > 0
    inv[pos] = noise / gains[pos]
    active = np.argsort(inv[pos], kind="stable")
    active = np.flatnonzero(pos)[active]
    while len(active):
        level = (total_power + inv[active].sum()) / len(active)
        weakest = active[-1]
        if level - inv[weakest] > 0:
            break
        active = active[:-1]
    powers[active] = level - inv[active]
    excess = powers.sum() - total_power
    if abs(excess) > WF_TOL * max(total_power, 1.0):
        raise NumericalError(f"water-filling failed to meet power budget (excess {excess:g})")
    return powers


def _stack_per_subcarrier(channels) -> np.ndarray:
    """``K`` channels of shape ``(n_a, n_c)`` -> ``(n_c, K, n_a)`` row-channel matrices."""
    arr = np.asarray(channels)
    return np.transpose(arr, (2, 0, 1))


def zf_precoders(h_hat_set) -> np.ndarray:
    """Unit-norm ZF beams per subcarrier, ``(n_c, n_a, K)``."""
    a = _stack_per_subcarrier(h_hat_set)
    n_c, K, n_a = a.shape
    if K > n_a:
        raise ValueError(f"cannot zero-force {K} users with {n_a} antennas")
    sv = np.linalg.svd(a, compute_uv=False)
    bad = np.flatnonzero(sv[:, -1] <= RANK_TOL * sv[:, 0])
    if len(bad):
        raise NumericalError(f"estimated channel rank-deficient at subcarrier {int(bad[0])}")
    ah = np.conj(np.transpose(a, (0, 2, 1)))
    w = ah @ np.linalg.inv(a @ ah)
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def zf_waterfilling_sum_rate(h_hat_set, h_true_set, snr_db: float, return_planned: bool = False):
    """Average over subcarriers of the realized ZF sum rate (bits/channel use).

    Powers are water-filled on the gains seen through the estimated channels
    (total power = linear SNR, unit noise); the realized SINR uses the true
    channels and counts leaked inter-user interference.
    """
    w = zf_precoders(h_hat_set)
    a_hat = _stack_per_subcarrier(h_hat_set)
    a_true = _stack_per_subcarrier(h_true_set)
    if a_hat.shape != a_true.shape:
        raise ValueError("estimated and true channel sets differ in shape")
    P = 10.0 ** (snr_db / 10.0)
    planned_gain = np.abs(np.einsum("ckn,cnk->ck", a_hat, w)) ** 2
    cross = np.abs(a_true @ w) ** 2  # (n_c, K user, K beam)
    n_c, K = planned_gain.shape
    realized = np.empty(n_c)
    planned = np.empty(n_c)
    for c in range(n_c):
        p = water_filling(planned_gain[c], P)
        planned[c] = np.sum(np.log2(1.0 + p * planned_gain[c]))
        rx = cross[c] * p[None, :]
        signal = np.diag(rx)
        interference = rx.sum(axis=1) - signal
        realized[c] = np.sum(np.log2(1.0 + signal / (1.0 + interference)))
    if return_planned:
        return float(realized.mean()), float(planned.mean())
    return float(realized.mean())


@dataclass(frozen=True)
class EvalConfig:
    n_users: int = 8  # K
    snr_db: float = 10.0


@dataclass
class ModelStack:
    """Codec states per feedback length plus the test set they are scored on.

    ``test_true`` holds the normalized noiseless downlink channels, and
    ``test_observed`` what the UEs see (noisy, renormalized).
    """

    states: dict[int, CodecState]
    test_true: np.ndarray
    test_observed: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def reconstructions(self, B: int) -> np.ndarray:
        if B not in self._cache:
            self._cache[B] = self.states[B].reconstruct_many(self.test_observed)
        return self._cache[B]


@dataclass
class EvalReport:
    feedback_lengths: np.ndarray  # (rows,)
    trials: np.ndarray            # (rows,)
    users: np.ndarray             # (rows, K) test indices
    nmse_samples: np.ndarray      # (rows, K)
    cosine_samples: np.ndarray    # (rows, K)
    sum_rate_samples: np.ndarray  # (rows,)
    config_echo: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.feedback_lengths)

    def select(self, B: int) -> "EvalReport":
        m = self.feedback_lengths == B
        return EvalReport(self.feedback_lengths[m], self.trials[m], self.users[m],
                          self.nmse_samples[m], self.cosine_samples[m],
                          self.sum_rate_samples[m], self.config_echo, self.seeds)

    def summary(self) -> dict:
        out = {"config": self.config_echo, "seeds": self.seeds, "per_B": {}}
        for B in sorted(set(self.feedback_lengths.tolist())):
            sub = self.select(B)
            nm = sub.nmse_samples.ravel()
            rate = sub.sum_rate_samples
            q = [0.05, 0.25, 0.5, 0.75, 0.95]
            out["per_B"][str(B)] = {
                "trials": len(sub),
                "median_nmse": float(np.median(nm)),
                "mean_nmse": float(np.mean(nm)),
                "median_nmse_db": float(10 * np.log10(np.median(nm))),
                "nmse_quantiles": dict(zip(map(str, q), np.quantile(nm, q).tolist())),
                "mean_cosine": float(np.mean(sub.cosine_samples)),
                "cosine_quantiles": dict(zip(map(str, q), np.quantile(sub.cosine_samples, q).tolist())),
                "mean_sum_rate": float(np.mean(rate)),
                "sum_rate_stderr": float(np.std(rate, ddof=1) / math.sqrt(len(rate))) if len(rate) > 1 else 0.0,
                "sum_rate_quantiles": dict(zip(map(str, q), np.quantile(rate, q).tolist())),
            }
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["B", "trial", "users", "mean_nmse", "mean_cosine", "sum_rate"])
            for i in range(len(self)):
                w.writerow([int(self.feedback_lengths[i]), int(self.trials[i]),
                            " ".join(map(str, self.users[i].tolist())),
                            repr(float(self.nmse_samples[i].mean())),
                            repr(float(self.cosine_samples[i].mean())),
                            repr(float(self.sum_rate_samples[i]))])

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True))


def trial_users(seed: int, trial: int, n_test: int, k: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))
    return rng.choice(n_test, size=k, replace=False)


def run_monte_carlo(cfg: EvalConfig, model_stack: ModelStack, B_list, n_trials: int, seed: int) -> EvalReport:
    """Score every ``B`` on ``n_trials`` random draws of ``K`` test users.

    Trial ``t`` draws its users from seed ``(seed, t)``, so every ``B`` sees
    the same user sets and the result does not depend on execution order.
    """
    B_list = [int(b) for b in B_list]
    K = cfg.n_users
    n_test = model_stack.test_true.shape[0]
    if n_trials and n_test < K:
        raise ValueError(f"test set has {n_test} channels, need at least K={K}")
    rows = len(B_list) * n_trials
    fb = np.empty(rows, dtype=np.int64)
    tr = np.empty(rows, dtype=np.int64)
    users = np.empty((rows, K), dtype=np.int64)
    nm = np.empty((rows, K))
    cs = np.empty((rows, K))
    sr = np.empty(rows)
    draws = [trial_users(seed, t, n_test, K) for t in range(n_trials)]
    row = 0
    for B in B_list:
        rec = model_stack.reconstructions(B) if n_trials else None
        for t, sel in enumerate(draws):
            h_true = model_stack.test_true[sel]
            h_hat = rec[sel]
            fb[row], tr[row], users[row] = B, t, sel
            nm[row] = [nmse(h_hat[k], h_true[k]) for k in range(K)]
            cs[row] = [cosine_similarity(h_hat[k], h_true[k]) for k in range(K)]
            sr[row] = zf_waterfilling_sum_rate(h_hat, h_true, cfg.snr_db)
            row += 1
    echo = {"n_users": K, "snr_db": cfg.snr_db, "snr_reference": "transmit power per subcarrier, unit noise",
            "B_list": B_list, "n_trials": n_trials, "n_test": n_test}
    return EvalReport(fb, tr, users, nm, cs, sr, echo, {"monte_carlo": seed})
