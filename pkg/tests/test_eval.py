import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csifeedback import evaluation
from csifeedback.errors import NumericalError

from conftest import random_normalized


def _pair(seed, shape=(8, 6)):
    rng = np.random.default_rng(seed)
    return random_normalized(rng, shape), random_normalized(rng, shape)


def test_nmse_identities():
    h, _ = _pair(0)
    assert evaluation.nmse(h, h) == 0.0
    assert evaluation.nmse(np.zeros_like(h), h) == 1.0
    assert evaluation.nmse(2 * h, h) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        evaluation.nmse(h, np.zeros_like(h))
    with pytest.raises(ValueError):
        evaluation.nmse(h[:, :2], h)


def test_cosine_identities():
    h, _ = _pair(1)
    assert evaluation.cosine_similarity(h, h) == pytest.approx(1.0, abs=1e-15)
    a = np.zeros((4, 3), complex)
    b = np.zeros((4, 3), complex)
    a[0], b[1] = 1, 1j
    assert evaluation.cosine_similarity(a, b) == 0.0
    with pytest.raises(ValueError, match="zero column"):
        evaluation.cosine_similarity(np.zeros_like(h), h)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_cosine_matches_loop_and_scaling(seed):
    h_hat, h = _pair(seed)
    loop = 0.0
    for c in range(h.shape[1]):
        x, y = h_hat[:, c], h[:, c]
        loop += abs(sum(xi.conjugate() * yi for xi, yi in zip(x, y))) / (
            math.sqrt(sum(abs(xi) ** 2 for xi in x)) * math.sqrt(sum(abs(yi) ** 2 for yi in y)))
    loop /= h.shape[1]
    assert evaluation.cosine_similarity(h_hat, h) == pytest.approx(loop, abs=1e-12)
    scale = np.random.default_rng(seed).standard_normal(h.shape[1]) * np.exp(1j * seed)
    assert evaluation.cosine_similarity(h_hat * scale, h) == pytest.approx(loop, abs=1e-12)
    assert evaluation.cosine_similarity(h, h * scale) == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= loop <= 1.0


def test_water_filling():
    p = evaluation.water_filling(np.array([1.0, 0.1]), 1.0)
    np.testing.assert_allclose(p, [1.0, 0.0])
    p = evaluation.water_filling(np.array([2.0, 1.0, 0.5]), 10.0)
    assert p.sum() == pytest.approx(10.0, abs=1e-10)
    active = p > 0
    level = p[active] + 1 / np.array([2.0, 1.0, 0.5])[active]
    np.testing.assert_allclose(level, level[0])
    np.testing.assert_array_equal(evaluation.water_filling(np.array([0.0, 0.0]), 1.0), 0)


def test_single_user_flat_channel():
    n_a, n_c, snr_db = 8, 4, 7.0
    h = np.exp(1j * np.arange(n_a))[:, None] * np.ones((1, n_c))
    P = 10 ** (snr_db / 10)
    rate = evaluation.zf_waterfilling_sum_rate(h[None], h[None], snr_db)
    assert rate == pytest.approx(math.log2(1 + P * n_a), rel=1e-12)


def test_two_orthogonal_users():
    n_a, n_c, g, P = 4, 3, 2.5, 10.0
    h1 = np.zeros((n_a, n_c), complex)
    h2 = np.zeros((n_a, n_c), complex)
    h1[0], h2[1] = math.sqrt(g), 1j * math.sqrt(g)
    rate = evaluation.zf_waterfilling_sum_rate(np.stack([h1, h2]), np.stack([h1, h2]), 10.0)
    assert rate == pytest.approx(2 * math.log2(1 + (P / 2) * g), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(1, 6), snr=st.floats(-10, 30))
def test_perfect_csi_realized_equals_planned(seed, k, snr):
    rng = np.random.default_rng(seed)
    hs = np.stack([random_normalized(rng, (8, 5)) for _ in range(k)])
    realized, planned = evaluation.zf_waterfilling_sum_rate(hs, hs, snr, return_planned=True)
    assert abs(realized - planned) <= 1e-9


def test_imperfect_csi_loses_rate():
    rng = np.random.default_rng(3)
    hs = np.stack([random_normalized(rng, (8, 5)) for _ in range(4)])
    noisy = hs + 0.3 * (rng.standard_normal(hs.shape) + 1j * rng.standard_normal(hs.shape))
    assert evaluation.zf_waterfilling_sum_rate(noisy, hs, 10) < evaluation.zf_waterfilling_sum_rate(hs, hs, 10)


def test_rate_non_decreasing_in_snr():
    rng = np.random.default_rng(4)
    hs = np.stack([random_normalized(rng, (8, 5)) for _ in range(4)])
    rates = [evaluation.zf_waterfilling_sum_rate(hs, hs, s) for s in range(-10, 31, 5)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_rank_deficiency_names_subcarrier():
    rng = np.random.default_rng(5)
    hs = np.stack([random_normalized(rng, (4, 3)) for _ in range(2)])
    hs[1, :, 2] = hs[0, :, 2]
    with pytest.raises(NumericalError, match="subcarrier 2"):
        evaluation.zf_waterfilling_sum_rate(hs, hs, 10)
    with pytest.raises(ValueError):
        evaluation.zf_waterfilling_sum_rate(np.zeros((5, 4, 3)), np.zeros((5, 4, 3)), 10)


@pytest.fixture(scope="module")
def stack(desk_data, desk_system):
    _, _, test_true, test_obs = desk_data
    states = {B: desk_system.state(B) for B in (64, 256)}
    return evaluation.ModelStack(states, test_true, test_obs)


def test_monte_carlo_empty_and_deterministic(stack, tmp_path):
    cfg = evaluation.EvalConfig(n_users=4, snr_db=10)
    empty = evaluation.run_monte_carlo(cfg, stack, [64, 256], 0, 1)
    assert len(empty) == 0 and empty.summary()["per_B"] == {}
    a = evaluation.run_monte_carlo(cfg, stack, [64, 256], 6, 1)
    b = evaluation.run_monte_carlo(cfg, stack, [256, 64], 6, 1)
    assert len(a) == 12
    np.testing.assert_array_equal(a.select(64).sum_rate_samples, b.select(64).sum_rate_samples)
    np.testing.assert_array_equal(a.select(64).users, a.select(256).users)
    assert np.all((a.cosine_samples >= 0) & (a.cosine_samples <= 1)) and np.all(a.nmse_samples >= 0)
    a.to_csv(tmp_path / "r.csv")
    a.to_json(tmp_path / "r.json")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 13
    summary = json.loads((tmp_path / "r.json").read_text())
    assert summary["config"]["snr_reference"].startswith("transmit power")
    assert set(summary["per_B"]) == {"64", "256"}


def test_trial_users_stable():
    u = evaluation.trial_users(5, 3, 100, 8)
    assert len(set(u.tolist())) == 8
    np.testing.assert_array_equal(u, evaluation.trial_users(5, 3, 100, 8))
