import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csifeedback import codec
from csifeedback.bits import BitAllocation
from csifeedback.errors import ModelMismatchError
from csifeedback.quantizer import build_per_component

from conftest import random_normalized


def _toy_state(bits, shape=(2, 3), seed=0):
    rng = np.random.default_rng(seed)
    D = shape[0] * shape[1]
    q, _ = np.linalg.qr(rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))
    alloc = BitAllocation(bits, np.repeat(np.arange(len(bits)), bits))
    z = rng.standard_normal((200, len(bits))) + 1j * rng.standard_normal((200, len(bits)))
    cb = build_per_component(z, alloc)
    return codec.CodecState(q, np.zeros(D, complex), cb, alloc, shape)


def test_msb_first_ascending_packing():
    st_ = _toy_state([3, 1])
    assert st_.pack(np.array([5, 1])).tolist() == [1, 0, 1, 1]
    assert st_.unpack(np.array([0, 1, 1, 0])).tolist() == [3, 0]


@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_pack_unpack_roundtrip(data):
    bits = sorted(data.draw(st.lists(st.integers(1, 6), min_size=1, max_size=5)), reverse=True)
    st_ = _toy_state(bits)
    idx = np.array([data.draw(st.integers(0, 2 ** b - 1)) for b in bits])
    payload = st_.pack(idx)
    assert len(payload) == sum(bits)
    assert np.array_equal(st_.unpack(payload), idx)


@pytest.mark.parametrize("B", [64, 256, 1024])
def test_frame_length_and_roundtrip(desk_system, B):
    state = desk_system.state(B)
    rng = np.random.default_rng(B)
    for _ in range(5):
        h = random_normalized(rng, state.shape)
        frame = codec.encode(h, state)
        assert frame.b_used == B and len(frame.to_bytes()) == 12 + (B + 7) // 8
        assert codec.FeedbackFrame.from_bytes(frame.to_bytes()) == frame
        h_hat = codec.decode(frame, state)
        np.testing.assert_array_equal(h_hat, codec.decode(frame, state))
        assert codec.encode(h_hat, state, strict=False) == frame
        np.testing.assert_allclose(h_hat, state.reconstruct_many(h[None])[0], atol=1e-12)


def test_empty_frame_decodes_to_mean(desk_system):
    state = desk_system.state(0)
    h = random_normalized(np.random.default_rng(0), state.shape)
    frame = codec.encode(h, state)
    assert frame.b_used == 0 and frame.to_bytes()[8:] == b"\x00\x00\x00\x00"
    np.testing.assert_array_equal(codec.decode(frame, state), state.mean.reshape(state.shape))


def test_centered_input_maps_to_origin(desk_system):
    state = desk_system.state(64)
    mean = state.mean.reshape(state.shape)
    np.testing.assert_allclose(state.latent(mean), 0, atol=1e-12)
    idx = state.unpack(codec.encode(mean, state, strict=False).payload)
    origin = np.argmin(np.where(np.isnan(state.table.table), np.inf, np.abs(state.table.table)), axis=1)
    assert np.array_equal(idx, origin)


def test_input_guards(desk_system):
    state = desk_system.state(64)
    h = random_normalized(np.random.default_rng(1), state.shape)
    with pytest.raises(ValueError, match="not normalized"):
        codec.encode(1.02 * h, state)
    codec.encode(1.004 * h, state)
    with pytest.raises(ValueError, match="shape"):
        codec.encode(h[:, :-1], state)


def test_mismatch(desk_system):
    s64, s256 = desk_system.state(64), desk_system.state(256)
    frame = codec.encode(random_normalized(np.random.default_rng(2), s64.shape), s64)
    assert s64.model_id != s256.model_id
    with pytest.raises(ModelMismatchError, match="frame/model mismatch"):
        codec.decode(frame, s256)
    forged = codec.FeedbackFrame(frame.payload, s256.model_id)
    with pytest.raises(ModelMismatchError, match="frame/model mismatch"):
        codec.decode(forged, s256)
    with pytest.raises(ModelMismatchError):
        codec.FeedbackFrame.from_bytes(frame.to_bytes()[:-1])


def test_training_distortion_decomposes(desk_data, desk_system):
    # orthonormal basis: error = in-span quantization error + out-of-span energy
    _, train, _, _ = desk_data
    state = desk_system.state(256)
    x = train.reshape(len(train), -1) - state.mean
    z = x @ state.basis_np
    zq = state.table.dequantize(state.table.quantize(z))
    err = np.sum(np.abs(state.reconstruct_many(train) - train) ** 2)
    expect = np.sum(np.abs(z - zq) ** 2) + np.sum(np.abs(x) ** 2) - np.sum(np.abs(z) ** 2)
    assert err == pytest.approx(expect, rel=1e-8)


def test_variable_length_distortion_ordering(desk_data, desk_system):
    _, train, _, _ = desk_data
    errs = [np.sum(np.abs(desk_system.state(B).reconstruct_many(train) - train) ** 2) for B in (0, 64, 256, 1024)]
    assert all(a >= b for a, b in zip(errs, errs[1:]))
    full = desk_system.state(1024)
    assert np.array_equal(full.truncated(64).allocation.bits, desk_system.state(64).allocation.bits)
