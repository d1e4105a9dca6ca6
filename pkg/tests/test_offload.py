import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csifeedback import evaluation, offload, pca, pipeline
from csifeedback.bits import BitAllocation
from csifeedback.errors import RankCollapseError

DIMS = (2, 4, 8)
D = 64


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, D)) + 1j * rng.standard_normal((40, D))
    return pca.fit(x, DIMS)


def _max_gram_error(v):
    return np.max(np.abs(v.conj().T @ v - np.eye(v.shape[1])))


def _full_scale_allocation():
    # b_1 = 11, N_P = 374, B = 2048: 172 components at 6 bits, 201 at 5
    bits = np.r_[11, np.full(172, 6), np.full(201, 5)]
    return BitAllocation(bits, np.repeat(np.arange(374), bits))


def test_full_scale_counts():
    assert offload.count_model_params(64, 160, 374, mode="exact") == 7_680_000
    assert offload.count_model_params(64, 160, 374, 16, "sparsified") == 738_560
    alloc = _full_scale_allocation()
    assert (alloc.total, alloc.latent_dim, alloc.bits[0]) == (2048, 374, 11)
    assert offload.count_codebook_params(alloc, "shared") == 10_610


def test_small_counts():
    assert offload.count_model_params(4, 8, 3, 1, "sparsified") == 3 * 32 * 3 + 2 * 32
    assert offload.count_codebook_params(BitAllocation([2, 1], [0, 1, 0]), "per_component") == 19
    assert offload.count_codebook_params(BitAllocation([0, 0], []), "shared") == 0
    counts = [offload.count_model_params(64, 160, 10, eta, "sparsified") for eta in (1, 2, 4, 16, 64)]
    assert all(a > b for a, b in zip(counts, counts[1:]))


def test_eta_range(model):
    with pytest.raises(ValueError):
        offload.sparsify(model, 3, 0.5)
    with pytest.raises(ValueError):
        offload.sparsify(model, 3, D + 1)


def test_eta_one_roundtrip(model):
    sp = offload.sparsify(model, 10, 1)
    assert sp.keep == D
    np.testing.assert_allclose(offload.densify(sp), model.components[:, :10], rtol=0, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(eta=st.floats(1, 16), n_p=st.integers(1, 8))
def test_densify_is_orthonormal(model, eta, n_p):
    sp = offload.sparsify(model, n_p, eta)
    assert sp.keep == int(np.floor(D / eta))
    assert np.all(np.diff(sp.positions.astype(np.int64), axis=1) > 0)
    assert _max_gram_error(offload.densify(sp)) <= 1e-8


def test_single_basis_function_kept_exactly():
    f = np.zeros(DIMS, complex)
    f[1, 2, 5] = 1.0
    v = np.fft.ifftn(f, norm="ortho").reshape(-1, 1)
    m = pca.PcaModel(v, np.ones(1), np.zeros(D, complex), DIMS)
    for eta in (1, 8, 64):
        sp = offload.sparsify(m, 1, eta)
        assert np.count_nonzero(np.abs(sp.values) > 1e-12) == 1
        np.testing.assert_allclose(offload.densify(sp), v, rtol=0, atol=1e-12)


def test_mask_ties_go_to_lowest_index():
    f = np.zeros(D, complex)
    f[[3, 9, 20, 40]] = 1.0
    v = np.fft.ifftn(f.reshape(DIMS), norm="ortho").reshape(-1, 1)
    m = pca.PcaModel(v, np.ones(1), np.zeros(D, complex), DIMS)
    assert offload.sparsify(m, 1, 32).positions[0].tolist() == [3, 9]


def test_energy_capture(model):
    prev = None
    for eta in (1, 2, 4, 8, 16):
        e = offload.retained_energy(model, 5, eta)
        if eta == 1:
            np.testing.assert_allclose(e, 1.0, rtol=1e-12)
        else:
            assert np.all(e <= prev + 1e-12)
        prev = e


def test_rank_collapse():
    a = np.ones((4, 2), complex)
    with pytest.raises(RankCollapseError, match="rank collapse"):
        offload.gram_schmidt(a)


def test_gram_schmidt_prefix_stable(model):
    a = model.components[:, :6] + 0.01
    np.testing.assert_array_equal(offload.gram_schmidt(a)[:, :3], offload.gram_schmidt(a[:, :3]))


def test_bs_ue_bit_identity_and_wire_size(model):
    sp = offload.sparsify(model, 6, 4)
    wire = offload.to_wire_precision(sp)
    blob = wire.to_bytes()
    ue = offload.SparsifiedModel.from_bytes(blob)
    np.testing.assert_array_equal(offload.densify(ue), offload.densify(wire))
    np.testing.assert_array_equal(ue.positions, sp.positions)
    # every real parameter is 4 bytes on the wire, plus the header and one count per component
    n_params = offload.count_model_params(8, 8, 6, 4, "sparsified")
    assert len(blob) == 4 * n_params + wire.header_bytes() + 4 * wire.n_p


def test_wire_rejects_garbage():
    with pytest.raises(ValueError):
        offload.SparsifiedModel.from_bytes(b"XXXX" + bytes(40))


@pytest.mark.slow
def test_eta16_costs_under_one_db(desk_data, desk_system):
    sc, train, test_true, test_obs = desk_data
    exact = pipeline.train(train, sc.dims, pipeline.TrainConfig((256,), 1, "analytic", "per_component"))

    def median_db(system):
        rec = system.state(256).reconstruct_many(test_obs)
        return 10 * np.log10(np.median([evaluation.nmse(r, t) for r, t in zip(rec, test_true)]))

    assert median_db(desk_system) - median_db(exact) < 1.0
