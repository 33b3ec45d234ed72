import numpy as np
import pytest
from conftest import random_model
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import fms_exhaustive

from pf2admm import metrics
from pf2admm.prox import chain_laplacian
from pf2admm.tensor import DimensionError, Parafac2Model, RaggedTensor, reconstruct


def _permute_rescale(model, rng, flip_signs=True):
    R = model.rank
    perm = rng.permutation(R)
    alpha = rng.uniform(0.2, 5.0, R)
    beta = rng.uniform(0.2, 5.0, R)
    sa = rng.choice([-1.0, 1.0], R) if flip_signs else np.ones(R)
    sb = rng.choice([-1.0, 1.0], R) if flip_signs else np.ones(R)
    A = model.A[:, perm] * alpha[perm] * sa
    B = [Bk[:, perm] * beta[perm] * sb for Bk in model.B]
    C = model.C[:, perm] / (alpha[perm] * beta[perm]) * sa * sb
    return Parafac2Model(A, B, C), perm


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), R=st.integers(1, 5))
def test_fms_permuted_rescaled_is_one(seed, R):
    rng = np.random.default_rng(seed)
    model = random_model(rng, R=R)
    other, perm = _permute_rescale(model, rng)
    res = metrics.fms(model, other)
    assert abs(res.fms - 1.0) <= 1e-12
    # true component perm[j] sits at estimated position j
    np.testing.assert_array_equal(res.permutation[perm], np.arange(R))
    np.testing.assert_allclose(reconstruct(other)[0], reconstruct(model)[0], atol=1e-10)


def test_fms_symmetric_and_bounded(rng):
    for _ in range(20):
        a, b = random_model(rng, R=3), random_model(rng, R=3)
        s = metrics.fms(a, b).fms
        assert 0 <= s <= 1
        assert s == pytest.approx(metrics.fms(b, a).fms, abs=1e-12)


@pytest.mark.parametrize("R, Rh", [(2, 2), (2, 3), (3, 2), (3, 3), (4, 3)])
def test_fms_matches_exhaustive_search(rng, R, Rh):
    for _ in range(10):
        truth, est = random_model(rng, R=R), random_model(rng, R=Rh)
        assert metrics.fms(truth, est).fms == pytest.approx(fms_exhaustive(truth, est), abs=1e-12)


def test_fms_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        metrics.fms(random_model(rng, I=5), random_model(rng, I=6))


def test_fms_zero_component_warns(rng):
    m = random_model(rng)
    est = Parafac2Model(np.column_stack([m.A[:, 0], np.zeros(m.A.shape[0])]), m.B, m.C)
    with pytest.warns(RuntimeWarning):
        res = metrics.fms(m, est)
    assert res.fms == pytest.approx(0.5)


def test_single_mode_scores(rng):
    m = random_model(rng, R=3)
    flipped = Parafac2Model(-m.A, m.B, -m.C)
    for mode in "ABCD":
        assert metrics.fms_single_mode(m, flipped, mode).fms == pytest.approx(1.0, abs=1e-12)
    other = random_model(rng, R=3)
    joint = metrics.fms_single_mode(m, other, "A")
    free = metrics.fms_single_mode(m, other, "A", reoptimize=True)
    assert free.fms >= joint.fms - 1e-12
    np.testing.assert_array_equal(joint.permutation, metrics.fms(m, other).permutation)


def _unit_model(rng, I=5, J=(4, 6, 5), R=2, d=1.0):
    A = np.linalg.qr(rng.standard_normal((I, R)))[0]
    B = [np.linalg.qr(rng.standard_normal((Jk, R)))[0] for Jk in J]
    return Parafac2Model(A, B, np.full((len(J), R), d))


def _noise_with_norms(rng, shape_model, norms):
    out = []
    for Jk, n in zip(shape_model.shape[1], norms):
        E = rng.standard_normal((shape_model.shape[0], Jk))
        out.append(n * E / np.linalg.norm(E))
    return RaggedTensor(out)


def test_cwsnr_known_values(rng):
    m = _unit_model(rng)
    np.testing.assert_allclose(metrics.cwsnr(m, _noise_with_norms(rng, m, [1, 1, 1])), 0.0, atol=1e-12)
    snr = metrics.cwsnr(m, _noise_with_norms(rng, m, [2, 2, 2]))
    np.testing.assert_allclose(snr, -6.020599913279624, atol=1e-12)


def test_cwsnr_loop_oracle_and_scale_invariance(rng):
    m = random_model(rng, R=3)
    noise = RaggedTensor([rng.standard_normal(X.shape) for X in reconstruct(m)])
    snr = metrics.cwsnr(m, noise)
    for k, (Bk, E) in enumerate(zip(m.B, noise)):
        for r in range(3):
            d = m.C[k, r] * np.linalg.norm(m.A[:, r]) * np.linalg.norm(Bk[:, r])
            assert snr[k, r] == pytest.approx(10 * np.log10(d**2 / np.sum(E**2)), abs=1e-10)
    rescaled, _ = _permute_rescale(m, rng)
    snr2 = metrics.cwsnr(rescaled, noise)
    np.testing.assert_allclose(np.sort(snr2, axis=1), np.sort(snr, axis=1), atol=1e-10)


def test_cwsnr_zero_noise_slice(rng):
    m = _unit_model(rng)
    snr = metrics.cwsnr(m, _noise_with_norms(rng, m, [1, 0, 1]))
    assert np.all(np.isposinf(snr[1]))


def test_cosine_sim_B(rng):
    m = random_model(rng, R=3)
    neg = Parafac2Model(m.A, [Bk * np.array([1, -1, 1]) for Bk in m.B], m.C * np.array([1, -1, 1]))
    sim = metrics.cosine_sim_B(m, neg)
    np.testing.assert_allclose(sim[:, [0, 2]], 1.0, atol=1e-12)
    np.testing.assert_allclose(sim[:, 1], -1.0, atol=1e-12)
    small = Parafac2Model(m.A[:, :2], [Bk[:, :2] for Bk in m.B], m.C[:, :2])
    sim = metrics.cosine_sim_B(m, small)
    assert np.all(np.isnan(sim[:, 2]))


def test_triple_cosine_orthogonal_is_zero(rng):
    m = _unit_model(rng, J=(5, 5, 5), R=3)
    assert metrics.triple_cosine(m) == pytest.approx(0.0, abs=1e-12)
    assert not metrics.is_degenerate(m)


def test_triple_cosine_flags_degenerate_pair(rng):
    a, b = rng.standard_normal(6), rng.standard_normal(5)
    B = [np.column_stack([b, b]), np.column_stack([2 * b, 2 * b])]
    c = rng.uniform(0.5, 1.5, 2)
    m = Parafac2Model(np.column_stack([a, -a]), B, np.column_stack([c, c]))
    tc = metrics.triple_cosine(m)
    assert tc == pytest.approx(-1.0, abs=1e-12)
    assert tc < metrics.DEGENERACY_THRESHOLD
    assert metrics.is_degenerate(m)


def test_triple_cosine_loop_oracle(rng):
    def cos(x, y):
        return x @ y / (np.linalg.norm(x) * np.linalg.norm(y))

    for _ in range(10):
        m = random_model(rng, J=(6, 6, 6), R=3)
        expect = min(
            cos(m.A[:, r], m.A[:, s]) * cos(m.B[0][:, r], m.B[1][:, s]) * cos(m.C[:, r], m.C[:, s])
            for r in range(3) for s in range(3) if r != s
        )
        assert metrics.triple_cosine(m) == pytest.approx(expect, abs=1e-12)
        scaled = Parafac2Model(3 * m.A, [0.5 * B for B in m.B], m.C)
        assert metrics.triple_cosine(scaled) == pytest.approx(expect, abs=1e-12)


def test_triple_cosine_ragged_falls_back_to_slice_average(rng):
    m = random_model(rng, J=(5, 7, 6), R=2)
    assert metrics.triple_cosine(m) == metrics.triple_cosine(m, all_slices=True)
    a = rng.standard_normal(6)
    B = [np.column_stack([b, b]) for b in (rng.standard_normal(5), rng.standard_normal(7))]
    deg = Parafac2Model(np.column_stack([a, -a]), B, np.ones((2, 2)))
    assert metrics.triple_cosine(deg) == pytest.approx(-1.0, abs=1e-12)


def test_triple_cosine_edge_cases(rng):
    assert metrics.triple_cosine(random_model(rng, R=1)) == 1.0
    with pytest.raises(DimensionError):
        metrics.triple_cosine(random_model(rng, J=(5,), R=2))


def _scale_instance(rng):
    J = 6
    truth = random_model(rng, I=4, J=(J,) * 3, R=2)
    return metrics.parafac2_scale_instance(reconstruct(truth), 2, chain_laplacian(J))


@pytest.mark.parametrize("a", [0.25, 1.0, 4.0])
def test_scale_equivalence_identity(rng, a):
    rep = metrics.scale_equivalence_check(_scale_instance(rng), a)
    assert rep.passed
    assert rep.exponent == 2.0
    assert rep.max_rel_diff <= 1e-10


def test_scale_check_detects_wrong_exponent(rng):
    inst = _scale_instance(rng)
    inst.d_v = 1.0  # r_v is really quadratic
    assert not metrics.scale_equivalence_check(inst, 4.0, n_points=5).passed


def test_scale_instance_loss_is_sse(rng):
    J = 5
    m = random_model(rng, I=4, J=(J, J), R=2)
    data = reconstruct(random_model(rng, I=4, J=(J, J), R=2))
    inst = metrics.parafac2_scale_instance(data, 2, chain_laplacian(J))
    u = np.concatenate([m.A.ravel(), m.C.ravel()])
    v = np.stack(m.B).ravel()
    expect = sum(np.sum((X - Xh) ** 2) for X, Xh in zip(data, reconstruct(m)))
    assert inst.f(u, v) == pytest.approx(expect, rel=1e-12)
    L = chain_laplacian(J)
    assert inst.r_v(v) == pytest.approx(sum(np.trace(B.T @ L @ B) for B in m.B), rel=1e-12)


def test_scale_instance_requires_equal_widths(rng):
    data = reconstruct(random_model(rng, J=(5, 6), R=2))
    with pytest.raises(DimensionError):
        metrics.parafac2_scale_instance(data, 2, chain_laplacian(5))
    with pytest.raises(ValueError):
        metrics.scale_equivalence_check(_scale_instance(rng), 0.0)
