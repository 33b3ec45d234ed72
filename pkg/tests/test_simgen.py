import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pf2admm import simgen
from pf2admm.simgen import Setup, SimSpec, add_noise, simulate
from pf2admm.tensor import RaggedTensor, relative_sse


def gram_spread(model):
    grams = [B.T @ B for B in model.B]
    return max(np.max(np.abs(G - grams[0])) for G in grams)


# small dims so the whole module runs in seconds
SMALL = {
    Setup.SHIFT: dict(I=8, J=12, K=6, R=3),
    Setup.CWSNR_SHIFT: dict(I=8, J=12, K=6, R=5),
    Setup.NN_CROSSPRODUCT: dict(I=8, J=(10, 14), K=4, R=3),
    Setup.UNIMODAL: dict(I=6, J=50, K=8, R=3),
    Setup.SMOOTH_POLY: dict(I=6, J=40, K=5, R=3),
    Setup.PIECEWISE_TV: dict(I=6, J=(30, 40), K=5, R=3),
    Setup.SM1: dict(I=6, J=20, K=5, R=4),
}


def test_default_dims():
    assert simgen.DEFAULTS[Setup.SHIFT] == (30, 40, 50, 3, 0.33)
    assert simgen.DEFAULTS[Setup.UNIMODAL] == (10, 50, 15, 5, 0.33)
    assert simgen.DEFAULTS[Setup.CWSNR_SHIFT][:3] == (30, 40, 100)
    spec = SimSpec("shift")
    assert (spec.I, spec.J, spec.K, spec.R, spec.eta) == (30, 40, 50, 3, 0.33)


def test_unimodal_shift_is_one_grid_step():
    assert 20 / 49 == pytest.approx(0.41, abs=0.002)


@pytest.mark.parametrize("setup", [s for s in Setup if s not in (Setup.UNIMODAL, Setup.NN_CROSSPRODUCT)])
def test_exact_generators_have_constant_grams(setup):
    sim = simulate(SimSpec(setup, eta=0.0, seed=1, **SMALL[setup]))
    assert gram_spread(sim.truth) < 1e-10


def test_nn_crossproduct_grams_and_sign():
    sim = simulate(SimSpec("nn_crossproduct", eta=0.0, seed=2, **SMALL[Setup.NN_CROSSPRODUCT]))
    target = np.array(sim.info["gram_target"])
    for B in sim.truth.B:
        assert B.min() >= 0
        assert np.max(np.abs(B.T @ B - target)) < 1e-6
    assert gram_spread(sim.truth) < 1e-5
    assert sim.info["gram_loss_max"] < 1e-12


def test_nn_crossproduct_mixed_C():
    plain, _ = simgen.gen_nn_crossproduct(5, 10, 4, 3, np.random.default_rng(4))
    mixed, _ = simgen.gen_nn_crossproduct(5, 10, 4, 3, np.random.default_rng(4), mixC=True)
    np.testing.assert_allclose(mixed.C, 0.5 * plain.C[:, :1] + 0.5 * plain.C, rtol=1e-12)
    np.testing.assert_allclose(mixed.C[:, 0], plain.C[:, 0], rtol=1e-12)


def test_shift_slices_are_cyclic():
    rng = np.random.default_rng(5)
    m = simgen.gen_shift(4, 7, 5, 2, rng)
    for k, B in enumerate(m.B):
        for j in range(7):
            np.testing.assert_array_equal(B[j], m.B[0][(j + k) % 7])
    assert m.C.min() >= 0.1 and m.C.max() <= 1.1
    assert m.A.min() >= 0


def test_unimodal_columns():
    sim = simulate(SimSpec("unimodal", eta=0.0, seed=3))
    for B in sim.truth.B:
        assert B.min() >= 0
        for col in B.T:
            d = np.sign(np.diff(col))
            d = d[d != 0]
            assert np.count_nonzero(np.diff(d) < 0) <= 1 and np.count_nonzero(np.diff(d) > 0) == 0


def test_unimodal_exact_variant_is_nearly_pf2():
    for seed in range(5):
        sim = simulate(SimSpec("unimodal", eta=0.0, seed=seed, pf2_exact=True))
        assert gram_spread(sim.truth) < 1e-3
        noisy_sigma = simulate(SimSpec("unimodal", eta=0.0, seed=seed))
        assert gram_spread(noisy_sigma.truth) > gram_spread(sim.truth)


def test_smooth_poly_basis():
    M = simgen.cubic_basis(200)
    np.testing.assert_allclose(M.T @ M, np.eye(4), atol=1e-12)
    sim = simulate(SimSpec("smooth_poly", eta=0.0, seed=0, **SMALL[Setup.SMOOTH_POLY]))
    M = simgen.cubic_basis(40)
    for B in sim.truth.B:
        assert np.max(np.abs(B - M @ (M.T @ B))) < 1e-12
    with pytest.raises(ValueError):
        simgen.gen_smooth_poly(5, 20, 3, 5, np.random.default_rng(0))


def test_piecewise_breakpoints():
    sim = simulate(SimSpec("piecewise_tv", eta=0.0, seed=0, **SMALL[Setup.PIECEWISE_TV]))
    for B in sim.truth.B:
        assert 30 <= B.shape[0] <= 40
        for col in B.T:
            assert np.count_nonzero(np.abs(np.diff(col)) > 1e-14) <= 4


def test_sm1_supports():
    sim = simulate(SimSpec("sm1", eta=0.0, seed=0, **SMALL[Setup.SM1]))
    for B in sim.truth.B:
        assert B.min() >= 0
    sizes = simgen.dirichlet_partition(np.random.default_rng(1), 10, 5)
    assert sizes.sum() == 10 and sizes.min() >= 1
    m = simgen.gen_sm1(4, 10, 3, 5, np.random.default_rng(2))
    assert gram_spread(m) < 1e-10
    with pytest.raises(ValueError):
        simgen.dirichlet_partition(np.random.default_rng(1), 3, 5)


def test_sm1_grams_constant_and_partitions_cover():
    m = simgen.gen_sm1(4, 30, 3, 4, np.random.default_rng(8))
    G = m.B[0].T @ m.B[0]
    for B in m.B:
        np.testing.assert_allclose(B.T @ B, G, atol=1e-12)
    rng = np.random.default_rng(3)
    for _ in range(20):
        sizes = simgen.dirichlet_partition(rng, 30, 4)
        assert sizes.sum() == 30 and np.all(sizes > 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), eta=st.floats(0.0, 3.0))
def test_noise_ratio_is_exact(seed, eta):
    rng = np.random.default_rng(seed)
    X = RaggedTensor([rng.standard_normal((4, J)) for J in (3, 5, 4)])
    noisy, E = add_noise(X, eta, seed)
    diff = np.sqrt(sum(np.sum((Y - Xk) ** 2) for Y, Xk in zip(noisy, X)))
    assert diff / X.norm() == pytest.approx(eta, rel=1e-12, abs=1e-15)
    assert E.norm() == pytest.approx(eta * X.norm(), rel=1e-12, abs=1e-15)


def test_zero_noise_is_identity_and_bad_inputs():
    X = RaggedTensor([np.ones((2, 3))])
    noisy, _ = add_noise(X, 0.0, 0)
    np.testing.assert_array_equal(noisy[0], X[0])
    with pytest.raises(ValueError):
        add_noise(RaggedTensor([np.zeros((2, 2))]), 0.1, 0)
    with pytest.raises(ValueError):
        add_noise(X, -0.1, 0)
    with pytest.raises(ValueError):
        SimSpec("shift", eta=-1)
    with pytest.raises(ValueError):
        SimSpec("shift", I=0)


def test_rel_sse_of_truth_near_noise_level():
    eta = 0.33
    sim = simulate(SimSpec("shift", 30, 40, 50, 3, eta, seed=0))
    expect = eta**2 / (1 + eta**2)
    assert relative_sse(sim.truth, sim.noisy) == pytest.approx(expect, rel=0.2)


def test_simulation_is_deterministic():
    spec = SimSpec("nn_crossproduct", eta=0.5, seed=9, **SMALL[Setup.NN_CROSSPRODUCT])
    a, b = simulate(spec), simulate(spec)
    for X, Y in zip(a.noisy, b.noisy):
        np.testing.assert_array_equal(X, Y)
    other = simulate(SimSpec("nn_crossproduct", eta=0.2, seed=9, **SMALL[Setup.NN_CROSSPRODUCT]))
    # the noise level does not touch the ground truth
    np.testing.assert_array_equal(other.truth.A, a.truth.A)


def test_spec_roundtrip_and_write(tmp_path):
    spec = SimSpec("shift", seed=4, **SMALL[Setup.SHIFT])
    assert SimSpec.from_dict(spec.to_dict()) == spec
    sim = simulate(spec)
    simgen.write_simulation(tmp_path / "sim", sim)
    data, truth, noise, spec2 = simgen.read_simulation(tmp_path / "sim")
    assert spec2 == spec
    for X, Y in zip(data, sim.noisy):
        np.testing.assert_array_equal(X, Y)
    np.testing.assert_array_equal(truth.C, sim.truth.C)
    assert noise.norm() == pytest.approx(sim.noise.norm())
