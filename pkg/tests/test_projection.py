import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pf2admm.prox import project_parafac2
from pf2admm.prox.projection import ProjectionInfo, projection_objective
from pf2admm.tensor import CouplingVariables, DimensionError


def _instance(rng, K=8, R=3, lo=5, hi=12):
    J = rng.integers(lo, hi + 1, size=K)
    Bt = [rng.standard_normal((int(Jk), R)) for Jk in J]
    rho = rng.uniform(0.5, 2.0, K)
    warm = CouplingVariables([np.eye(int(Jk), R) for Jk in J], rng.standard_normal((R, R)))
    return Bt, rho, warm


def _gram_spread(Y):
    grams = np.stack([Yk.T @ Yk for Yk in Y])
    return float(np.max(np.abs(grams - grams[0])))


def test_grams_constant_and_objective_monotone():
    rng = np.random.default_rng(7)
    for _ in range(20):
        Bt, rho, warm = _instance(rng)
        info = ProjectionInfo()
        coupling, Y = project_parafac2(Bt, rho, warm, sweeps=200, info=info)
        gram = Y[0].T @ Y[0]
        assert _gram_spread(Y) <= 1e-12 * max(1.0, np.abs(gram).max())
        assert coupling.orthonormality_error() < 1e-12
        obj = np.array(info.objective)
        assert len(obj) == 200
        slack = 1e-12 * obj[0]
        assert np.all(np.diff(obj) <= slack)


def test_recorded_objective_matches_standalone():
    rng = np.random.default_rng(1)
    Bt, rho, warm = _instance(rng, K=4)
    info = ProjectionInfo()
    coupling, _ = project_parafac2(Bt, rho, warm, sweeps=3, info=info)
    assert info.objective[-1] == pytest.approx(projection_objective(Bt, rho, coupling), rel=1e-12)


def test_rank_one_average_sphere():
    # R = 1: every slice is sent to its own direction at the common radius,
    # which is the rho-weighted mean of the input norms
    b1 = np.array([[1.0], [0.0], [0.0]])
    b2 = np.array([[0.0], [3.0], [0.0], [0.0]])
    warm = CouplingVariables([np.zeros((3, 1)), np.zeros((4, 1))], np.ones((1, 1)))
    _, Y = project_parafac2([b1, b2], [1.0, 1.0], warm)
    np.testing.assert_allclose(Y[0], [[2.0], [0.0], [0.0]], atol=1e-10)
    np.testing.assert_allclose(Y[1], [[0.0], [2.0], [0.0], [0.0]], atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), K=st.integers(1, 6))
def test_rank_one_weighted_radius(seed, K):
    rng = np.random.default_rng(seed)
    Bt = [rng.standard_normal((int(rng.integers(1, 6)), 1)) for _ in range(K)]
    rho = rng.uniform(0.1, 3.0, K)
    norms = np.array([np.linalg.norm(b) for b in Bt])
    radius = rho @ norms / rho.sum()
    warm = CouplingVariables([np.zeros_like(b) for b in Bt], np.array([[rng.choice([-1.0, 1.0])]]))
    _, Y = project_parafac2(Bt, rho, warm)
    for b, y, n in zip(Bt, Y, norms):
        np.testing.assert_allclose(y, radius * b / n, atol=1e-10)


def test_feasible_input_is_fixed_point(rng):
    R = 3
    Delta = rng.standard_normal((R, R))
    P = [np.linalg.qr(rng.standard_normal((J, R)))[0] for J in (4, 6, 9)]
    Bt = [Pk @ Delta for Pk in P]
    warm = CouplingVariables([np.zeros_like(Pk) for Pk in P], rng.standard_normal((R, R)))
    _, Y = project_parafac2(Bt, np.ones(3), warm, sweeps=500)
    for B, Yk in zip(Bt, Y):
        np.testing.assert_allclose(Yk, B, atol=1e-8)


def test_zero_delta_is_reinitialized(rng):
    Bt = [rng.standard_normal((5, 2)) for _ in range(3)]
    warm = CouplingVariables([np.eye(5, 2)] * 3, np.zeros((2, 2)))
    coupling, Y = project_parafac2(Bt, np.ones(3), warm, sweeps=5)
    assert np.any(coupling.DeltaB)
    assert all(np.all(np.isfinite(Yk)) for Yk in Y)


def test_warm_start_is_not_modified(rng):
    Bt = [rng.standard_normal((5, 2)) for _ in range(2)]
    Delta = rng.standard_normal((2, 2))
    warm = CouplingVariables([np.eye(5, 2)] * 2, Delta.copy())
    project_parafac2(Bt, np.ones(2), warm, sweeps=3)
    np.testing.assert_array_equal(warm.DeltaB, Delta)


def test_rank_deficient_flag():
    Bt = [np.zeros((4, 2)), np.zeros((5, 2))]
    Bt[0][0, 0] = Bt[1][0, 0] = 1.0
    warm = CouplingVariables([np.eye(4, 2), np.eye(5, 2)], np.eye(2))
    info = ProjectionInfo()
    project_parafac2(Bt, np.ones(2), warm, info=info)
    assert info.rank_deficient


@pytest.mark.parametrize(
    "rho, sweeps, exc",
    [([1.0], 1, ValueError), ([1.0, -1.0], 1, ValueError), ([1.0, 1.0], 0, ValueError)],
)
def test_bad_arguments(rng, rho, sweeps, exc):
    Bt = [rng.standard_normal((4, 2)) for _ in range(2)]
    warm = CouplingVariables([np.eye(4, 2)] * 2, np.eye(2))
    with pytest.raises(exc):
        project_parafac2(Bt, rho, warm, sweeps=sweeps)


def test_slice_narrower_than_rank(rng):
    Bt = [rng.standard_normal((2, 3)), rng.standard_normal((4, 3))]
    warm = CouplingVariables([np.eye(2, 3), np.eye(4, 3)], np.eye(3))
    with pytest.raises(DimensionError):
        project_parafac2(Bt, [1.0, 1.0], warm)
