"""Recovery metrics and diagnostics for PARAFAC2 models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import DimensionError, Parafac2Model, RaggedTensor

__all__ = [
    "MatchResult",
    "fms",
    "fms_single_mode",
    "cwsnr",
    "cosine_sim_B",
    "triple_cosine",
    "is_degenerate",
    "DEGENERACY_THRESHOLD",
    "ScaleInstance",
    "ScaleCheckReport",
    "scale_equivalence_check",
    "parafac2_scale_instance",
]

DEGENERACY_THRESHOLD = -0.85


@dataclass
class MatchResult:
    """Outcome of matching estimated components to true ones.

    Attributes
    ----------
    fms : float
        Mean score over the ``min(R, R_hat)`` matched pairs.
    permutation : ndarray of int, shape (R,)
        ``permutation[r]`` is the estimated component matched to true
        component ``r``, or -1 if ``r`` is unmatched (``R > R_hat``).
    per_component : ndarray, shape (R,)
        Score of each true component's pair (0 when unmatched).
    """

    fms: float
    permutation: np.ndarray
    per_component: np.ndarray


def _unit_columns(M, what):
    norms = np.linalg.norm(M, axis=0)
    zero = norms == 0
    if np.any(zero):
        warnings.warn(f"zero-norm component in {what}; its scores are set to 0", RuntimeWarning, stacklevel=3)
    return M / np.where(zero, 1.0, norms)


def _mode_factors(model: Parafac2Model, mode: str):
    mode = mode.upper()
    if mode == "A":
        return model.A
    if mode == "B":
        return np.concatenate(model.B, axis=0)
    if mode in ("C", "D"):
        return model.C
    raise ValueError(f"unknown mode {mode!r}")


def _check_pair(truth, est):
    I, J, K = truth.shape
    I2, J2, K2 = est.shape
    if I != I2 or K != K2 or J != J2:
        raise DimensionError("truth and estimate have different data dimensions")


def _congruences(truth, est, modes):
    scores = np.ones((truth.rank, est.rank))
    for mode in modes:
        T = _unit_columns(_mode_factors(truth, mode), f"true {mode}")
        E = _unit_columns(_mode_factors(est, mode), f"estimated {mode}")
        scores = scores * (T.T @ E)
    return scores


def _match(scores):
    scores = np.abs(scores)
    rows, cols = linear_sum_assignment(scores, maximize=True)
    permutation = -np.ones(scores.shape[0], dtype=int)
    permutation[rows] = cols
    per = np.zeros(scores.shape[0])
    per[rows] = scores[rows, cols]
    return MatchResult(float(scores[rows, cols].mean()), permutation, per)


def fms(truth: Parafac2Model, est: Parafac2Model) -> MatchResult:
    """Factor match score with optimal (Hungarian) component matching.

    Each component's score is ``|a_r^T a_hat_s| |b_r^T b_hat_s| |c_r^T c_hat_s|``
    on unit-normalized vectors, where ``b`` concatenates the component over
    all ``B_k``. Ranks may differ; the best ``min(R, R_hat)`` pairs count.
    """
    _check_pair(truth, est)
    return _match(_congruences(truth, est, "ABC"))


def fms_single_mode(truth: Parafac2Model, est: Parafac2Model, mode: str, reoptimize: bool = False) -> MatchResult:
    """Mean ``|u_r^T u_hat_{pi(r)}|`` for one mode.

    The matching ``pi`` comes from the joint :func:`fms` unless
    ``reoptimize`` is set, in which case it maximizes this mode alone.
    """
    _check_pair(truth, est)
    scores = np.abs(_congruences(truth, est, mode.upper().replace("D", "C")))
    if reoptimize:
        return _match(scores)
    permutation = fms(truth, est).permutation
    rows = np.flatnonzero(permutation >= 0)
    per = np.zeros(truth.rank)
    per[rows] = scores[rows, permutation[rows]]
    return MatchResult(float(per[rows].mean()), permutation, per)


def _normalized_weights(model: Parafac2Model):
    """``C`` rescaled so that A and every ``B_k`` have unit-norm columns, and the unit-norm factors."""
    a_norm = np.linalg.norm(model.A, axis=0)
    b_norms = np.array([np.linalg.norm(Bk, axis=0) for Bk in model.B])
    return model.C * a_norm[None, :] * b_norms


def cwsnr(truth: Parafac2Model, noise: RaggedTensor) -> np.ndarray:
    """Column-wise SNR in dB, ``10 log10(d_kr^2 / ||E_k||^2)`` with unit-norm A and B_k columns.

    Slices without noise give ``+inf``.
    """
    I, J, K = truth.shape
    if noise.I != I or noise.K != K or noise.J != J:
        raise DimensionError("noise tensor does not match the model")
    D = _normalized_weights(truth)
    noise_sq = np.array([float(np.sum(E**2)) for E in noise])
    with np.errstate(divide="ignore"):
        ratio = D**2 / noise_sq[:, None]
        out = 10.0 * np.log10(ratio)
    out[noise_sq == 0] = np.inf
    return out


def cosine_sim_B(truth: Parafac2Model, est: Parafac2Model, permutation=None) -> np.ndarray:
    """``SIM[k, r]``: cosine between true ``[b_k]_r`` and its matched estimate (signed).

    Unmatched true components get NaN.
    """
    _check_pair(truth, est)
    if permutation is None:
        permutation = fms(truth, est).permutation
    permutation = np.asarray(permutation)
    out = np.full((truth.shape[2], truth.rank), np.nan)
    rows = np.flatnonzero(permutation >= 0)
    for k, (Bt, Be) in enumerate(zip(truth.B, est.B)):
        T = _unit_columns(Bt, "true B_k")
        E = _unit_columns(Be, "estimated B_k")
        out[k, rows] = np.sum(T[:, rows] * E[:, permutation[rows]], axis=0)
    return out


def triple_cosine(model: Parafac2Model, all_slices: bool = False) -> float:
    """Minimum over ``r != s`` of ``cos(a_r, a_s) cos([b_1]_r, [b_2]_s) cos(c_r, c_s)``.

    The B term uses the first two slices as in the usual definition. With
    ``all_slices``, or when the first two slices differ in length so the
    cross-slice cosine is undefined, it is replaced by the mean over k of
    ``cos([b_k]_r, [b_k]_s)``. Returns 1 for a single component.
    """
    R = model.rank
    if R == 1:
        return 1.0
    K = model.shape[2]
    if K < 2 and not all_slices:
        raise DimensionError("triple cosine needs at least two slices")
    A = _unit_columns(model.A, "A")
    C = _unit_columns(model.C, "C")
    if all_slices or model.B[0].shape[0] != model.B[1].shape[0]:
        Bterm = np.mean([_unit_columns(Bk, "B_k").T @ _unit_columns(Bk, "B_k") for Bk in model.B], axis=0)
    else:
        Bterm = _unit_columns(model.B[0], "B_1").T @ _unit_columns(model.B[1], "B_2")
    T = (A.T @ A) * Bterm * (C.T @ C)
    off = ~np.eye(R, dtype=bool)
    return float(T[off].min())


def is_degenerate(model: Parafac2Model, threshold: float = DEGENERACY_THRESHOLD) -> bool:
    """True when the triple cosine is below ``threshold`` (mutually cancelling components)."""
    return triple_cosine(model) < threshold


# ----------------------------------------------------------------------------
# Penalty scale equivalence
# ----------------------------------------------------------------------------
@dataclass
class ScaleInstance:
    """A loss ``f(u, v)`` with ``f(b u, b^-2 v) = f(u, v)`` and homogeneous penalties.

    ``r_u`` and ``r_v`` must be absolutely homogeneous of degrees ``d_u`` and
    ``d_v``. ``sample(rng)`` draws a point ``(u, v)`` as a pair of flat arrays.
    """

    f: Callable
    r_u: Callable
    r_v: Callable
    d_u: float
    d_v: float
    sample: Callable


@dataclass
class ScaleCheckReport:
    a: float
    exponent: float
    max_abs_diff: float
    max_rel_diff: float
    exponent_ratio_error: float
    passed: bool


def scale_equivalence_check(instance: ScaleInstance, a: float, n_points: int = 100, tol: float = 1e-10, seed: int = 0):
    """Check that the two penalty scalings agree under the change of variables.

    With ``F1(u, v) = f(u, v) + a r_u(u) + r_v(v)`` and
    ``F2(u, v) = f(u, v) + r_u(u) + a^(2 d_v / d_u) r_v(v)``, the map
    ``u = a^(-1/d_u) u~``, ``v = a^(2/d_u) v~`` gives
    ``F1(u, v) = F2(u~, v~)``. The identity is evaluated at ``n_points``
    random ``(u~, v~)``; the exponent law
    ``r_v(a^(2/d_u) v~) / r_v(v~) = a^(2 d_v / d_u)`` is checked too.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    rng = np.random.default_rng(seed)
    du, dv = instance.d_u, instance.d_v
    exponent = 2.0 * dv / du
    su, sv = a ** (-1.0 / du), a ** (2.0 / du)
    abs_diff = rel_diff = ratio_err = 0.0
    for _ in range(n_points):
        ut, vt = instance.sample(rng)
        u, v = su * ut, sv * vt
        F1 = instance.f(u, v) + a * instance.r_u(u) + instance.r_v(v)
        F2 = instance.f(ut, vt) + instance.r_u(ut) + a**exponent * instance.r_v(vt)
        abs_diff = max(abs_diff, abs(F1 - F2))
        rel_diff = max(rel_diff, abs(F1 - F2) / max(abs(F2), 1e-300))
        rv = instance.r_v(vt)
        if rv != 0:
            ratio_err = max(ratio_err, abs(instance.r_v(v) / rv - a**exponent) / a**exponent)
    return ScaleCheckReport(float(a), exponent, abs_diff, rel_diff, ratio_err, bool(rel_diff <= tol and ratio_err <= tol))


def parafac2_scale_instance(data: RaggedTensor, rank: int, L: np.ndarray) -> ScaleInstance:
    """PARAFAC2 instance with ``u = (A, C)`` under ridge and ``v = {B_k}`` under a graph Laplacian.

    ``f`` is the sum of squared errors, invariant to ``(A, C, B) -> (b A, b C, b^-2 B)``;
    ``r_u = ||A||^2 + ||C||^2`` and ``r_v = sum_k tr(B_k^T L B_k)`` both have degree 2.
    All ``J_k`` must equal ``L.shape[0]``.
    """
    I, K = data.I, data.K
    J = data.J
    if any(Jk != L.shape[0] for Jk in J):
        raise DimensionError("Laplacian size must match every J_k")
    nA, nC = I * rank, K * rank

    def unpack(u, v):
        A = u[:nA].reshape(I, rank)
        C = u[nA : nA + nC].reshape(K, rank)
        B = v.reshape(K, J[0], rank)
        return A, B, C

    def f(u, v):
        A, B, C = unpack(u, v)
        return float(sum(np.sum((X - (A * C[k]) @ B[k].T) ** 2) for k, X in enumerate(data)))

    def r_u(u):
        return float(np.sum(u**2))

    def r_v(v):
        B = v.reshape(K, J[0], rank)
        return float(sum(np.sum(Bk * (L @ Bk)) for Bk in B))

    def sample(rng):
        return rng.standard_normal(nA + nC), rng.standard_normal(K * J[0] * rank)

    return ScaleInstance(f, r_u, r_v, 2.0, 2.0, sample)
