"""Seeded generators for simulated PARAFAC2 data.

Every generator takes a :class:`numpy.random.Generator` and returns the
ground-truth :class:`Parafac2Model`; :func:`simulate` wraps them behind a
:class:`SimSpec`, adds noise and returns everything in a :class:`SimData`.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .io import load_model, load_tensor, save_model, save_tensor, write_json
from .tensor import Parafac2Model, RaggedTensor, reconstruct

__all__ = [
    "Setup",
    "SimSpec",
    "SimData",
    "GenerationError",
    "add_noise",
    "truncated_normal",
    "gen_shift",
    "gen_nn_crossproduct",
    "gen_unimodal",
    "gen_smooth_poly",
    "gen_piecewise_tv",
    "gen_cwsnr_shift",
    "gen_sm1",
    "simulate",
    "write_simulation",
    "read_simulation",
    "DEFAULTS",
]


class GenerationError(RuntimeError):
    pass


class Setup(str, enum.Enum):
    SHIFT = "shift"
    NN_CROSSPRODUCT = "nn_crossproduct"
    UNIMODAL = "unimodal"
    SMOOTH_POLY = "smooth_poly"
    PIECEWISE_TV = "piecewise_tv"
    CWSNR_SHIFT = "cwsnr_shift"
    SM1 = "sm1"


# (I, J or (J_min, J_max), K, R, eta)
DEFAULTS = {
    Setup.SHIFT: (30, 40, 50, 3, 0.33),
    Setup.NN_CROSSPRODUCT: (50, (50, 100), 15, 3, 0.5),
    Setup.UNIMODAL: (10, 50, 15, 5, 0.33),
    Setup.SMOOTH_POLY: (30, 200, 30, 3, 0.5),
    Setup.PIECEWISE_TV: (30, (200, 250), 30, 3, 0.5),
    Setup.CWSNR_SHIFT: (30, 40, 100, 5, 0.33),
    Setup.SM1: (30, 100, 70, 5, 0.33),
}


@dataclass
class SimSpec:
    """What to simulate.

    ``J`` is an int (all slices alike) or a ``(J_min, J_max)`` pair for
    ragged tensors with ``J_k`` drawn uniformly from the closed range.
    Fields left as ``None`` take the setup's defaults.
    """

    setup: Setup
    I: int | None = None
    J: object = None
    K: int | None = None
    R: int | None = None
    eta: float | None = None
    seed: int = 0
    mixC: bool = False
    pf2_exact: bool = False

    def __post_init__(self):
        self.setup = Setup(self.setup)
        I, J, K, R, eta = DEFAULTS[self.setup]
        self.I = int(self.I if self.I is not None else I)
        self.K = int(self.K if self.K is not None else K)
        self.R = int(self.R if self.R is not None else R)
        self.eta = float(self.eta if self.eta is not None else eta)
        J = self.J if self.J is not None else J
        if isinstance(J, (list, tuple)):
            lo, hi = int(J[0]), int(J[-1])
            J = lo if lo == hi else (lo, hi)
            if isinstance(J, tuple) and lo > hi:
                raise ValueError("J range must be (J_min, J_max) with J_min <= J_max")
        else:
            J = int(J)
        self.J = J
        Js = J if isinstance(J, tuple) else (J,)
        if min(self.I, self.K, self.R, *Js) < 1:
            raise ValueError("dimensions and rank must be positive")
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError("eta must be non-negative")
        if self.setup in (Setup.SHIFT, Setup.CWSNR_SHIFT, Setup.SMOOTH_POLY, Setup.UNIMODAL, Setup.SM1) and isinstance(J, tuple):
            raise ValueError(f"setup {self.setup.value} needs a fixed J")

    def to_dict(self):
        d = asdict(self)
        d["setup"] = self.setup.value
        d["J"] = list(self.J) if isinstance(self.J, tuple) else self.J
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class SimData:
    spec: SimSpec
    truth: Parafac2Model
    clean: RaggedTensor
    noise: RaggedTensor
    noisy: RaggedTensor
    info: dict = field(default_factory=dict)


def truncated_normal(rng, shape):
    """``max(0, N(0, 1))`` elementwise."""
    return np.maximum(rng.standard_normal(shape), 0.0)


def _column_lengths(rng, J, K):
    if isinstance(J, tuple):
        return [int(j) for j in rng.integers(J[0], J[1] + 1, size=K)]
    return [int(J)] * K


def _default_AC(rng, I, K, R):
    return truncated_normal(rng, (I, R)), rng.uniform(0.1, 1.1, size=(K, R))


def add_noise(X: RaggedTensor, eta: float, rng):
    """Return ``(X_noisy, E_scaled)`` with ``||E_scaled||_F = eta ||X||_F`` exactly.

    ``E`` is standard normal over all slices jointly and rescaled once
    globally. ``rng`` may be a Generator or an integer seed.
    """
    if not eta >= 0:
        raise ValueError("eta must be non-negative")
    rng = np.random.default_rng(rng)
    E = [rng.standard_normal(Xk.shape) for Xk in X]
    if eta == 0:
        zeros = RaggedTensor([np.zeros_like(e) for e in E])
        return RaggedTensor(list(X)), zeros
    x_norm = X.norm()
    if x_norm == 0:
        raise ValueError("cannot scale noise relative to an all-zero tensor")
    e_norm = np.sqrt(sum(float(np.sum(e**2)) for e in E))
    scale = eta * x_norm / e_norm
    E = [scale * e for e in E]
    return RaggedTensor([Xk + e for Xk, e in zip(X, E)]), RaggedTensor(E)


def gen_shift(I, J, K, R, rng) -> Parafac2Model:
    """Non-negative ``B_k`` obtained by cyclically shifting one truncated-normal matrix.

    ``[B_k]_{j r} = Btilde_{(j + k) mod J, r}`` so every ``B_k`` is a row
    permutation of ``Btilde`` and the Gram matrices agree exactly.
    """
    A, C = _default_AC(rng, I, K, R)
    Bt = truncated_normal(rng, (J, R))
    B = [np.roll(Bt, -k, axis=0) for k in range(K)]
    return Parafac2Model(A, B, C)


def gen_cwsnr_shift(I, J, K, R, rng) -> Parafac2Model:
    return gen_shift(I, J, K, R, rng)


def _pgd_gram(target, J, rng, step, max_iter, tol):
    """Projected gradient descent on ``||B^T B - target||^2`` with ``B >= 0``."""
    B = np.maximum(rng.standard_normal((J, target.shape[0])), 0.0)
    for _ in range(max_iter):
        E = B.T @ B - target
        loss = float(np.sum(E**2))
        if loss < tol:
            return B, loss
        if not np.isfinite(loss):
            break
        B = np.maximum(B - step * 4.0 * (B @ E), 0.0)
    E = B.T @ B - target
    return B, float(np.sum(E**2))


def gen_nn_crossproduct(I, J, K, R, rng, mixC=False, *, tol=1e-12, max_iter=10000, attempts=10, max_restarts=20):
    """Non-negative ``B_k`` sharing the Gram matrix of a truncated-normal ``X`` (100 x R).

    Each ``B_k`` is found by projected gradient descent from a random start.
    A run that does not reach ``tol`` in ``max_iter`` steps is restarted
    with the step divided by 10; after ``attempts`` failures a new ``X`` is
    drawn and generation starts over.

    The base step is ``1 / (2 L)`` with ``L = 4 (3 lambda_max(X^T X))``, a
    bound on the gradient's Lipschitz constant near the solution set.
    """
    A, C = _default_AC(rng, I, K, R)
    if mixC:
        C = 0.5 * C[:, :1] + 0.5 * C
    Js = _column_lengths(rng, J, K)
    for _ in range(max_restarts):
        X = truncated_normal(rng, (100, R))
        target = X.T @ X
        base = 1.0 / (2.0 * 12.0 * max(np.linalg.eigvalsh(target)[-1], 1e-12))
        B, losses = [], []
        for Jk in Js:
            step = base
            for _ in range(attempts):
                Bk, loss = _pgd_gram(target, Jk, rng, step, max_iter, tol)
                if loss < tol:
                    break
                step /= 10.0
            else:
                break
            B.append(Bk)
            losses.append(loss)
        if len(B) == K:
            model = Parafac2Model(A, B, C)
            return model, {"gram_target": target.tolist(), "gram_loss_max": max(losses)}
    raise GenerationError("projected gradient descent did not reach the Gram target; restarts exhausted")


def gen_unimodal(I, J, K, R, rng, pf2_exact=False, *, shift=0.41, sigma_noise=0.1):
    """Gaussian-pdf ``B_k`` columns that move one grid step per slice.

    Column ``r`` of ``B_k`` is the normal pdf with mean ``mu_r + shift k``
    and standard deviation ``sigma_r + n_kr`` on ``J`` points spanning
    ``[-10, 10]``; ``mu_r ~ U(-7, 0)``, ``sigma_r ~ U(0.5, 1)`` and
    ``n_kr ~ N(0, sigma_noise^2)``. With ``pf2_exact`` the ``n_kr`` vanish.
    Standard deviations are floored at 0.05.
    """
    A, C = _default_AC(rng, I, K, R)
    grid = np.linspace(-10.0, 10.0, J)
    mu = rng.uniform(-7.0, 0.0, size=R)
    sigma = rng.uniform(0.5, 1.0, size=R)
    noise = rng.normal(0.0, sigma_noise, size=(K, R))
    if pf2_exact:
        noise[:] = 0.0
    sig = np.maximum(sigma[None, :] + noise, 0.05)
    B = []
    for k in range(K):
        m = mu + shift * k
        s = sig[k]
        B.append(np.exp(-0.5 * ((grid[:, None] - m) / s) ** 2) / (s * np.sqrt(2.0 * np.pi)))
    return Parafac2Model(A, B, C)


def cubic_basis(J):
    """Orthonormal basis (``J x 4``) of cubic polynomials sampled on ``[-1, 1]``."""
    x = np.linspace(-1.0, 1.0, J)
    V = np.vander(x, 4, increasing=True)
    U, _, _ = np.linalg.svd(V, full_matrices=False)
    return U


def gen_smooth_poly(I, J, K, R, rng):
    """Smooth ``B_k = M P_k Delta`` with M an orthonormal cubic-polynomial basis.

    ``P_k`` (4 x R) is the Q factor of a standard normal matrix and Delta
    (R x R) is standard normal, so ``B_k^T B_k = Delta^T Delta`` for all k.
    Needs ``R <= 4``.
    """
    if R > 4:
        raise ValueError("smooth polynomial components need R <= 4")
    A, C = _default_AC(rng, I, K, R)
    M = cubic_basis(J)
    Delta = rng.standard_normal((R, R))
    B = []
    for _ in range(K):
        Q, _ = np.linalg.qr(rng.standard_normal((4, R)))
        B.append(M @ (Q @ Delta))
    return Parafac2Model(A, B, C)


def _contiguous_blocks(rng, J, n):
    cuts = np.sort(rng.choice(np.arange(1, J), size=n - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [J]]))


def gen_piecewise_tv(I, J, K, R, rng):
    """Piecewise constant ``B_k = Q_k Omega``.

    ``Q_k`` (J_k x 4) has the normalized indicators of four contiguous blocks
    as columns, and Omega (4 x R) has two standard-normal entries per column in
    random rows, so each component has at most four jumps. Omega is shared
    across slices and the ``Q_k`` are orthonormal, so the Grams agree.
    """
    A, C = _default_AC(rng, I, K, R)
    Js = _column_lengths(rng, J, K)
    if min(Js) < 4:
        raise ValueError("piecewise components need J_k >= 4")
    Omega = np.zeros((4, R))
    for r in range(R):
        rows = rng.choice(4, size=2, replace=False)
        Omega[rows, r] = rng.standard_normal(2)
    B = []
    for Jk in Js:
        sizes = _contiguous_blocks(rng, Jk, 4)
        Q = np.zeros((Jk, 4))
        start = 0
        for i, n in enumerate(sizes):
            Q[start : start + n, i] = 1.0 / np.sqrt(n)
            start += n
        B.append(Q @ Omega)
    return Parafac2Model(A, B, C)


def dirichlet_partition(rng, J, R, max_draws=1000):
    """Sizes of R contiguous blocks covering ``J`` indices: Dirichlet(1) fractions times J, rounded.

    Rounding is applied to the cumulative boundaries so the sizes sum to J.
    Draws leaving an empty block are repeated.
    """
    if J < R:
        raise ValueError("cannot split fewer than R indices into R non-empty blocks")
    for _ in range(max_draws):
        p = rng.dirichlet(np.ones(R))
        bounds = np.rint(np.cumsum(p) * J).astype(int)
        bounds[-1] = J
        sizes = np.diff(np.concatenate([[0], bounds]))
        if np.all(sizes > 0):
            return sizes
    raise GenerationError("could not draw a partition without empty blocks")


def gen_sm1(I, J, K, R, rng):
    """Non-negative ``B_k = P_k Delta`` with disjoint contiguous supports in ``P_k``.

    Delta is ``U(0, 1)``. Each ``P_k`` column is non-zero on one block of a
    Dirichlet partition, with ``U(0, 1)`` entries normalized to unit norm.
    """
    A, C = _default_AC(rng, I, K, R)
    Delta = rng.uniform(0.0, 1.0, size=(R, R))
    B = []
    for _ in range(K):
        sizes = dirichlet_partition(rng, J, R)
        P = np.zeros((J, R))
        start = 0
        for r, n in enumerate(sizes):
            v = rng.uniform(0.0, 1.0, size=n)
            P[start : start + n, r] = v / np.linalg.norm(v)
            start += n
        B.append(P @ Delta)
    return Parafac2Model(A, B, C)


def simulate(spec: SimSpec) -> SimData:
    """Generate the ground truth and the noisy tensor described by ``spec``.

    The seed feeds two independent streams, one for the truth and one for the noise,
    so changing ``eta`` leaves the truth untouched.
    """
    truth_ss, noise_ss = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(truth_ss)
    I, J, K, R = spec.I, spec.J, spec.K, spec.R
    info = {}
    s = spec.setup
    if s is Setup.SHIFT:
        truth = gen_shift(I, J, K, R, rng)
    elif s is Setup.CWSNR_SHIFT:
        truth = gen_cwsnr_shift(I, J, K, R, rng)
    elif s is Setup.NN_CROSSPRODUCT:
        truth, info = gen_nn_crossproduct(I, J, K, R, rng, spec.mixC)
    elif s is Setup.UNIMODAL:
        truth = gen_unimodal(I, J, K, R, rng, spec.pf2_exact)
    elif s is Setup.SMOOTH_POLY:
        truth = gen_smooth_poly(I, J, K, R, rng)
    elif s is Setup.PIECEWISE_TV:
        truth = gen_piecewise_tv(I, J, K, R, rng)
    elif s is Setup.SM1:
        truth = gen_sm1(I, J, K, R, rng)
    else:  # pragma: no cover
        raise ValueError(s)
    clean = reconstruct(truth)
    noisy, noise = add_noise(clean, spec.eta, np.random.default_rng(noise_ss))
    return SimData(spec, truth, clean, noise, noisy, info)


def write_simulation(directory, sim: SimData):
    """Write the noisy tensor to ``directory`` with ``truth/``, ``noise/`` and ``sim.json``."""
    directory = Path(directory)
    save_tensor(directory, sim.noisy)
    save_model(directory / "truth", sim.truth)
    save_tensor(directory / "noise", sim.noise)
    write_json(directory / "sim.json", {"spec": sim.spec.to_dict(), "info": sim.info})


def read_simulation(directory):
    """Return ``(noisy, truth, noise, spec)``; missing parts come back as ``None``."""
    directory = Path(directory)
    data = load_tensor(directory)
    truth = load_model(directory / "truth") if (directory / "truth" / "meta.json").exists() else None
    noise = load_tensor(directory / "noise") if (directory / "noise" / "meta.json").exists() else None
    spec = None
    if (directory / "sim.json").exists():
        try:
            spec = SimSpec.from_dict(json.loads((directory / "sim.json").read_text())["spec"])
        except (KeyError, TypeError, ValueError) as err:
            warnings.warn(f"ignoring unreadable sim.json: {err}", RuntimeWarning, stacklevel=2)
    return data, truth, noise, spec
