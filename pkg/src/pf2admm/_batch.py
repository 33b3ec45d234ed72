"""Group ragged slices with equal column counts so per-slice kernels run batched."""

from collections import defaultdict

import numpy as np


def groups_by_rows(matrices):
    """Index arrays of the matrices sharing each distinct row count (first-seen order)."""
    groups = defaultdict(list)
    for k, M in enumerate(matrices):
        groups[M.shape[0]].append(k)
    return [np.asarray(idx) for idx in groups.values()]


def stack(matrices, idx):
    return np.stack([matrices[k] for k in idx])


def scatter(out, idx, batch):
    for i, k in enumerate(idx):
        out[k] = batch[i]


def unstack(groups, stacks, K):
    out = [None] * K
    for idx, batch in zip(groups, stacks):
        scatter(out, idx, batch)
    return out


class SliceBatches:
    """Slices of a ragged tensor regrouped into 3-D stacks of equal ``J_k``.

    Attributes
    ----------
    groups : list of ndarray
        Slice indices per group.
    X : list of ndarray, shapes (n_g, I, J_g)
    XT : list of ndarray, shapes (n_g, J_g, I)
        Contiguous transposes, so ``X_k^T A`` is a plain batched matmul.
    sq_norms : ndarray, shape (K,)
        ``||X_k||_F^2``.
    """

    def __init__(self, data):
        self.K = data.K
        self.groups = groups_by_rows([X.T for X in data])
        self.X = [stack(data.slices, idx) for idx in self.groups]
        self.XT = [np.ascontiguousarray(np.swapaxes(Xg, 1, 2)) for Xg in self.X]
        self.sq_norms = np.array([float(np.sum(X**2)) for X in data])

    def stack(self, matrices):
        return [stack(matrices, idx) for idx in self.groups]

    def unstack(self, stacks):
        return unstack(self.groups, stacks, self.K)
