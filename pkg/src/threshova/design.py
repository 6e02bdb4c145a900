"""Design matrices: nuisance projection, block bases and rescaling.

A model is ``y = A b + X_1 theta_1 + ... + X_Q theta_Q + sigma z``. The
nuisance columns ``A`` are projected out of the response; every block of
interest is given a basis ``W_q`` with orthogonal columns and a scale
``d_q`` so that the thresholded fit works with ``X~_q = W_q d_q``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import rng as _rng
from .errors import ConfigurationError, RankError, SingularDesignError

RANK_TOL = 1e-10
GRAM_TOL = 1e-10


class ThresholdMode(str, Enum):
    BLOCK = "block"
    COORDINATE = "coordinate"


class RescalePolicy(str, Enum):
    QUANTILE = "quantile"
    MEAN = "mean"
    NONE = "none"


class Basis(str, Enum):
    ORTHONORMAL = "orthonormal"
    RAW = "raw"


@dataclass(frozen=True)
class Block:
    name: str
    X: np.ndarray
    mode: ThresholdMode = ThresholdMode.BLOCK
    labels: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "mode", ThresholdMode(self.mode))
        labels = self.labels
        if labels is None:
            labels = tuple(f"{self.name}[{j + 1}]" for j in range(X.shape[1]))
        if len(labels) != X.shape[1]:
            raise ConfigurationError(f"block '{self.name}': {len(labels)} labels for {X.shape[1]} columns")
        object.__setattr__(self, "labels", tuple(str(v) for v in labels))


@dataclass
class DesignSpec:
    """Nuisance matrix, ordered blocks of interest and (optionally) a response."""

    A: Optional[np.ndarray]
    blocks: list
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.blocks:
            raise ConfigurationError("a design needs at least one block")
        n = self.blocks[0].X.shape[0]
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"block names must be unique, got {names}")
        for b in self.blocks:
            if b.X.shape[0] != n:
                raise ConfigurationError(f"block '{b.name}' has {b.X.shape[0]} rows, expected {n}")
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
            if A.ndim == 1:
                A = A[:, None]
            if A.shape[1] == 0:
                A = None
            elif A.shape[0] != n:
                raise ConfigurationError(f"nuisance matrix has {A.shape[0]} rows, expected {n}")
            self.A = A
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (n,):
                raise ConfigurationError(f"response has shape {self.y.shape}, expected ({n},)")
        k = 0 if self.A is None else self.A.shape[1]
        if n <= k:
            raise ConfigurationError(f"need more observations ({n}) than nuisance columns ({k})")

    @property
    def n_obs(self):
        return self.blocks[0].X.shape[0]

    @property
    def X(self):
        return np.hstack([b.X for b in self.blocks])


def nuisance_basis(A, n_obs=None):
    """Orthonormal basis of range(A) from its SVD; raises if A is rank deficient."""
    if A is None:
        return np.zeros((n_obs or 0, 0))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], 0))
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s[-1] < RANK_TOL * s[0]:
        raise SingularDesignError("nuisance matrix A is rank deficient")
    return U


def project_out_nuisance(y, A):
    """Return ``y - P_A y``; ``y`` may be one vector or a batch of row vectors."""
    y = np.asarray(y, dtype=float)
    if A is None:
        return y.copy()
    Q = nuisance_basis(A)
    return _project(y, Q)


def _project(y, Q):
    if Q.shape[1] == 0:
        return y.copy()
    return y - (y @ Q) @ Q.T


def _check_rank(X, name):
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0 or s[-1] < RANK_TOL * s[0]:
        raise RankError("design block is numerically rank deficient", block=name)


def _gram_is_diagonal(G):
    dg = np.sqrt(np.abs(np.diag(G)))
    off = G - np.diag(np.diag(G))
    return np.all(np.abs(off) <= GRAM_TOL * np.outer(dg, dg) + 1e-300)


def _block_basis(X, mode, basis, name):
    """Return ``(W, M)`` with ``X @ M == W``."""
    mode = ThresholdMode(mode)
    basis = Basis(basis)
    _check_rank(X, name)
    G = X.T @ X
    if mode is ThresholdMode.COORDINATE:
        # coordinate thresholding is not rotation invariant: keep column identity
        if not _gram_is_diagonal(G):
            raise ConfigurationError(
                f"block '{name}': coordinate thresholding needs orthogonal columns (X^T X diagonal)"
            )
        if basis is Basis.RAW:
            return X.copy(), np.eye(X.shape[1])
        norms = np.sqrt(np.diag(G))
        return X / norms, np.diag(1.0 / norms)
    if basis is Basis.RAW:
        g = np.mean(np.diag(G))
        if not (_gram_is_diagonal(G) and np.allclose(np.diag(G), g, rtol=GRAM_TOL, atol=0)):
            raise ConfigurationError(f"block '{name}': raw basis for a block needs X^T X = c I")
        return X.copy(), np.eye(X.shape[1])
    Q, R = np.linalg.qr(X)
    return Q, np.linalg.inv(R)


def orthonormalize_block(X, mode=ThresholdMode.BLOCK, name=None):
    """Orthonormal basis ``W`` spanning ``range(X)``.

    Block-mode blocks are rotated by a QR factorization; coordinate-mode
    blocks must already have orthogonal columns, which are only normalized.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    W, _ = _block_basis(X, mode, Basis.ORTHONORMAL, name)
    return W


@dataclass(frozen=True)
class PreparedBlock:
    name: str
    mode: ThresholdMode
    basis: np.ndarray
    scale: float
    to_basis: np.ndarray
    labels: tuple

    @property
    def matrix(self):
        return self.basis * self.scale

    @property
    def col_sq_norms(self):
        return np.einsum("ij,ij->j", self.basis, self.basis) * self.scale**2

    @property
    def size(self):
        return self.basis.shape[1]

    def statistic(self, Y_A, scaled=True):
        """Block norm of ``X~_q^T y_A`` (2-norm or max-norm); works row-wise on batches."""
        Z = Y_A @ self.basis
        if scaled:
            Z = Z * self.scale
        if self.mode is ThresholdMode.BLOCK:
            return np.sqrt(np.sum(Z * Z, axis=-1))
        return np.max(np.abs(Z), axis=-1)

    def to_original(self, gamma):
        """Map coefficients on ``X~_q`` back to coefficients on the original ``X_q``."""
        return self.to_basis @ (np.asarray(gamma) * self.scale)


@dataclass(frozen=True)
class PreparedDesign:
    """Immutable prepared design; safe to share across workers."""

    n_obs: int
    nuisance: np.ndarray
    blocks: tuple
    A: Optional[np.ndarray] = None
    X: Optional[np.ndarray] = None
    rescale_policy: RescalePolicy = RescalePolicy.NONE
    rescale_alpha: Optional[float] = None
    rescale_reps: Optional[int] = None

    def project(self, y):
        return _project(np.asarray(y, dtype=float), self.nuisance)

    def block_statistics(self, Y_A):
        """Per-block statistics, shape ``(..., Q)``."""
        return np.stack([b.statistic(Y_A) for b in self.blocks], axis=-1)

    def null_thresholds(self, Y_A):
        return np.max(self.block_statistics(Y_A), axis=-1)

    @property
    def scales(self):
        return np.array([b.scale for b in self.blocks])

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)


def prepare_design(spec, basis=Basis.ORTHONORMAL):
    """Orthonormalize (or keep, for ``basis='raw'``) every block; all scales set to 1."""
    n = spec.n_obs
    Q = nuisance_basis(spec.A, n)
    blocks = []
    for b in spec.blocks:
        W, M = _block_basis(b.X, b.mode, basis, b.name)
        outside = np.linalg.norm(_project(W.T, Q)) if Q.shape[1] else 1.0
        if outside < 1e-8 * np.linalg.norm(W):
            raise ConfigurationError(f"block '{b.name}' lies entirely in the range of the nuisance matrix")
        blocks.append(PreparedBlock(b.name, b.mode, W, 1.0, M, b.labels))
    return PreparedDesign(n, Q, tuple(blocks), spec.A, spec.X, RescalePolicy.NONE)


def upper_quantile(sample, alpha):
    """The ceil((1-alpha) K)-th smallest value of ``sample``."""
    sample = np.sort(np.asarray(sample))
    k = order_index(len(sample), alpha)
    return sample[k]


def order_index(K, alpha):
    """Zero-based index of the ceil((1-alpha) K)-th order statistic."""
    k = math.ceil((1.0 - alpha) * K - 1e-9)
    return min(max(k, 1), K) - 1


def _unscaled_block_statistics(prepared, K1, seed, threads):
    def draw(gen, size, _i):
        Y = gen.standard_normal((size, prepared.n_obs))
        Y_A = prepared.project(Y)
        return np.stack([b.statistic(Y_A, scaled=False) for b in prepared.blocks], axis=-1)

    return np.concatenate(_rng.map_chunks(draw, K1, seed, _rng.RESCALE, threads), axis=0)


def quantile_rescale(prepared, alpha, K1=10_000, seed=0, threads=None):
    """Set ``1/d_q`` to the null (1-alpha)-quantile of each block's unscaled statistic.

    Draws come from the dedicated rescaling stream, distinct from the stream
    used for the final calibration.
    """
    if K1 < 1000:
        raise ConfigurationError(f"quantile rescaling needs K1 >= 1000, got {K1}")
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    stats = _unscaled_block_statistics(prepared, K1, seed, threads)
    q = np.sort(stats, axis=0)[order_index(K1, alpha)]
    blocks = tuple(replace(b, scale=1.0 / qq) for b, qq in zip(prepared.blocks, q))
    return replace(prepared, blocks=blocks, rescale_policy=RescalePolicy.QUANTILE,
                   rescale_alpha=alpha, rescale_reps=K1)


def mean_rescale(prepared, K1=10_000, seed=0, threads=None):
    """Set ``1/d_q`` to the null mean of each block's unscaled statistic."""
    if K1 < 1000:
        raise ConfigurationError(f"mean rescaling needs K1 >= 1000, got {K1}")
    stats = _unscaled_block_statistics(prepared, K1, seed, threads)
    m = stats.mean(axis=0)
    blocks = tuple(replace(b, scale=1.0 / mm) for b, mm in zip(prepared.blocks, m))
    return replace(prepared, blocks=blocks, rescale_policy=RescalePolicy.MEAN, rescale_reps=K1)


def rescale(prepared, policy, alpha=0.05, K1=10_000, seed=0, threads=None):
    policy = RescalePolicy(policy)
    if policy is RescalePolicy.QUANTILE:
        return quantile_rescale(prepared, alpha, K1, seed, threads)
    if policy is RescalePolicy.MEAN:
        return mean_rescale(prepared, K1, seed, threads)
    return prepared


def _sort_key(v):
    try:
        return (0, float(v), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def factor_levels(labels):
    return sorted(set(labels), key=_sort_key)


def encode_factor(labels, levels=None):
    """N x T 0/1 indicator matrix, one column per level (numeric-aware sorted order)."""
    labels = list(labels)
    if levels is None:
        levels = factor_levels(labels)
    if len(levels) < 2:
        raise ConfigurationError(f"a factor needs at least 2 distinct levels, got {len(levels)}")
    index = {v: j for j, v in enumerate(levels)}
    X = np.zeros((len(labels), len(levels)))
    for i, v in enumerate(labels):
        X[i, index[v]] = 1.0
    return X


def pairs(T):
    return [(t, u) for t in range(T) for u in range(t + 1, T)]


def pairwise_difference_transform(y, counts):
    """Pairwise differences of group means and their standard-deviation factors.

    ``y`` holds the observations grouped contiguously in the order of
    ``counts``. Returns ``(y_tilde, d)`` over pairs ``t < t'`` in
    lexicographic order with ``d**2 = 1/R_t + 1/R_t'``.
    """
    counts = np.asarray(counts, dtype=int)
    if np.any(counts <= 0):
        raise ConfigurationError("every treatment needs at least one observation")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != counts.sum():
        raise ConfigurationError(f"{y.shape[-1]} observations for counts summing to {counts.sum()}")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    means = np.add.reduceat(y, starts, axis=-1) / counts
    i, j = np.triu_indices(len(counts), k=1)
    y_tilde = means[..., i] - means[..., j]
    d = np.sqrt(1.0 / counts[i] + 1.0 / counts[j])
    return y_tilde, d
