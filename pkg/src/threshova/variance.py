"""Scale estimates whose ratio to the true noise level is pivotal."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as _rng
from .design import RANK_TOL, nuisance_basis
from .errors import ConfigurationError, DegreesOfFreedomError, ZeroVarianceError

MAD_CONSTANT = 1.4826
ZERO_TOL = 1e-10


def _column_space(M):
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0], s[:0]
    rank = int(np.sum(s > RANK_TOL * s[0]))
    return U[:, :rank], s[:rank]


def _stack(A, X):
    parts = [np.asarray(m, dtype=float) for m in (A, X) if m is not None]
    parts = [p[:, None] if p.ndim == 1 else p for p in parts]
    return np.hstack(parts)


def _is_zero(sigma, y):
    scale = np.sqrt(np.mean(np.square(y), axis=-1))
    return sigma <= ZERO_TOL * np.maximum(scale, 1e-300)


class _Unbiased:
    def __init__(self, A, X):
        M = _stack(A, X)
        self.basis, _ = _column_space(M)
        self.df = M.shape[0] - self.basis.shape[1]
        if self.df < 1:
            raise DegreesOfFreedomError(
                f"saturated model: {M.shape[0]} observations for rank {self.basis.shape[1]}"
            )

    def __call__(self, Y):
        R = Y - (Y @ self.basis) @ self.basis.T
        return np.sqrt(np.sum(R * R, axis=-1) / self.df)


def _mad(c):
    med = np.median(c, axis=-1, keepdims=True)
    return MAD_CONSTANT * np.median(np.abs(c - med), axis=-1)


class _Mad:
    def __init__(self, A, X, p0_fraction, n_subsets=None, subset_size=None, subset_seed=0):
        X = np.asarray(X, dtype=float)
        Q = nuisance_basis(A, X.shape[0])
        if n_subsets:
            size = subset_size or min(X.shape[1], X.shape[0] // 2)
            if size > X.shape[1]:
                raise ConfigurationError(f"subset size {size} exceeds the {X.shape[1]} available columns")
            gen = _rng.generator(subset_seed, _rng.ORACLE)
            subsets = [np.sort(gen.choice(X.shape[1], size=size, replace=False)) for _ in range(n_subsets)]
        else:
            subsets = [np.arange(X.shape[1])]
        self.directions = []
        for cols in subsets:
            Xs = X[:, cols]
            if Q.shape[1]:
                Xs = Xs - Q @ (Q.T @ Xs)
            U, _ = _column_space(Xs)
            rank = U.shape[1]
            if rank < 4:
                raise ConfigurationError(f"MAD scale estimate needs design rank >= 4, got {rank}")
            p0 = max(1, int(np.floor(rank * p0_fraction)))
            # singular values come sorted descending; keep directions p0..R (1-based)
            self.directions.append(U[:, p0 - 1:])

    def __call__(self, Y):
        est = np.stack([_mad(Y @ U) for U in self.directions], axis=-1)
        return np.median(est, axis=-1)


@dataclass(frozen=True)
class SigmaEstimator:
    """``kind`` is one of ``known``, ``unbiased`` or ``mad``."""

    kind: str = "unbiased"
    value: Optional[float] = None
    p0_fraction: float = 0.5
    n_subsets: Optional[int] = None
    subset_size: Optional[int] = None
    subset_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("known", "unbiased", "mad"):
            raise ConfigurationError(f"unknown sigma estimator {self.kind!r}")
        if self.kind == "known" and not (self.value is not None and self.value > 0):
            raise ConfigurationError(f"known sigma must be > 0, got {self.value}")
        if not 0 < self.p0_fraction < 1:
            raise ConfigurationError(f"p0_fraction must lie in (0, 1), got {self.p0_fraction}")

    @classmethod
    def known(cls, value):
        return cls("known", value=float(value))

    @classmethod
    def unbiased(cls):
        return cls("unbiased")

    @classmethod
    def mad(cls, p0_fraction=0.5, **kw):
        return cls("mad", p0_fraction=p0_fraction, **kw)

    @classmethod
    def parse(cls, text):
        """Parse ``known:<value>``, ``unbiased``, ``mad`` or ``mad:<p0_fraction>``."""
        kind, _, arg = str(text).partition(":")
        try:
            if kind == "known":
                return cls.known(float(arg))
            if kind == "unbiased" and not arg:
                return cls.unbiased()
            if kind == "mad":
                return cls.mad(float(arg)) if arg else cls.mad()
        except ValueError:
            pass
        raise ConfigurationError(f"cannot parse sigma estimator {text!r}")

    @property
    def data_dependent(self):
        return self.kind != "known"

    def describe(self):
        if self.kind == "known":
            return f"known:{self.value!r}"
        if self.kind == "mad":
            return f"mad:{self.p0_fraction!r}"
        return "unbiased"

    def bind(self, A, X):
        """Return a callable mapping a batch of responses (rows) to scale estimates."""
        if self.kind == "known":
            value = self.value
            return lambda Y: np.full(np.shape(Y)[:-1], value)
        if self.kind == "unbiased":
            return _Unbiased(A, X)
        return _Mad(A, X, self.p0_fraction, self.n_subsets, self.subset_size, self.subset_seed)


def unbiased_sigma(y, A, X):
    """``sqrt(RSS / (N - rank[A X]))`` for the full model."""
    y = np.asarray(y, dtype=float)
    sigma = float(_Unbiased(A, X)(y))
    if _is_zero(sigma, y):
        raise ZeroVarianceError("residual variance is zero")
    return sigma


def mad_sigma_highdim(X, y, p0_fraction=0.5, A=None, n_subsets=None, subset_size=None, subset_seed=0):
    """MAD scale of least-squares coefficients along the low-singular-value directions of X.

    With ``X = U D V^T``, the coefficients ``U^T y`` are ``N(gamma, sigma^2 I)``;
    directions ``p0..R`` (sorted by decreasing singular value) should carry
    no signal and their MAD estimates sigma.
    """
    y = np.asarray(y, dtype=float)
    sigma = float(_Mad(A, X, p0_fraction, n_subsets, subset_size, subset_seed)(y))
    if _is_zero(sigma, y):
        raise ZeroVarianceError("MAD of the tail coefficients is zero")
    return sigma


def sigma_is_zero(sigma, Y):
    return _is_zero(np.asarray(sigma), np.asarray(Y))
