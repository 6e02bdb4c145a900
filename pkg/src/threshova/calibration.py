"""Null-pivot simulation, Monte Carlo and closed-form thresholds, QUT."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import distributions as dist
from . import rng as _rng
from .design import ThresholdMode, order_index
from .errors import (
    CalibrationError,
    ConfigurationError,
    DegreesOfFreedomError,
    DomainError,
    UnavailableError,
)
from .variance import SigmaEstimator, sigma_is_zero

MIN_REPS = 1000
MAX_REJECT_FRACTION = 0.01


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


class ChunkedSampler:
    """Draws ``Y0 ~ N(0, I_N)`` chunk by chunk and maps them to pivots.

    Subclasses implement ``pivots(Y) -> (values, valid)``. Invalid draws (a
    zero scale estimate) are discarded and redrawn from the same chunk
    generator; more than 1% discards is an error.
    """

    n_obs: int
    seed: int
    stream: int

    def pivots(self, Y):
        raise NotImplementedError

    def _chunk(self, gen, size, _index):
        out = []
        have = 0
        rejected = 0
        while have < size:
            Y = gen.standard_normal((size - have, self.n_obs))
            values, valid = self.pivots(Y)
            rejected += int(np.sum(~valid))
            if rejected > max(1, MAX_REJECT_FRACTION * size):
                raise CalibrationError(f"{rejected} null draws had a zero scale estimate")
            out.append(values[valid])
            have += int(np.sum(valid))
        return np.concatenate(out), rejected

    def sample(self, K, threads=None):
        parts = _rng.map_chunks(self._chunk, K, self.seed, self.stream, threads)
        self.rejected = sum(p[1] for p in parts)
        return np.concatenate([p[0] for p in parts])

    def draw(self):
        return float(self.sample(1)[0])


class NullSampler(ChunkedSampler):
    """Null distribution of ``max_q ||X~_q^T Y0_A|| / sigma_hat(Y0)`` for a prepared design."""

    def __init__(self, prepared, sigma=None, seed=0, stream=_rng.CALIBRATE):
        self.prepared = prepared
        self.sigma = sigma or SigmaEstimator.unbiased()
        self.seed = seed
        self.stream = stream
        self.n_obs = prepared.n_obs
        self._sigma_fn = self.sigma.bind(prepared.A, prepared.X) if self.sigma.data_dependent else None

    def pivots(self, Y):
        num = self.prepared.null_thresholds(self.prepared.project(Y))
        if self._sigma_fn is None:
            # null draws are already standardized
            return num, np.ones(num.shape, dtype=bool)
        den = self._sigma_fn(Y)
        valid = ~sigma_is_zero(den, Y)
        return num / np.where(valid, den, 1.0), valid

    def statistics(self, Y):
        """Observed statistics for a batch of responses (rows); divides by the known sigma."""
        num = self.prepared.null_thresholds(self.prepared.project(Y))
        if self._sigma_fn is None:
            return num / self.sigma.value
        return num / self._sigma_fn(Y)


def sample_null_pivot(sampler):
    return sampler.draw()


@dataclass
class Calibration:
    lambda_alpha: float
    alpha: float
    source: str
    K: Optional[int] = None
    seed: Optional[int] = None
    sample: Optional[np.ndarray] = None

    @classmethod
    def closed_form(cls, value, alpha):
        return cls(float(value), alpha, "closed-form")

    def to_dict(self):
        return {"lambda": self.lambda_alpha, "alpha": self.alpha, "K": self.K,
                "seed": self.seed, "source": self.source}


def monte_carlo_threshold(sampler, alpha, K=10_000, threads=None):
    """The ceil((1-alpha) K)-th smallest of K null pivot draws."""
    _check_alpha(alpha)
    if K < MIN_REPS:
        raise ConfigurationError(f"Monte Carlo calibration needs K >= {MIN_REPS}, got {K}")
    sample = np.sort(sampler.sample(K, threads))
    return Calibration(float(sample[order_index(K, alpha)]), alpha, "monte-carlo", K, sampler.seed, sample)


def closed_form_threshold_oneway(T, R, alpha, mode):
    """Known-mean, known-sigma thresholds of the balanced one-way layout."""
    _check_alpha(alpha)
    if T < 2 or R < 1:
        raise ConfigurationError(f"need T >= 2 and R >= 1, got T={T}, R={R}")
    mode = ThresholdMode(mode)
    if mode is ThresholdMode.BLOCK:
        return math.sqrt(R) * math.sqrt(dist.chi_square_quantile(1 - alpha, T))
    p = -math.expm1(math.log1p(-alpha) / T) / 2.0
    return -math.sqrt(R) * dist.std_normal_quantile(p)


def fisher_equivalent_threshold(T, N, R, alpha):
    """Block threshold equivalent to the F-test at level alpha (balanced one-way)."""
    _check_alpha(alpha)
    if N <= T:
        raise DegreesOfFreedomError(f"need N > T, got N={N}, T={T}")
    return math.sqrt(R * (T - 1) * dist.fisher_f_quantile(1 - alpha, T - 1, N - T))


def canonical_max_threshold(N, alpha):
    """Max-test threshold for N independent standard normal coordinates."""
    _check_alpha(alpha)
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    p = -math.expm1(math.log1p(-alpha) / N) / 2.0
    return -dist.std_normal_quantile(p)


def qut_alpha(Q):
    """Level ``1/sqrt(pi log Q)`` of the quantile universal threshold."""
    if Q <= 1:
        raise DomainError(f"QUT level needs Q >= 2, got {Q}")
    return 1.0 / math.sqrt(math.pi * math.log(Q))


def quantile_universal_threshold(sampler, Q, K=10_000, threads=None):
    return monte_carlo_threshold(sampler, qut_alpha(Q), K, threads)


def mc_p_value(observed, calibration):
    """``(1 + #{draws >= observed}) / (K + 1)`` over the stored null sample."""
    if calibration.sample is None:
        raise UnavailableError("calibration carries no Monte Carlo sample")
    sample = calibration.sample
    n_ge = sample.size - int(np.searchsorted(sample, observed, side="left"))
    return (1 + n_ge) / (sample.size + 1)
