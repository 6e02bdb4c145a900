"""Analytic and Monte Carlo power of the one-way thresholding tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import distributions as dist
from . import rng as _rng
from .anova_tests import calibrate, prepare_oplus, prepare_single
from .calibration import Calibration, NullSampler, closed_form_threshold_oneway
from .design import ThresholdMode, encode_factor
from .errors import ConfigurationError, DomainError
from .variance import SigmaEstimator

TESTS = ("block", "coordinate", "oplus")


@dataclass(frozen=True)
class Alternative:
    kind: str
    theta: float

    def __post_init__(self):
        if self.kind not in ("dense", "sparse"):
            raise ConfigurationError(f"alternative must be 'dense' or 'sparse', got {self.kind!r}")

    def vector(self, T, signs=None):
        signs = np.ones(T) if signs is None else np.asarray(signs, dtype=float)
        if self.kind == "sparse":
            signs = np.where(np.arange(T) == 0, signs, 0.0)
        return self.theta * signs


def delta_phi(theta, lam, R):
    """``Phi((lam - R theta)/sqrt(R)) - Phi((-lam - R theta)/sqrt(R))``."""
    if not lam > 0:
        raise DomainError(f"threshold must be > 0, got {lam}")
    if math.isinf(lam):
        return 1.0
    sr = math.sqrt(R)
    return dist.std_normal_cdf((lam - R * theta) / sr) - dist.std_normal_cdf((-lam - R * theta) / sr)


def analytic_power(test, alt, T, R, lam):
    """Power of the known-sigma block or coordinate test at threshold ``lam``."""
    if not lam > 0:
        raise DomainError(f"threshold must be > 0, got {lam}")
    test = ThresholdMode(test)
    theta = alt.theta
    if test is ThresholdMode.BLOCK:
        ncp = R * theta**2 * (T if alt.kind == "dense" else 1)
        return 1.0 - dist.chi_square_cdf(lam**2 / R, T, ncp)
    if alt.kind == "dense":
        return 1.0 - delta_phi(theta, lam, R) ** T
    return 1.0 - delta_phi(theta, lam, R) * delta_phi(0.0, lam, R) ** (T - 1)


def oneway_design(T, R):
    """Balanced one-way indicator matrix, observations grouped by treatment."""
    return encode_factor(np.repeat(np.arange(T), R))


def power_setup(test, T=5, R=10, alpha=0.05, sigma=None, K=10_000, stage1_K=10_000, seed=0, threads=None):
    """Prepared design and calibration for a named test in the known-mean regime (no nuisance)."""
    sigma = sigma or SigmaEstimator.known(1.0)
    if test not in TESTS:
        raise ConfigurationError(f"unknown test {test!r}; expected one of {TESTS}")
    X = oneway_design(T, R)
    if test == "oplus":
        prepared = prepare_oplus(X, None, alpha, stage1_K, seed, threads)
        cal = calibrate(prepared, sigma, alpha, K, seed, threads)
        return prepared, cal
    prepared = prepare_single(X, None, test)
    if sigma.kind == "known":
        cal = Calibration.closed_form(closed_form_threshold_oneway(T, R, alpha, test), alpha)
    else:
        cal = calibrate(prepared, sigma, alpha, K, seed, threads)
    return prepared, cal


def mc_power(test: Union[str, Callable], alt, T=5, R=10, alpha=0.05, reps=2000, seed=0, sigma=None,
             K=10_000, stage1_K=10_000, threads=None, setup=None):
    """Monte Carlo rejection rate under ``alt`` and its standard error.

    ``test`` is one of ``block``, ``coordinate``, ``oplus`` (known mean,
    sigma from ``sigma``, default known and equal to 1) or a callable mapping
    a response vector to a reject flag. Dense alternatives use all-plus signs.
    ``setup`` reuses a ``power_setup`` result across calls.
    """
    if reps < 100:
        raise ConfigurationError(f"mc_power needs reps >= 100, got {reps}")
    sigma = sigma or SigmaEstimator.known(1.0)
    noise_sd = sigma.value if sigma.kind == "known" else 1.0
    X = oneway_design(T, R)
    mean = X @ alt.vector(T)

    if callable(test):
        def chunk(gen, size, _i):
            Y = mean + noise_sd * gen.standard_normal((size, X.shape[0]))
            return np.array([bool(test(y)) for y in Y])
    else:
        prepared, cal = setup or power_setup(test, T, R, alpha, sigma, K, stage1_K, seed, threads)
        sampler = NullSampler(prepared, sigma, seed)
        lam = cal.lambda_alpha

        def chunk(gen, size, _i):
            Y = mean + noise_sd * gen.standard_normal((size, X.shape[0]))
            return sampler.statistics(Y) > lam

    hits = np.concatenate(_rng.map_chunks(chunk, reps, seed, _rng.DATA, threads))
    p = float(hits.mean())
    return p, math.sqrt(p * (1.0 - p) / reps)
