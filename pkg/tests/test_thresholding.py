import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshova.design import Block, DesignSpec, ThresholdMode, prepare_design, quantile_rescale
from threshova.errors import ConfigurationError
from threshova.thresholding import (
    SolverConfig,
    block_threshold,
    kkt_violation,
    min_null_threshold,
    objective,
    penalty,
    sbite_solve,
    soft_threshold,
)

from conftest import oneway


def single(X, mode, scale=1.0):
    p = prepare_design(DesignSpec(None, [Block("b", X, mode)]))
    if scale != 1.0:
        p = replace(p, blocks=(replace(p.blocks[0], scale=scale),))
    return p


def hybrid(rng, n=40):
    """Random design mixing dense blocks and factor blocks thresholded per coordinate."""
    blocks = []
    for q in range(rng.integers(2, 5)):
        if rng.random() < 0.5:
            blocks.append(Block(f"b{q}", rng.standard_normal((n, rng.integers(1, 4))), ThresholdMode.BLOCK))
        else:
            levels = rng.integers(2, 5)
            labels = np.concatenate([np.arange(levels), rng.integers(0, levels, n - levels)])
            blocks.append(Block(f"c{q}", np.eye(levels)[rng.permutation(labels)], ThresholdMode.COORDINATE))
    p = prepare_design(DesignSpec(np.ones(n), blocks))
    return quantile_rescale(p, 0.05, K1=1000, seed=int(rng.integers(1000)))


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == pytest.approx(2.0)
    assert soft_threshold(0.5, 1.0) == 0.0
    assert soft_threshold(3.0, 1.0, 2) == pytest.approx(4 / 3)
    assert soft_threshold(-3.0, 1.0) == pytest.approx(-2.0)
    assert soft_threshold(0.0, 0.0) == 0.0


def test_block_threshold_examples():
    assert np.array_equal(block_threshold([3.0, 4.0], 5.0), [0.0, 0.0])
    assert np.allclose(block_threshold([3.0, 4.0], 2.5), [1.5, 2.0])
    assert np.allclose(block_threshold([3.0, 4.0], 0.0), [3.0, 4.0])
    assert np.array_equal(block_threshold([0.0, 0.0], 1.0), [0.0, 0.0])
    with pytest.raises(ConfigurationError):
        block_threshold([1.0], -1.0)


def test_min_null_threshold_examples():
    p = single(np.eye(3), ThresholdMode.COORDINATE)
    assert min_null_threshold(np.zeros(3), p) == 0.0
    assert min_null_threshold(np.array([1.0, -3.0, 2.0]), p) == pytest.approx(3.0)
    assert min_null_threshold(np.array([3.0, 4.0]), single(np.eye(2), ThresholdMode.BLOCK)) == pytest.approx(5.0)


def test_zero_fit_above_threshold(rng):
    p = single(oneway(4, 3), ThresholdMode.BLOCK)
    y = rng.standard_normal(12)
    fit = sbite_solve(y, p, min_null_threshold(y, p) * 1.01)
    assert fit.is_zero and fit.sweeps_used == 0 and fit.converged


@pytest.mark.parametrize("scale", [1.0, 0.37])
def test_coordinate_closed_form(rng, scale):
    X = oneway(5, 4)
    p = single(X, ThresholdMode.COORDINATE, scale)
    Xt = p.blocks[0].matrix
    d2 = p.blocks[0].col_sq_norms[0]
    y = rng.standard_normal(20) + X @ np.array([2.0, 0, 0, -1.5, 0])
    lam = 0.6 * min_null_threshold(y, p)
    fit = sbite_solve(y, p, lam)
    expected = np.array([soft_threshold(z, lam) for z in Xt.T @ y]) / d2
    assert np.max(np.abs(fit.gamma["b"] - expected)) < 1e-8


@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_block_closed_form(rng, scale):
    p = single(rng.standard_normal((15, 3)), ThresholdMode.BLOCK, scale)
    Xt = p.blocks[0].matrix
    y = rng.standard_normal(15)
    lam = 0.5 * min_null_threshold(y, p)
    fit = sbite_solve(y, p, lam)
    assert np.max(np.abs(fit.gamma["b"] - block_threshold(Xt.T @ y, lam) / scale**2)) < 1e-8


def test_shrinkage_monotone_in_lambda(rng):
    p = single(oneway(5, 3), ThresholdMode.COORDINATE)
    y = rng.standard_normal(15) * 3
    lam0 = min_null_threshold(y, p)
    norms = [penalty(sbite_solve(y, p, f * lam0).gamma, p) for f in (0.1, 0.3, 0.6, 0.9)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_objective_descent_and_kkt(rng):
    for _ in range(20):
        p = hybrid(rng)
        y = p.project(rng.standard_normal(p.n_obs) * 2)
        fit = sbite_solve(y, p, 0.4 * min_null_threshold(y, p))
        h = np.array(fit.objective)
        assert np.all(np.diff(h) <= 1e-10 * max(1.0, abs(h[0])))
        assert fit.converged and kkt_violation(y, fit, p) <= 1e-6
        assert objective(y, fit.gamma, p, fit.lam) == pytest.approx(h[-1], rel=1e-12)


def test_smooth_exponent_fixed_point(rng):
    p = hybrid(rng)
    y = p.project(rng.standard_normal(p.n_obs) * 2)
    fit = sbite_solve(y, p, 0.5 * min_null_threshold(y, p), SolverConfig(s=2.0))
    assert fit.converged and fit.objective == [] and fit.max_residual < 1e-6


def test_nonconvergence_warns(rng):
    p = hybrid(rng)
    y = p.project(rng.standard_normal(p.n_obs) * 3)
    with pytest.warns(RuntimeWarning, match="did not converge"):
        fit = sbite_solve(y, p, 0.05 * min_null_threshold(y, p), SolverConfig(max_sweeps=1, tol=1e-15))
    assert not fit.converged


def test_solver_config_validation():
    for kw in ({"s": 0.5}, {"tol": 0.0}, {"max_sweeps": 0}):
        with pytest.raises(ConfigurationError):
            SolverConfig(**kw)
    with pytest.raises(ConfigurationError):
        sbite_solve(np.zeros(3), single(np.eye(3), ThresholdMode.BLOCK), 0.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), frac=st.floats(0.05, 0.999))
def test_zero_iff_above_min_null_threshold(seed, frac):
    rng = np.random.default_rng(seed)
    p = hybrid(rng, n=25)
    y = p.project(rng.standard_normal(25))
    lam0 = min_null_threshold(y, p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert sbite_solve(y, p, lam0 * (1 + 1e-6)).is_zero
        assert not sbite_solve(y, p, lam0 * frac).is_zero


@settings(max_examples=40, deadline=None)
@given(z=st.floats(-50, 50), lam=st.floats(0, 60), s=st.floats(1, 4))
def test_soft_threshold_properties(z, lam, s):
    v = soft_threshold(z, lam, s)
    assert abs(v) <= abs(z) + 1e-12
    assert (v == 0) == (abs(z) <= lam)
    assert v * z >= 0
