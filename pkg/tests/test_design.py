import numpy as np
import pytest

from threshova.calibration import closed_form_threshold_oneway
from threshova.design import (
    Basis,
    Block,
    DesignSpec,
    RescalePolicy,
    ThresholdMode,
    encode_factor,
    nuisance_basis,
    orthonormalize_block,
    pairs,
    pairwise_difference_transform,
    prepare_design,
    project_out_nuisance,
    quantile_rescale,
    rescale,
    upper_quantile,
)
from threshova.errors import ConfigurationError, RankError, SingularDesignError

from conftest import oneway


def test_projection_annihilates_range(rng):
    A = rng.standard_normal((20, 3))
    y = A @ np.array([1.0, -2.0, 0.5])
    assert np.allclose(project_out_nuisance(y, A), 0, atol=1e-12)


def test_intercept_projection_centers(rng):
    y = rng.standard_normal(15)
    assert np.allclose(project_out_nuisance(y, np.ones(15)), y - y.mean())


def test_projection_orthogonal_and_idempotent(rng):
    A = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    yA = project_out_nuisance(y, A)
    assert np.max(np.abs(A.T @ yA)) < 1e-8
    assert np.allclose(project_out_nuisance(yA, A), yA, atol=1e-10)


def test_rank_deficient_nuisance():
    A = np.column_stack([np.ones(10), 2 * np.ones(10)])
    with pytest.raises(SingularDesignError):
        nuisance_basis(A)


def test_orthonormalize_orthonormal_input(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((12, 3)))
    W = orthonormalize_block(Q)
    assert np.max(np.abs(W.T @ W - np.eye(3))) < 1e-12


def test_indicator_block_scaled_by_sqrt_r():
    X = oneway(4, 6)
    assert np.allclose(orthonormalize_block(X, ThresholdMode.COORDINATE), X / np.sqrt(6))
    W = orthonormalize_block(X)
    assert np.allclose(np.abs(W), X / np.sqrt(6))


def test_orthonormal_projector_matches_normal_equations(rng):
    X = rng.standard_normal((30, 4))
    W = orthonormalize_block(X)
    P = X @ np.linalg.solve(X.T @ X, X.T)
    assert np.max(np.abs(W @ W.T - P)) < 1e-8


def test_rank_error_names_block(rng):
    X = rng.standard_normal((10, 2))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    with pytest.raises(RankError, match="'bad'"):
        prepare_design(DesignSpec(None, [Block("bad", X)]))


def test_coordinate_block_needs_orthogonal_columns(rng):
    with pytest.raises(ConfigurationError, match="orthogonal"):
        prepare_design(DesignSpec(None, [Block("c", rng.standard_normal((10, 3)), ThresholdMode.COORDINATE)]))


def test_raw_block_needs_scaled_identity_gram(rng):
    X = encode_factor([0, 0, 1, 1, 1])
    with pytest.raises(ConfigurationError):
        prepare_design(DesignSpec(None, [Block("b", X)]), Basis.RAW)
    # coordinate mode only needs a diagonal Gram matrix
    prepare_design(DesignSpec(None, [Block("b", X, ThresholdMode.COORDINATE)]), Basis.RAW)


def test_block_inside_nuisance_range_rejected():
    X = np.ones((8, 1))
    with pytest.raises(ConfigurationError, match="range"):
        prepare_design(DesignSpec(np.ones(8), [Block("b", X)]))


def test_spec_validation(rng):
    X = rng.standard_normal((6, 2))
    with pytest.raises(ConfigurationError, match="unique"):
        DesignSpec(None, [Block("a", X), Block("a", X)])
    with pytest.raises(ConfigurationError, match="rows"):
        DesignSpec(None, [Block("a", X), Block("b", X[:5])])
    with pytest.raises(ConfigurationError):
        DesignSpec(np.ones((6, 6)), [Block("a", X)])
    with pytest.raises(ConfigurationError):
        DesignSpec(None, [])


def test_block_statistic_norm_invariant_to_orthonormal_basis(rng):
    X = rng.standard_normal((25, 3))
    y = rng.standard_normal(25)
    p = prepare_design(DesignSpec(np.ones(25), [Block("b", X)]))
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    yA = p.project(y)
    W = p.blocks[0].basis
    assert np.linalg.norm((W @ Q).T @ yA) == pytest.approx(p.blocks[0].statistic(yA), abs=1e-8)


def test_to_original_inverts_basis_change(rng):
    X = rng.standard_normal((20, 3))
    p = prepare_design(DesignSpec(None, [Block("b", X)]))
    b = p.blocks[0]
    g = rng.standard_normal(3)
    assert np.allclose(X @ b.to_original(g), b.matrix @ g)


def test_quantile_rescale_canonical_block():
    # W = I, N = T = 5, known sigma: 1/d is the chi_5 upper quantile
    p = prepare_design(DesignSpec(None, [Block("b", np.eye(5))]))
    p = quantile_rescale(p, 0.05, K1=100_000, seed=3)
    expected = 1 / closed_form_threshold_oneway(5, 1, 0.05, "block")
    assert expected == pytest.approx(1 / 3.3272, rel=1e-4)
    assert p.blocks[0].scale == pytest.approx(expected, rel=0.02)


def test_quantile_rescale_equalizes_modes(rng):
    X = oneway(4, 5)
    spec = DesignSpec(np.ones(20), [Block("o", X), Block("plus", X, ThresholdMode.COORDINATE)])
    p = quantile_rescale(prepare_design(spec), 0.05, K1=20_000, seed=1)
    # fresh null draws: each rescaled statistic has upper quantile near 1
    Y = np.random.default_rng(99).standard_normal((20_000, 20))
    stats = p.block_statistics(p.project(Y))
    for j in range(2):
        assert upper_quantile(stats[:, j], 0.05) == pytest.approx(1.0, abs=0.03)


def test_rescale_none_and_k1_minimum():
    p = prepare_design(DesignSpec(None, [Block("b", np.eye(4))]))
    assert np.all(rescale(p, RescalePolicy.NONE).scales == 1.0)
    with pytest.raises(ConfigurationError):
        quantile_rescale(p, 0.05, K1=999)


def test_mean_rescale_sets_null_mean_to_one():
    p = prepare_design(DesignSpec(None, [Block("b", np.eye(6))]))
    p = rescale(p, RescalePolicy.MEAN, K1=50_000, seed=2)
    Y = np.random.default_rng(4).standard_normal((50_000, 6))
    assert p.block_statistics(Y).mean() == pytest.approx(1.0, abs=0.01)


def test_encode_factor():
    assert encode_factor(list("aabb")).tolist() == [[1, 0], [1, 0], [0, 1], [0, 1]]
    assert np.array_equal(oneway(5, 10).T @ oneway(5, 10), 10 * np.eye(5))
    X = encode_factor(np.repeat(np.arange(5), (1, 5, 9, 10, 10)))
    assert np.array_equal(X.T @ X, np.diag([1, 5, 9, 10, 10]))
    assert encode_factor(["10", "9", "1"]).tolist() == [[0, 0, 1], [0, 1, 0], [1, 0, 0]]
    with pytest.raises(ConfigurationError):
        encode_factor(["a", "a"])


def test_pairwise_difference_transform():
    yt, d = pairwise_difference_transform([3.0, 3.0, 1.0, 1.0], [2, 2])
    assert yt.tolist() == [2.0] and d[0] ** 2 == pytest.approx(1.0)
    _, d = pairwise_difference_transform(np.zeros(40), [8] * 5)
    assert np.allclose(d**2, 2 / 8)
    _, d = pairwise_difference_transform(np.zeros(6), [1, 5])
    assert d[0] ** 2 == pytest.approx(1.2)
    assert pairs(3) == [(0, 1), (0, 2), (1, 2)]
    with pytest.raises(ConfigurationError):
        pairwise_difference_transform(np.zeros(3), [3, 0])


def test_pairwise_difference_matches_explicit_contrast(rng):
    counts = [1, 5, 9, 10, 10]
    y = rng.standard_normal(sum(counts))
    X = encode_factor(np.repeat(np.arange(5), counts))
    E = np.linalg.solve(X.T @ X, X.T)
    D = np.array([np.eye(5)[t] - np.eye(5)[u] for t, u in pairs(5)])
    yt, d = pairwise_difference_transform(y, counts)
    assert np.allclose(yt, D @ E @ y)
    assert np.allclose(d**2, np.diag(D @ E @ E.T @ D.T))
