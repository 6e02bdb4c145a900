import math

import numpy as np
import pytest
from scipy import integrate

from threshova import distributions as dist
from threshova.errors import DomainError


def normal_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def chi2_pdf(x, k):
    if x <= 0:
        return 0.0
    return math.exp((k / 2 - 1) * math.log(x) - x / 2 - (k / 2) * math.log(2) - math.lgamma(k / 2))


def chi2_cdf_quad(x, k):
    return integrate.quad(chi2_pdf, 0, x, args=(k,), limit=200)[0]


def ncx2_cdf_oracle(x, k, ncp):
    """P((Z + sqrt(ncp))^2 + chi2_{k-1} <= x), integrating over the central part."""
    m = math.sqrt(ncp)

    def inner(u):
        return 0.5 * (math.erf((math.sqrt(u) - m) / math.sqrt(2)) - math.erf((-math.sqrt(u) - m) / math.sqrt(2)))

    if k == 1:
        return inner(x)
    return integrate.quad(lambda v: inner(x - v) * chi2_pdf(v, k - 1), 0, x, limit=200)[0]


def bisect(f, target, lo, hi):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < target else (lo, mid)
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("x", [-3.1, -1.0, 0.0, 0.4, 2.5])
def test_normal_cdf_matches_integrated_density(x):
    oracle = 0.5 + integrate.quad(normal_pdf, 0, x)[0]
    assert dist.std_normal_cdf(x) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("p", [1e-6, 0.025, 0.5, 0.9, 0.999])
def test_normal_quantile_inverts_cdf(p):
    q = dist.std_normal_quantile(p)
    assert q == pytest.approx(bisect(dist.std_normal_cdf, p, -10, 10), abs=1e-9)


@pytest.mark.parametrize("x,k", [(0.5, 1), (3.0, 2), (11.07, 5), (20.0, 9)])
def test_central_chi_square_cdf(x, k):
    assert dist.chi_square_cdf(x, k) == pytest.approx(chi2_cdf_quad(x, k), abs=1e-9)


@pytest.mark.parametrize("x,k,ncp", [(4.0, 1, 2.0), (8.0, 5, 2.5), (11.07, 5, 12.5), (30.0, 4, 20.0)])
def test_noncentral_chi_square_cdf(x, k, ncp):
    assert dist.chi_square_cdf(x, k, ncp) == pytest.approx(ncx2_cdf_oracle(x, k, ncp), abs=1e-8)


def test_noncentral_cdf_large_noncentrality_by_simulation():
    g = np.random.default_rng(5)
    k, ncp = 5, 400.0
    shift = np.zeros(k)
    shift[0] = math.sqrt(ncp)
    s = np.sum((g.standard_normal((200_000, k)) + shift) ** 2, axis=1)
    for x in (360.0, 405.0, 450.0):
        p = np.mean(s <= x)
        assert dist.chi_square_cdf(x, k, ncp) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / s.size) + 1e-4)


def test_chi_square_quantile_inverts_cdf():
    q = dist.chi_square_quantile(0.95, 5)
    assert q == pytest.approx(bisect(lambda x: chi2_cdf_quad(x, 5), 0.95, 0, 50), abs=1e-7)
    assert q == pytest.approx(11.0705, abs=1e-4)


def test_fisher_f_cdf_and_quantile():
    d1, d2 = 4, 45

    def pdf(x):
        return math.exp(
            0.5 * (d1 * math.log(d1 * x) + d2 * math.log(d2) - (d1 + d2) * math.log(d1 * x + d2))
            - math.log(x) - (math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2))
        )

    for x in (0.5, 2.58, 4.0):
        assert dist.fisher_f_cdf(x, d1, d2) == pytest.approx(integrate.quad(pdf, 0, x)[0], abs=1e-9)
    q = dist.fisher_f_quantile(0.95, d1, d2)
    assert dist.fisher_f_cdf(q, d1, d2) == pytest.approx(0.95, abs=1e-10)


@pytest.mark.parametrize(
    "call",
    [
        lambda: dist.std_normal_cdf(math.nan),
        lambda: dist.std_normal_quantile(0.0),
        lambda: dist.std_normal_quantile(1.0),
        lambda: dist.chi_square_cdf(1.0, 0),
        lambda: dist.chi_square_cdf(1.0, 3, -1.0),
        lambda: dist.chi_square_quantile(1.5, 3),
        lambda: dist.fisher_f_quantile(0.5, 0, 3),
    ],
)
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_cdf_edges():
    assert dist.chi_square_cdf(0.0, 5) == 0.0
    assert dist.chi_square_cdf(1e6, 3, 2.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        dist.chi_square_cdf(-1.0, 3, 2.0)


@pytest.mark.parametrize("x", [1.0, 5.0, 20.0])
def test_chi_square_round_trip(x):
    assert dist.chi_square_quantile(dist.chi_square_cdf(x, 5), 5) == pytest.approx(x, abs=1e-8)
    assert dist.chi_square_cdf(x, 5, 0.0) == pytest.approx(chi2_cdf_quad(x, 5), abs=1e-10)
