import math

import numpy as np
import pytest
from scipy import stats

from cascade_lab.numerics import (
    GRID_POINTS,
    QuadratureError,
    Side,
    TiltedGaussianQuery,
    adaptive_quadrature,
    gaussian_tail_bounds,
    log_std_normal_cdf,
    minimize_scalar,
    std_normal_cdf,
    tilted_gaussian_halfline,
    zeta_partial,
)
from cascade_lab.core import ParameterError

import oracles


def test_std_normal_cdf_symmetry():
    assert std_normal_cdf(0.0) == 0.5
    for x in np.linspace(0, 8, 33):
        assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-15)


def test_std_normal_cdf_matches_density_quadrature():
    upper = adaptive_quadrature(stats.norm.pdf, 5.0, 40.0, tol=1e-14)
    assert 1.0 - std_normal_cdf(5.0) == pytest.approx(upper, abs=1e-15)
    assert std_normal_cdf(-5.0) == pytest.approx(upper, rel=1e-12)


def test_log_cdf_deep_tail():
    assert log_std_normal_cdf(-40.0) == pytest.approx(stats.norm.logcdf(-40.0), rel=1e-12)


def test_tail_bounds_examples():
    lo, hi = gaussian_tail_bounds(2.0)
    assert lo < 1 - std_normal_cdf(2.0) < hi
    assert 1 - std_normal_cdf(2.0) == pytest.approx(0.02275, abs=1e-5)
    assert gaussian_tail_bounds(1.0)[0] == 0.0
    lo, hi = gaussian_tail_bounds(10.0)
    assert hi / lo == pytest.approx(1 / (1 - 1e-2), rel=1e-12)
    assert hi / lo - 1 < 0.011


def test_tail_bounds_sandwich_grid():
    for x in [1.01, *np.arange(1.5, 10.01, 0.5)]:
        lo, hi = gaussian_tail_bounds(x)
        tail = std_normal_cdf(-x)
        assert lo <= tail <= hi


def test_tail_bounds_reject_nonpositive():
    with pytest.raises(ParameterError):
        gaussian_tail_bounds(0.0)


def test_tilted_halfline_sums_to_mgf():
    for mu, sigma, eps, T in [(-1, 1, 1, 0), (0.3, 2.0, -0.4, 1.1), (2, 0.5, 3, -1)]:
        b = tilted_gaussian_halfline(TiltedGaussianQuery(mu, sigma, eps, T, Side.BELOW))
        a = tilted_gaussian_halfline(TiltedGaussianQuery(mu, sigma, eps, T, Side.ABOVE))
        mgf = math.exp(eps * mu + 0.5 * eps**2 * sigma**2)
        assert a + b == pytest.approx(mgf, rel=1e-12)


def test_tilted_halfline_untilted_is_cdf():
    q = TiltedGaussianQuery(0.5, 2.0, 0.0, 1.3, Side.BELOW)
    assert tilted_gaussian_halfline(q) == pytest.approx(std_normal_cdf(0.4), abs=1e-15)


def test_tilted_halfline_matches_quadrature():
    q = TiltedGaussianQuery(-1.0, 1.0, 1.0, 0.0, Side.ABOVE)
    ref = adaptive_quadrature(lambda s: stats.norm.pdf(s, -1, 1) * math.exp(s), 0.0, 40.0, tol=1e-13)
    assert tilted_gaussian_halfline(q) == pytest.approx(ref, abs=1e-10)
    assert tilted_gaussian_halfline(q) == pytest.approx(ref, rel=1e-12)


def test_tilted_halfline_overflow_is_reported():
    with pytest.raises(OverflowError):
        tilted_gaussian_halfline(TiltedGaussianQuery(0.0, 1.0, 50.0, 100.0, Side.BELOW))


def test_zeta_known_values():
    assert zeta_partial(2.0, 1e-12) == pytest.approx(math.pi**2 / 6, abs=1e-12)
    assert zeta_partial(4.0, 1e-12) == pytest.approx(math.pi**4 / 90, abs=1e-12)


def test_zeta_matches_brute_force():
    # brute-force head to 10^7 plus the exact tail bracket midpoint
    n = 10**7
    head = oracles.zeta_bruteforce(3.0, n)
    tail_lo, tail_hi = 1 / (2 * (n + 1) ** 2), 1 / (2 * n**2)
    assert zeta_partial(3.0, 1e-13) == pytest.approx(head + 0.5 * (tail_lo + tail_hi), abs=1e-13)


@pytest.mark.parametrize("x", [1.0, 0.5, math.nan])
def test_zeta_diverges(x):
    with pytest.raises(ParameterError):
        zeta_partial(x)


def test_zeta_monotone():
    xs = np.linspace(1.1, 10, 90)
    vals = [zeta_partial(x, 1e-12) for x in xs]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_minimize_scalar_examples():
    x, f = minimize_scalar(lambda x: (x - 2) ** 2, 0, 5, 1e-8)
    assert x == pytest.approx(2, abs=1e-8)
    x, f = minimize_scalar(lambda x: x, 0, 1, 1e-8)
    assert x == pytest.approx(0, abs=1e-8)
    assert GRID_POINTS == 33


def test_minimize_scalar_rejects_nan():
    with pytest.raises(ParameterError):
        minimize_scalar(lambda x: math.nan, 0, 1)
    with pytest.raises(ParameterError):
        minimize_scalar(lambda x: x, 1, 0)


def test_minimize_scalar_deterministic():
    f = lambda x: math.cos(3 * x) + 0.1 * x
    assert minimize_scalar(f, 0, 4) == minimize_scalar(f, 0, 4)


def test_quadrature_examples():
    assert adaptive_quadrature(lambda s: 1.0, 0, 1, tol=1e-13) == pytest.approx(1, abs=1e-14)
    assert adaptive_quadrature(stats.norm.pdf, -8, 8, tol=1e-13) == pytest.approx(1, abs=1e-12)
    mgf = adaptive_quadrature(
        lambda s: stats.norm.pdf(s, -1, 1) * math.exp(s), -40, 40, tol=1e-12, points=[0.0]
    )
    assert mgf == pytest.approx(math.exp(-0.5), abs=1e-10)


def test_quadrature_failure_carries_estimate():
    with pytest.raises(QuadratureError) as info:
        adaptive_quadrature(lambda s: math.sin(1 / s), 1e-6, 1, tol=1e-15, limit=5)
    assert math.isfinite(info.value.estimate)
    assert info.value.error > 1e-15
