"""Special functions and generic numeric routines.

The production paths are closed forms (Gaussian CDF, tilted half-line
integrals, an Euler-Maclaurin zeta).  ``adaptive_quadrature`` exists for
cross-checking those closed forms and is never called on a hot path.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .core import ParameterError, check_positive

__all__ = [
    "QuadratureError",
    "Side",
    "TiltedGaussianQuery",
    "std_normal_cdf",
    "log_std_normal_cdf",
    "gaussian_tail_bounds",
    "tilted_gaussian_halfline",
    "zeta_partial",
    "minimize_scalar",
    "adaptive_quadrature",
    "GRID_POINTS",
]

GRID_POINTS = 33
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class QuadratureError(ArithmeticError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


def std_normal_cdf(x):
    """Phi(x).  Accepts scalars or arrays."""
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def log_std_normal_cdf(x):
    """log Phi(x), accurate deep in the lower tail."""
    out = special.log_ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_tail_bounds(x: float) -> tuple[float, float]:
    """Mills-ratio sandwich for P(X >= x), X standard normal.

    Returns ``(lower, upper)`` with ``lower = phi(x) (1/x - 1/x^3)`` and
    ``upper = phi(x) / x``.  The lower bound is only informative for x > 1.
    """
    x = float(x)
    if not x > 0:
        raise ParameterError(f"tail bounds need x > 0, got {x!r}")
    density = math.exp(-0.5 * x * x) / _SQRT_2PI
    return density * (1.0 / x - 1.0 / x**3), density / x


class Side(str, enum.Enum):
    BELOW = "below"
    ABOVE = "above"


@dataclass(frozen=True)
class TiltedGaussianQuery:
    """Integral of N(s; mu, sigma^2) * exp(eps * s) over s < T (BELOW) or s > T (ABOVE)."""

    mu: float
    sigma: float
    eps: float
    T: float
    side: Side = Side.BELOW

    def __post_init__(self):
        check_positive("sigma", self.sigma)
        object.__setattr__(self, "side", Side(self.side))


def tilted_gaussian_halfline(q: TiltedGaussianQuery) -> float:
    """exp(eps mu + eps^2 sigma^2 / 2) * Phi(+-(T - mu - eps sigma^2) / sigma).

    Evaluated in the log domain; a non-finite result raises ``OverflowError``.
    """
    z = (q.T - q.mu - q.eps * q.sigma**2) / q.sigma
    if q.side is Side.ABOVE:
        z = -z
    log_mgf = q.eps * q.mu + 0.5 * (q.eps * q.sigma) ** 2
    log_val = log_mgf + special.log_ndtr(z)
    if log_val > 709.0:
        raise OverflowError(f"tilted Gaussian integral overflows (log value {log_val:.1f})")
    return math.exp(log_val)


def _zeta_tail(x: float, n: int) -> tuple[float, float]:
    # Euler-Maclaurin for sum_{k >= n} k^-x; error bounded by the first omitted term
    t0 = n ** (1.0 - x) / (x - 1.0)
    f = n ** (-x)
    d1 = x * n ** (-x - 1.0) / 12.0
    d3 = x * (x + 1.0) * (x + 2.0) * n ** (-x - 3.0) / 720.0
    bound = x * (x + 1.0) * (x + 2.0) * (x + 3.0) * (x + 4.0) * n ** (-x - 5.0) / 30240.0
    return t0 + 0.5 * f + d1 - d3, bound


def zeta_partial(x: float, tol: float = 1e-12) -> float:
    """sum_{n>=1} n^-x for x > 1, to absolute error ``tol``.

    An explicit head sum plus an Euler-Maclaurin tail; the head length is
    doubled until the remainder bound drops below ``tol``.
    """
    x = float(x)
    tol = check_positive("tol", tol)
    if math.isnan(x) or x <= 1.0:
        raise ParameterError(f"zeta series diverges for x <= 1 (x={x!r})")
    n = 8
    while True:
        tail, bound = _zeta_tail(x, n)
        if bound < tol or n > 1 << 22:
            break
        n *= 2
    head = np.arange(1, n, dtype=float) ** (-x)
    return float(math.fsum(head[::-1]) + tail)


def minimize_scalar(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8
) -> tuple[float, float]:
    """Coarse grid scan followed by golden-section refinement.

    The bracket around the best of ``GRID_POINTS`` equally spaced samples is
    narrowed until its width is below ``tol``.  NaN anywhere raises.
    """
    lo, hi = float(lo), float(hi)
    tol = check_positive("tol", tol)
    if not lo < hi:
        raise ParameterError(f"need lo < hi, got [{lo}, {hi}]")

    def fx(x):
        y = float(f(x))
        if math.isnan(y):
            raise ParameterError(f"objective returned NaN at x={x!r}")
        return y

    grid = np.linspace(lo, hi, GRID_POINTS)
    values = [fx(x) for x in grid]
    i = int(np.argmin(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, GRID_POINTS - 1)]
    best_x, best_f = grid[i], values[i]

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fx(c), fx(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fx(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fx(d)
    x_mid = 0.5 * (a + b)
    f_mid = fx(x_mid)
    # keep the grid point if refinement wandered off a flat/boundary minimum
    if best_f < f_mid:
        return float(best_x), float(best_f)
    return float(x_mid), float(f_mid)


def adaptive_quadrature(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-12,
    points: Sequence[float] | None = None,
    limit: int = 2000,
) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over [a, b] (QUADPACK).

    ``points`` lists interior kinks to split at.  Raises ``QuadratureError``
    (carrying the best estimate) when the error estimate exceeds ``tol``.
    """
    tol = check_positive("tol", tol)
    a, b = float(a), float(b)
    breaks = sorted(p for p in (points or ()) if a < p < b)
    edges = [a, *breaks, b]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(
                f, lo, hi, epsabs=tol / (4 * len(edges)), epsrel=0.0, limit=limit
            )
        total += val
        err += e
    if not err <= tol:
        raise QuadratureError(
            f"quadrature error estimate {err:.3g} exceeds tolerance {tol:.3g}", total, err
        )
    return total
