"""Gaussian-signal learning with privatized binary reports.

Agent n sees s ~ N(theta, sigma^2), takes a = +1 iff s >= t(l) with
t(l) = -sigma^2 l / 2, and reports x = a flipped with a probability that
depends on |s - t(l)|.  All report probabilities below are exact closed forms
in the standardized threshold d = (t - theta) / sigma and are evaluated in
the log domain so the public LLR recursion stays accurate for large |l|.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import (
    BudgetKind,
    BudgetSpec,
    ParameterError,
    PublicBelief,
    WorldState,
    check_positive,
)
from .numerics import minimize_scalar, zeta_partial

__all__ = [
    "MechanismKind",
    "Mechanism",
    "threshold",
    "flip_probability",
    "report_logprobs",
    "action_likelihood",
    "llr_step",
    "llr_update",
    "increment_plus",
    "asymptotic_increment",
    "growth_constant",
    "pufferfish_constant_bounds",
    "RateKind",
    "RateCurve",
    "rate_curve_value",
    "SeriesResult",
    "expected_stopping_series",
    "pufferfish_stopping_series",
    "stopping_objective",
    "optimal_epsilon",
    "uniform_mgf",
    "hetero_action_likelihood",
    "STAIRCASE_TAIL_TOL",
]

LOG_HALF = math.log(0.5)
# relative weight of the neglected staircase steps
STAIRCASE_TAIL_TOL = 1e-14
_MAX_STEPS = 1_000_000
_GL_POINTS = 8


class MechanismKind(str, enum.Enum):
    TRUTHFUL = "truthful"
    CONSTANT = "constant"
    SMOOTH = "smooth"
    STAIRCASE = "staircase"
    HETERO_SMOOTH = "hetero_smooth"


@dataclass(frozen=True)
class Mechanism:
    """A reporting strategy for Gaussian signals with standard deviation ``sigma``.

    ``HETERO_SMOOTH`` is the smooth strategy with a per-agent budget drawn
    from U[lo, hi]; flips use the agent's own draw, inference averages over
    the law.
    """

    kind: MechanismKind
    sigma: float
    eps: float | None = None
    u: float | None = None
    a: float | None = None
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MechanismKind(self.kind))
        check_positive("sigma", self.sigma)
        k = self.kind
        if k in (MechanismKind.SMOOTH, MechanismKind.STAIRCASE):
            check_positive("eps", self.eps)
            if math.isinf(self.eps):
                raise ParameterError("use the truthful mechanism for an unbounded budget")
        if k is MechanismKind.STAIRCASE:
            check_positive("a", self.a)
        if k is MechanismKind.CONSTANT:
            u = self.u
            if u is None or math.isnan(u) or not 0.0 <= u <= 0.5:
                raise ParameterError(f"constant flip probability must lie in [0, 1/2], got {u!r}")
        if k is MechanismKind.HETERO_SMOOTH:
            BudgetSpec.uniform(self.lo, self.hi)

    @classmethod
    def truthful(cls, sigma):
        return cls(MechanismKind.TRUTHFUL, sigma)

    @classmethod
    def constant_flip(cls, u, sigma):
        return cls(MechanismKind.CONSTANT, sigma, u=float(u))

    @classmethod
    def smooth(cls, eps, sigma):
        return cls(MechanismKind.SMOOTH, sigma, eps=float(eps))

    @classmethod
    def staircase(cls, eps, a, sigma):
        return cls(MechanismKind.STAIRCASE, sigma, eps=float(eps), a=float(a))

    @classmethod
    def hetero_smooth(cls, lo, hi, sigma):
        return cls(MechanismKind.HETERO_SMOOTH, sigma, lo=float(lo), hi=float(hi))

    @classmethod
    def from_budget(cls, budget: BudgetSpec, sigma) -> "Mechanism":
        """Smooth strategy for a fixed budget, truthful for none, heterogeneous for a law."""
        if budget.kind is BudgetKind.INFINITE:
            return cls.truthful(sigma)
        if budget.kind is BudgetKind.FIXED:
            return cls.smooth(budget.epsilon, sigma)
        return cls.hetero_smooth(budget.lo, budget.hi, sigma)

    @property
    def budget(self) -> BudgetSpec | None:
        """The per-agent budget law, where one applies."""
        if self.kind is MechanismKind.HETERO_SMOOTH:
            return BudgetSpec.uniform(self.lo, self.hi)
        if self.kind in (MechanismKind.SMOOTH, MechanismKind.STAIRCASE):
            return BudgetSpec.fixed(self.eps)
        return None

    def describe(self) -> str:
        k = self.kind
        if k is MechanismKind.SMOOTH:
            return f"smooth(eps={self.eps:g})"
        if k is MechanismKind.STAIRCASE:
            return f"staircase(eps={self.eps:g}, a={self.a:g})"
        if k is MechanismKind.CONSTANT:
            return f"constant(u={self.u:g})"
        if k is MechanismKind.HETERO_SMOOTH:
            return f"smooth(eps~U[{self.lo:g},{self.hi:g}])"
        return "truthful"


def _belief_value(l):
    if isinstance(l, PublicBelief):
        l = l.l
    arr = np.asarray(l, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise ParameterError("public belief must be finite here (absorbed or NaN belief given)")
    return arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def threshold(l, sigma) -> float:
    """Decision threshold t(l) = -sigma^2 l / 2."""
    sigma = check_positive("sigma", sigma)
    return _scalar(-0.5 * sigma * sigma * _belief_value(l))


def _staircase_step(dist, a):
    # step j covers |s - t| in (j a, (j + 1) a]; the threshold itself is step 0
    return np.maximum(np.ceil(dist / a) - 1.0, 0.0)


def flip_probability(mech: Mechanism, s, l, eps_n=None):
    """Flip probability of an agent with signal ``s`` at belief ``l``.

    ``eps_n`` is the agent's own budget and is required for the
    heterogeneous strategy.
    """
    s = np.asarray(s, dtype=float)
    dist = np.abs(s - threshold(l, mech.sigma))
    k = mech.kind
    if k is MechanismKind.TRUTHFUL:
        out = np.zeros_like(dist)
    elif k is MechanismKind.CONSTANT:
        out = np.full_like(dist, mech.u)
    elif k is MechanismKind.SMOOTH:
        out = 0.5 * np.exp(-mech.eps * dist)
    elif k is MechanismKind.STAIRCASE:
        j = _staircase_step(dist, mech.a)
        out = np.exp(-j * mech.eps) / (1.0 + math.exp(mech.eps))
    else:
        if eps_n is None:
            raise ParameterError("heterogeneous strategy needs the agent's own eps_n")
        out = 0.5 * np.exp(-np.asarray(eps_n, dtype=float) * dist)
    return _scalar(out)


# --- report probabilities -------------------------------------------------


def _normalize(lm, lp):
    """Recompute the larger probability as the complement of the smaller one."""
    minus_big = lm > LOG_HALF
    lm = np.where(minus_big, np.log1p(-np.exp(np.minimum(lp, LOG_HALF))), lm)
    lp = np.where(minus_big, lp, np.log1p(-np.exp(np.minimum(lm, LOG_HALF))))
    return lm, lp


def _smooth_parts(eps, sigma, d):
    """Unnormalized log P(x=-1), log P(x=+1) for the smooth strategy."""
    b = eps * sigma
    log_lo = special.log_ndtr(d)
    log_hi = special.log_ndtr(-d)
    # flip mass below and above the threshold, each e^{-eps|s-t|} weighted
    log_t1 = -b * d + 0.5 * b * b + special.log_ndtr(d - b)
    log_t2 = b * d + 0.5 * b * b + special.log_ndtr(-(d + b))
    keep_lo = log_lo + np.log1p(-0.5 * np.minimum(np.exp(log_t1 - log_lo), 1.0))
    keep_hi = log_hi + np.log1p(-0.5 * np.minimum(np.exp(log_t2 - log_hi), 1.0))
    lm = np.logaddexp(keep_lo, LOG_HALF + log_t2)
    lp = np.logaddexp(keep_hi, LOG_HALF + log_t1)
    return lm, lp


def _ndtr_diff(hi, lo):
    """Phi(hi) - Phi(lo) for hi >= lo without cancellation in the upper tail."""
    upper = lo > 0
    return np.where(upper, special.ndtr(-lo) - special.ndtr(-hi), special.ndtr(hi) - special.ndtr(lo))


def _staircase_parts(eps, a, sigma, d):
    h = a / sigma
    base = 1.0 / (1.0 + math.exp(eps))
    below = special.ndtr(d)
    above = special.ndtr(-d)
    flip_lo = np.zeros_like(d)
    flip_hi = np.zeros_like(d)
    scale = None
    for j in range(_MAX_STEPS):
        uj = base * math.exp(-j * eps)
        m_lo = _ndtr_diff(d - j * h, d - (j + 1) * h)
        m_hi = _ndtr_diff(-d - j * h, -d - (j + 1) * h)
        flip_lo += uj * m_lo
        flip_hi += uj * m_hi
        if scale is None:
            scale = np.minimum(below, above) + flip_lo + flip_hi
        tail = special.ndtr(d - (j + 1) * h) + special.ndtr(-d - (j + 1) * h)
        if np.all(uj * math.exp(-eps) * tail <= STAIRCASE_TAIL_TOL * np.minimum(scale, 1.0)):
            break
    lm = np.log(below - flip_lo + flip_hi)
    lp = np.log(above - flip_hi + flip_lo)
    return lm, lp


def _hetero_nodes(lo, hi, c):
    """Gauss-Legendre nodes/weights for E over U[lo, hi], graded toward both ends.

    The integrand varies on the scale 1 / c near the ends.
    """
    width = hi - lo
    levels = int(math.ceil(math.log2(c * width + 1.0))) + 2
    fr = [2.0 ** -j for j in range(levels, 0, -1)]
    edges = np.unique(np.concatenate(([0.0], fr, [1.0 - f for f in fr[::-1]], [1.0])))
    x, w = np.polynomial.legendre.leggauss(_GL_POINTS)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return lo + width * nodes, weights


def _hetero_parts(lo, hi, sigma, d, l):
    c = 0.5 * sigma * sigma * float(np.max(np.abs(l), initial=0.0)) + sigma * float(
        np.max(np.abs(d), initial=0.0)
    )
    nodes, weights = _hetero_nodes(lo, hi, c)
    lm, lp = _smooth_parts(nodes[:, None], sigma, d.ravel()[None, :])
    lw = np.log(weights)[:, None]
    lm = special.logsumexp(lm + lw, axis=0).reshape(d.shape)
    lp = special.logsumexp(lp + lw, axis=0).reshape(d.shape)
    return lm, lp


def report_logprobs(mech: Mechanism, l, theta):
    """(log P(x=-1 | l, theta), log P(x=+1 | l, theta)), broadcasting over l and theta."""
    l = _belief_value(l)
    theta = np.asarray(theta, dtype=float)
    sigma = mech.sigma
    d = np.asarray((-0.5 * sigma * sigma * l - theta) / sigma, dtype=float)
    k = mech.kind
    if k is MechanismKind.TRUTHFUL:
        lm, lp = special.log_ndtr(d), special.log_ndtr(-d)
    elif k is MechanismKind.CONSTANT:
        u = mech.u
        if u == 0.0:
            lm, lp = special.log_ndtr(d), special.log_ndtr(-d)
        else:
            lm = np.logaddexp(math.log1p(-u) + special.log_ndtr(d), math.log(u) + special.log_ndtr(-d))
            lp = np.logaddexp(math.log1p(-u) + special.log_ndtr(-d), math.log(u) + special.log_ndtr(d))
    elif k is MechanismKind.SMOOTH:
        lm, lp = _smooth_parts(mech.eps, sigma, d)
    elif k is MechanismKind.STAIRCASE:
        lm, lp = _staircase_parts(mech.eps, mech.a, sigma, d)
    else:
        l_b = np.broadcast_to(l, d.shape)
        lm, lp = _hetero_parts(mech.lo, mech.hi, sigma, d, l_b)
    lm, lp = _normalize(lm, lp)
    return _scalar(lm), _scalar(lp)


def _action(x) -> int:
    x = int(x)
    if x not in (-1, 1):
        raise ParameterError(f"action must be +1 or -1, got {x!r}")
    return x


def action_likelihood(mech: Mechanism, x, l, theta) -> float:
    """P(x | l, theta)."""
    lm, lp = report_logprobs(mech, l, int(WorldState.coerce(theta)))
    return math.exp(lp if _action(x) == 1 else lm)


def hetero_action_likelihood(x, l, theta, budget: BudgetSpec, sigma) -> float:
    """E over eps ~ budget of the smooth-strategy likelihood P(x | l, theta; eps)."""
    if budget.kind is not BudgetKind.UNIFORM:
        raise ParameterError("hetero_action_likelihood needs a uniform budget law")
    return action_likelihood(Mechanism.hetero_smooth(budget.lo, budget.hi, sigma), x, l, theta)


def llr_step(mech: Mechanism, l, x):
    """Vectorized public LLR update l + log P(x | l, +1) / P(x | l, -1)."""
    l = _belief_value(l)
    x = np.asarray(x)
    lm_p, lp_p = report_logprobs(mech, l, 1.0)
    lm_m, lp_m = report_logprobs(mech, l, -1.0)
    num = np.where(x == 1, lp_p, lm_p)
    den = np.where(x == 1, lp_m, lm_m)
    if np.any(np.isneginf(num) | np.isneginf(den)):
        raise ArithmeticError("report has zero likelihood at a finite belief")
    return _scalar(l + (num - den))


def llr_update(mech: Mechanism, l, x) -> PublicBelief:
    lv = l.l if isinstance(l, PublicBelief) else float(l)
    return PublicBelief(float(llr_step(mech, lv, _action(x))))


def increment_plus(mech: Mechanism, l):
    """D+(l) = log P(x=+1 | l, +1) / P(x=+1 | l, -1)."""
    l = _belief_value(l)
    return _scalar(llr_step(mech, l, np.ones_like(l)) - l)


def asymptotic_increment(eps, sigma, l):
    """G-(-l) = (1/2)(e^{eps + eps^2 sigma^2/2} - e^{-eps + eps^2 sigma^2/2}) e^{-eps sigma^2 l / 2}."""
    eps = check_positive("eps", eps)
    sigma = check_positive("sigma", sigma)
    l = np.asarray(l, dtype=float)
    s2 = sigma * sigma
    out = math.sinh(eps) * np.exp(0.5 * eps * eps * s2 - 0.5 * eps * s2 * l)
    return _scalar(out)


# --- rates ----------------------------------------------------------------


def growth_constant(eps, sigma) -> float:
    """C(eps) = (eps sigma^2 / 4)(e^{eps + eps^2 sigma^2/2} - e^{-eps + eps^2 sigma^2/2})."""
    eps = check_positive("eps", eps)
    sigma = check_positive("sigma", sigma)
    s2 = sigma * sigma
    return 0.5 * eps * s2 * math.sinh(eps) * math.exp(0.5 * eps * eps * s2)


def pufferfish_constant_bounds(eps, a, sigma) -> tuple[float, float]:
    """Lower and upper bounds on the staircase growth constant C_{eps,a}."""
    eps = check_positive("eps", eps)
    a = check_positive("a", a)
    sigma = check_positive("sigma", sigma)
    r = eps / a
    s2 = sigma * sigma
    core = 2.0 * math.sinh(r) * math.exp(0.5 * r * r * s2)
    lower = r * s2 / (2.0 * (1.0 + math.exp(eps))) * core
    return lower, lower * math.exp(eps)


class RateKind(str, enum.Enum):
    HOMOGENEOUS_LOG = "homogeneous_log"
    HETERO_SQRT = "hetero_sqrt"
    UPPER_BOUND_SQRT = "upper_bound_sqrt"
    NONPRIVATE_SQRT_LOG = "nonprivate_sqrt_log"
    PUFFERFISH_LOG = "pufferfish_log"


@dataclass(frozen=True)
class RateCurve:
    """An asymptotic growth law f(n) for the public LLR.

    ``c_tilde`` scales the heterogeneous square-root law and ``kappa`` the
    non-private reference; both are free constants meant to be fitted.  The
    default ``c_tilde = 2/e`` makes the square-root law coincide with the
    upper-bound curve.  ``bound`` picks the staircase constant: its lower or
    upper bound or their midpoint.
    """

    kind: RateKind
    sigma: float
    eps: float | None = None
    a: float | None = None
    c_tilde: float = 2.0 / math.e
    kappa: float = 1.0
    bound: str = "mid"

    def __post_init__(self):
        object.__setattr__(self, "kind", RateKind(self.kind))
        check_positive("sigma", self.sigma)
        if self.kind in (RateKind.HOMOGENEOUS_LOG, RateKind.PUFFERFISH_LOG):
            check_positive("eps", self.eps)
        if self.kind is RateKind.PUFFERFISH_LOG:
            check_positive("a", self.a)
            if self.bound not in ("lower", "mid", "upper"):
                raise ParameterError(f"bound must be lower, mid or upper, got {self.bound!r}")
        check_positive("c_tilde", self.c_tilde)
        check_positive("kappa", self.kappa)

    @property
    def constant(self) -> float | None:
        """The constant inside the logarithm for the log laws."""
        if self.kind is RateKind.HOMOGENEOUS_LOG:
            return growth_constant(self.eps, self.sigma)
        if self.kind is RateKind.PUFFERFISH_LOG:
            lo, hi = pufferfish_constant_bounds(self.eps, self.a, self.sigma)
            return {"lower": lo, "upper": hi, "mid": 0.5 * (lo + hi)}[self.bound]
        return None

    def __call__(self, n):
        return rate_curve_value(self, n)


def rate_curve_value(curve: RateCurve, n):
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1) or np.any(np.isnan(n_arr)):
        raise ParameterError("rate curves are defined for n >= 1")
    s2 = curve.sigma**2
    k = curve.kind
    if k is RateKind.HOMOGENEOUS_LOG:
        out = 2.0 / (curve.eps * s2) * np.log(curve.constant * n_arr)
    elif k is RateKind.PUFFERFISH_LOG:
        out = 2.0 * curve.a / (curve.eps * s2) * np.log(curve.constant * n_arr)
    elif k is RateKind.HETERO_SQRT:
        out = np.sqrt(2.0 * curve.c_tilde * n_arr / s2)
    elif k is RateKind.UPPER_BOUND_SQRT:
        out = np.sqrt(4.0 * n_arr / (math.e * s2))
    else:
        out = curve.kappa * np.sqrt(np.log(n_arr))
    return _scalar(out)


# --- stopping-time series -------------------------------------------------


@dataclass(frozen=True)
class SeriesResult:
    """Shape of E[tau] (and E[W]) up to a constant factor.

    ``value_shape`` is None when the series diverges and inf when it
    converges to a value beyond double range; ``log_value_shape`` is exact
    in both finite cases.
    """

    exponent: float
    finite: bool
    value_shape: float | None = None
    log_value_shape: float | None = None


def _series_exponent(eps, sigma, a=1.0) -> float:
    eps = check_positive("eps", eps)
    sigma = check_positive("sigma", sigma)
    return 2.0 * a / (eps * sigma * sigma)


def _converges(x: float) -> bool:
    # an exponent within rounding of 1 is the divergent boundary case
    return x > 1.0 and not math.isclose(x, 1.0, rel_tol=1e-12, abs_tol=0.0)


def _log_objective(eps, sigma, tol=1e-12) -> float:
    x = _series_exponent(eps, sigma)
    return -x * math.log(growth_constant(eps, sigma)) + math.log(zeta_partial(x, tol))


def expected_stopping_series(eps, sigma, tol: float = 1e-12) -> SeriesResult:
    """C(eps)^(-x) zeta(x) with x = 2 / (eps sigma^2), finite iff x > 1."""
    x = _series_exponent(eps, sigma)
    if not _converges(x):
        return SeriesResult(x, False)
    log_v = _log_objective(eps, sigma, tol)
    return SeriesResult(x, True, math.exp(log_v) if log_v < 709.0 else math.inf, log_v)


def pufferfish_stopping_series(eps, a, sigma) -> SeriesResult:
    """Exponent 2a / (eps sigma^2) of the staircase series; finite iff it exceeds 1."""
    a = check_positive("a", a)
    x = _series_exponent(eps, sigma, a)
    return SeriesResult(x, _converges(x))


def stopping_objective(eps, sigma) -> float:
    """The quantity minimized by ``optimal_epsilon``; inf where the series diverges."""
    res = expected_stopping_series(eps, sigma)
    return res.value_shape if res.finite else math.inf


def optimal_epsilon(sigma, lo=0.05, hi=None, tol: float = 1e-8) -> tuple[float, float]:
    """Budget minimizing the stopping-time series shape over [lo, hi].

    ``hi`` defaults to 99% of the divergence point 2 / sigma^2.
    """
    sigma = check_positive("sigma", sigma)
    edge = 2.0 / (sigma * sigma)
    lo = check_positive("lo", lo)
    hi = 0.99 * edge if hi is None else float(hi)
    if not hi < edge:
        raise ParameterError(f"bracket must stay below 2/sigma^2 = {edge:.6g}, got hi={hi!r}")
    if not lo < hi:
        raise ParameterError(f"need lo < hi, got [{lo}, {hi}]")
    x, f = minimize_scalar(lambda e: _log_objective(e, sigma), lo, hi, tol)
    return x, math.exp(f)


def uniform_mgf(c, lo=0.0, hi=1.0):
    """E[e^{c eps}] for eps ~ U[lo, hi]."""
    c = np.asarray(c, dtype=float)
    w = hi - lo
    cw = c * w
    safe = np.where(cw == 0.0, 1.0, cw)
    out = np.where(cw == 0.0, 1.0, np.exp(c * lo) * np.expm1(cw) / safe)
    return _scalar(out)
