"""Shared domain types and belief-space conversions.

Everything here is an immutable value.  Beliefs are carried as
log-likelihood ratios; ``math.inf`` / ``-math.inf`` are the explicit
sentinels for fully absorbed beliefs and every conversion treats them
before touching ``exp`` so that nothing overflows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ParameterError",
    "NoCascadeError",
    "WorldState",
    "BudgetKind",
    "BudgetSpec",
    "PublicBelief",
    "BinaryParams",
    "GaussianParams",
    "Probability",
    "logit",
    "logistic",
    "check_positive",
]


class ParameterError(ValueError):
    """Raised when a model parameter is outside its admissible range."""


class NoCascadeError(ArithmeticError):
    """Reports are uninformative (correct-report probability exactly 1/2).

    The public walk has no drift and no finite cascade threshold exists, so
    cascade quantities are undefined rather than NaN.
    """


class WorldState(enum.IntEnum):
    """The unknown binary state.  The prior is fixed at 1/2 on each value."""

    PLUS = 1
    MINUS = -1

    @classmethod
    def coerce(cls, value) -> "WorldState":
        if isinstance(value, WorldState):
            return value
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise ParameterError(f"theta must be +1 or -1, got {value!r}") from None


class BudgetKind(str, enum.Enum):
    FIXED = "fixed"
    INFINITE = "infinite"
    UNIFORM = "uniform"


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0) or math.isnan(value):
        raise ParameterError(f"{name} must be > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class BudgetSpec:
    """A privacy budget: a fixed epsilon, no privacy, or a uniform law over epsilon."""

    kind: BudgetKind
    epsilon: float | None = None
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind is BudgetKind.FIXED:
            eps = self.epsilon
            if eps is None or math.isnan(eps) or not eps > 0:
                raise ParameterError(f"fixed budget requires epsilon > 0, got {eps!r}")
            if math.isinf(eps):
                raise ParameterError("use BudgetSpec.infinite() for an unbounded budget")
        elif self.kind is BudgetKind.UNIFORM:
            lo, hi = self.lo, self.hi
            if lo is None or hi is None or not (0 <= lo < hi) or math.isinf(hi):
                raise ParameterError(f"uniform budget requires 0 <= lo < hi < inf, got ({lo!r}, {hi!r})")

    @classmethod
    def fixed(cls, epsilon: float) -> "BudgetSpec":
        epsilon = float(epsilon)
        if math.isinf(epsilon) and epsilon > 0:
            return cls.infinite()
        return cls(BudgetKind.FIXED, epsilon=epsilon)

    @classmethod
    def infinite(cls) -> "BudgetSpec":
        return cls(BudgetKind.INFINITE)

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "BudgetSpec":
        return cls(BudgetKind.UNIFORM, lo=float(lo), hi=float(hi))

    @property
    def is_distributional(self) -> bool:
        return self.kind is BudgetKind.UNIFORM

    def draw(self, uniforms):
        """Map uniform variates in [0, 1) to epsilon draws (inf for the non-private budget)."""
        uniforms = np.asarray(uniforms, dtype=float)
        if self.kind is BudgetKind.FIXED:
            return np.full_like(uniforms, self.epsilon)
        if self.kind is BudgetKind.INFINITE:
            return np.full_like(uniforms, np.inf)
        return self.lo + (self.hi - self.lo) * uniforms

    def describe(self) -> str:
        if self.kind is BudgetKind.FIXED:
            return f"eps={self.epsilon:g}"
        if self.kind is BudgetKind.INFINITE:
            return "eps=inf"
        return f"eps~U[{self.lo:g},{self.hi:g}]"


class Probability(float):
    """A probability that remembers the log-odds it was computed from.

    Near 0 or 1 a double cannot resolve 1 - pi finely enough to recover the
    log-odds, so ``logit`` reads the stored value instead.
    """

    __slots__ = ("log_odds",)

    def __new__(cls, value: float, log_odds: float):
        obj = super().__new__(cls, value)
        obj.log_odds = log_odds
        return obj


def logit(pi: float) -> float:
    """log(pi / (1 - pi)), with the endpoints mapped to -inf / +inf."""
    if isinstance(pi, Probability):
        return pi.log_odds
    pi = float(pi)
    if math.isnan(pi):
        raise ParameterError("logit of NaN")
    if not 0.0 <= pi <= 1.0:
        raise ParameterError(f"probability must lie in [0, 1], got {pi!r}")
    if pi == 0.0:
        return -math.inf
    if pi == 1.0:
        return math.inf
    return math.log(pi) - math.log1p(-pi)


def logistic(l: float) -> Probability:
    """1 / (1 + exp(-l)); monotone, saturates without overflow."""
    l = float(l)
    if math.isnan(l):
        raise ParameterError("logistic of NaN")
    if l >= 0:
        return Probability(1.0 / (1.0 + math.exp(-l)), l)
    z = math.exp(l)
    return Probability(z / (1.0 + z), l)


@dataclass(frozen=True)
class PublicBelief:
    """Public log-likelihood ratio of theta=+1 against theta=-1."""

    l: float = 0.0

    def __post_init__(self):
        if math.isnan(self.l):
            raise ParameterError("public belief cannot be NaN")

    @classmethod
    def from_probability(cls, pi: float) -> "PublicBelief":
        return cls(logit(pi))

    @property
    def pi(self) -> float:
        return logistic(self.l)

    @property
    def is_absorbed(self) -> bool:
        return math.isinf(self.l)


@dataclass(frozen=True)
class BinaryParams:
    """Binary-signal model: signals equal theta with probability p."""

    p: float
    budget: BudgetSpec = BudgetSpec.infinite()

    def __post_init__(self):
        p = self.p
        if not isinstance(p, (int, float)) or math.isnan(p) or not 0.5 < p < 1.0:
            raise ParameterError(f"signal accuracy p must lie strictly in (0.5, 1), got {p!r}")


@dataclass(frozen=True)
class GaussianParams:
    """Gaussian-signal model: s ~ N(theta, sigma^2)."""

    sigma: float
    budget: BudgetSpec = BudgetSpec.infinite()

    def __post_init__(self):
        check_positive("sigma", self.sigma)
