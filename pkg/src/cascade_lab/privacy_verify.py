"""Empirical privacy certification of reporting strategies.

For a fixed public belief the report of an agent with signal s is the
intended action kept with probability 1 - u(s) or flipped with probability
u(s).  The certifier evaluates these exact conditional probabilities on many
signal pairs and compares the log ratio with the budget the notion allows:
eps |s - s'| (metric DP), eps (local DP), or eps for pairs within distance a
(Pufferfish).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .continuous_model import Mechanism, MechanismKind, flip_probability, threshold
from .core import ParameterError, check_positive

__all__ = ["Notion", "CertReport", "certify", "SLACK", "NEAR_OFFSETS", "SEARCH_WIDTH"]

SLACK = 1e-9
NEAR_OFFSETS = (1e-6, 1e-3, 1.0, 5.0)
# signals are searched within t +- SEARCH_WIDTH * sigma
SEARCH_WIDTH = 10.0
_BOUNDARY_GAPS = (1e-9, 1e-6, 1e-3)
_BOUNDARY_STEPS = 4


class Notion(str, enum.Enum):
    LDP = "ldp"
    METRIC_DP = "metric-dp"
    PUFFERFISH = "pufferfish"

    @classmethod
    def coerce(cls, value) -> "Notion":
        if isinstance(value, Notion):
            return value
        key = str(value).lower().replace("_", "-")
        aliases = {"mdp": "metric-dp", "metricdp": "metric-dp", "metric": "metric-dp"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ParameterError(f"unknown privacy notion {value!r}") from None


@dataclass(frozen=True)
class CertReport:
    """Outcome of a certification run.

    ``worst_tuple`` is (s, s', x, l) with the larger probability in the
    numerator; ``max_log_ratio`` is the largest log ratio seen at any pair.
    """

    notion: Notion
    eps: float
    max_log_ratio_excess: float
    max_log_ratio: float
    worst_tuple: tuple
    tuples_tested: int
    passed: bool
    adjacency_a: float | None = None

    def as_dict(self) -> dict:
        s, s2, x, l = self.worst_tuple
        return {
            "notion": self.notion.value,
            "eps": self.eps,
            "adjacency_a": self.adjacency_a,
            "max_log_ratio_excess": self.max_log_ratio_excess,
            "max_log_ratio": self.max_log_ratio,
            "worst_tuple": {"s": s, "s_prime": s2, "x": x, "l": l},
            "tuples_tested": self.tuples_tested,
            "passed": self.passed,
        }


def _log_report_probs(mech: Mechanism, s: np.ndarray, l: float):
    """(log P(x=-1 | s), log P(x=+1 | s)) at belief l."""
    t = threshold(l, mech.sigma)
    u = np.asarray(flip_probability(mech, s, l), dtype=float)
    with np.errstate(divide="ignore"):
        keep, flip = np.log1p(-u), np.log(u)
    up = s >= t
    return np.where(up, flip, keep), np.where(up, keep, flip)


def _sampled_pairs(rng, t, sigma, n, notion: Notion, a):
    """Pairs split evenly over the strata above / below / straddling t."""
    w = SEARCH_WIDTH * sigma
    k = n // 3
    sizes = (n - 2 * k, k, k)
    out = []
    if notion is Notion.PUFFERFISH:
        for m, side in zip(sizes, (1.0, -1.0)):
            s = t + side * rng.uniform(0.0, w, m)
            s2 = np.clip(s + rng.uniform(-a, a, m), *sorted((t, t + side * w)))
            out.append((s, s2))
        m = sizes[2]
        reach = min(a, w)
        s = t - rng.uniform(0.0, reach, m)
        s2 = t + rng.uniform(0.0, 1.0, m) * (s + a - t)
        out.append((s, s2))
    else:
        for m, side in zip(sizes, (1.0, -1.0)):
            out.append((t + side * rng.uniform(0.0, w, m), t + side * rng.uniform(0.0, w, m)))
        m = sizes[2]
        out.append((t - rng.uniform(0.0, w, m), t + rng.uniform(0.0, w, m)))
    s = np.concatenate([p[0] for p in out])
    s2 = np.concatenate([p[1] for p in out])
    return s, s2


def _deterministic_points(mech: Mechanism, t: float) -> np.ndarray:
    pts = [t]
    pts += [t + sgn * o for o in NEAR_OFFSETS for sgn in (-1.0, 1.0)]
    if mech.kind is MechanismKind.STAIRCASE:
        for j in range(1, _BOUNDARY_STEPS + 1):
            for sgn in (-1.0, 1.0):
                edge = t + sgn * j * mech.a
                pts.append(edge)
                pts += [edge + g for g in _BOUNDARY_GAPS] + [edge - g for g in _BOUNDARY_GAPS]
    return np.unique(np.asarray(pts))


def certify(
    mech: Mechanism,
    notion,
    eps,
    adjacency_a=None,
    l_grid=(0.0,),
    pair_samples: int = 10_000,
    seed: int = 0,
) -> CertReport:
    """Check the declared privacy notion on sampled and deterministic signal pairs.

    ``pair_samples`` random pairs are drawn for every belief in ``l_grid``;
    each pair is tested for both reports.  Violations are reported, not raised.
    """
    notion = Notion.coerce(notion)
    eps = check_positive("eps", eps)
    pair_samples = int(pair_samples)
    if pair_samples < 1:
        raise ParameterError("pair_samples must be >= 1")
    a = None
    if notion is Notion.PUFFERFISH:
        if adjacency_a is None:
            raise ParameterError("Pufferfish certification needs an adjacency distance a")
        a = check_positive("adjacency_a", adjacency_a)
    if mech.kind is MechanismKind.HETERO_SMOOTH:
        raise ParameterError("certify a heterogeneous strategy per budget value (smooth mechanism)")
    rng = np.random.default_rng(int(seed))
    best = (-math.inf, -math.inf, (math.nan, math.nan, 0, math.nan))
    tested = 0
    for l in np.atleast_1d(np.asarray(l_grid, dtype=float)):
        t = threshold(float(l), mech.sigma)
        s, s2 = _sampled_pairs(rng, t, mech.sigma, pair_samples, notion, a)
        pts = _deterministic_points(mech, t)
        i, j = np.triu_indices(pts.size, k=1)
        s = np.concatenate([s, pts[i]])
        s2 = np.concatenate([s2, pts[j]])
        dist = np.abs(s - s2)
        if notion is Notion.PUFFERFISH:
            keep = dist <= a
            s, s2, dist = s[keep], s2[keep], dist[keep]
        if notion is Notion.METRIC_DP:
            allowed = eps * dist
        else:
            allowed = np.full_like(dist, eps)
        lp1 = _log_report_probs(mech, s, float(l))
        lp2 = _log_report_probs(mech, s2, float(l))
        for x, p1, p2 in zip((-1, 1), lp1, lp2):
            with np.errstate(invalid="ignore"):
                ratio = p1 - p2
            ratio = np.where(np.isnan(ratio), 0.0, ratio)  # both impossible
            mag = np.abs(ratio)
            excess = mag - allowed
            tested += mag.size
            if not mag.size:
                continue
            k = int(np.argmax(excess))
            top = float(mag.max())
            if excess[k] > best[0] or top > best[1]:
                tup = (float(s[k]), float(s2[k])) if ratio[k] >= 0 else (float(s2[k]), float(s[k]))
                new_best = (
                    max(best[0], float(excess[k])),
                    max(best[1], top),
                    (*tup, x, float(l)) if excess[k] > best[0] else best[2],
                )
                best = new_best
    max_excess, max_ratio, worst = best
    return CertReport(
        notion=notion,
        eps=eps,
        max_log_ratio_excess=max_excess,
        max_log_ratio=max_ratio,
        worst_tuple=worst,
        tuples_tested=tested,
        passed=bool(max_excess <= SLACK),
        adjacency_a=a,
    )
