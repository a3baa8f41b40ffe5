"""Seeded ensembles for the Gaussian model, tau/W statistics and rate fits.

Replications are stepped agent by agent in vectorized blocks.  Every random
draw comes from ``streams`` and is addressed by (seed, replication, agent,
lane), so a replication's path does not depend on which block it landed in
or on the worker count.  Blocks are formed from the sorted replication
indices and merged in index order.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import streams
from .continuous_model import Mechanism, MechanismKind, flip_probability, llr_step
from .core import BudgetSpec, ParameterError, WorldState
from .records import RunSummary, Trajectory

__all__ = [
    "SimSpec",
    "EnsembleStats",
    "RateFit",
    "RateLaw",
    "RateLawRegressor",
    "simulate_trajectory",
    "simulate_block",
    "run_ensemble",
    "fit_rate",
    "empirical_survival",
    "estimate_tail_exponent",
    "geometric_checkpoints",
    "worker_count",
]

DEFAULT_HORIZON = 100_000
DEFAULT_BLOCK = 256
_CHUNK = 256


def worker_count() -> int:
    """Thread cap from CASCADE_LAB_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("CASCADE_LAB_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ParameterError(f"CASCADE_LAB_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ParameterError("CASCADE_LAB_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def geometric_checkpoints(horizon: int, per_decade: int = 1, base: float = 2.0) -> np.ndarray:
    """1, 2, 4, ... up to ``horizon`` plus ``horizon`` itself.

    ``per_decade`` > 1 switches to log-spaced points with that many per decade.
    """
    horizon = int(horizon)
    if per_decade > 1:
        pts = np.unique(np.round(np.logspace(0, math.log10(horizon), int(per_decade * math.log10(horizon)) + 1)))
    else:
        pts = base ** np.arange(int(math.floor(math.log(horizon, base))) + 1)
    pts = np.unique(np.append(np.floor(pts), horizon)).astype(np.int64)
    return pts[(pts >= 1) & (pts <= horizon)]


def _as_mechanism(mech_or_budget, sigma) -> Mechanism:
    if isinstance(mech_or_budget, Mechanism):
        if sigma is not None and not math.isclose(mech_or_budget.sigma, float(sigma)):
            raise ParameterError("sigma disagrees with the mechanism's sigma")
        return mech_or_budget
    if isinstance(mech_or_budget, BudgetSpec):
        if sigma is None:
            raise ParameterError("sigma is required with a budget")
        return Mechanism.from_budget(mech_or_budget, sigma)
    raise ParameterError(f"expected a Mechanism or BudgetSpec, got {type(mech_or_budget).__name__}")


def _agent_eps(mech: Mechanism, u_budget):
    k = mech.kind
    if k is MechanismKind.HETERO_SMOOTH:
        return mech.lo + (mech.hi - mech.lo) * u_budget
    if k in (MechanismKind.SMOOTH, MechanismKind.STAIRCASE):
        return np.full_like(u_budget, mech.eps)
    if k is MechanismKind.TRUTHFUL:
        return np.full_like(u_budget, np.inf)
    return np.full_like(u_budget, np.nan)


@dataclass
class _BlockResult:
    reps: np.ndarray
    theta: np.ndarray
    tau: np.ndarray  # 0 when censored
    W: np.ndarray
    final_l: np.ndarray
    steps: np.ndarray  # agents actually simulated
    checkpoint_l: np.ndarray
    checkpoint_x: np.ndarray
    record: dict | None = None


def simulate_block(
    mech: Mechanism,
    thetas,
    reps,
    seed: int,
    horizon: int,
    checkpoints=None,
    record=False,
    stop_at_tau: bool = False,
) -> _BlockResult:
    """Step a block of replications for ``horizon`` agents.

    ``checkpoint_l[:, i]`` is the belief agent ``checkpoints[i]`` sees before
    acting and ``checkpoint_x[:, i]`` that agent's report (0 if not reached).
    ``record`` is False, True (every agent) or a sorted array of agent
    indices whose full (eps_n, s, a, x, l) rows are kept.  With
    ``stop_at_tau`` a replication freezes at its first correct report; its
    later checkpoints are NaN and W counts only up to tau.
    """
    reps = np.asarray(reps, dtype=np.int64)
    thetas = np.asarray(thetas, dtype=float)
    horizon = int(horizon)
    R = reps.size
    cps = np.asarray([] if checkpoints is None else checkpoints, dtype=np.int64)
    if cps.size and (cps.min() < 1 or cps.max() > horizon):
        raise ParameterError("checkpoints must lie in [1, horizon]")
    cp_vals = np.full((R, cps.size), np.nan)
    cp_x = np.zeros((R, cps.size), dtype=np.int64)
    l = np.zeros(R)
    tau = np.zeros(R, dtype=np.int64)
    W = np.zeros(R, dtype=np.int64)
    steps = np.zeros(R, dtype=np.int64)
    rec = None
    rec_at = {}
    if record is True:
        rec_idx = np.arange(1, horizon + 1)
    elif record is False or record is None:
        rec_idx = np.zeros(0, dtype=np.int64)
    else:
        rec_idx = np.asarray(record, dtype=np.int64)
        if rec_idx.size and (rec_idx.min() < 1 or rec_idx.max() > horizon):
            raise ParameterError("recorded agents must lie in [1, horizon]")
    if rec_idx.size:
        K = rec_idx.size
        rec = {"n": rec_idx.copy()}
        rec.update({k: np.full((R, K), np.nan) for k in ("eps_n", "s", "l")})
        rec.update({k: np.zeros((R, K), dtype=np.int64) for k in ("a", "x")})
        rec_at = {int(n): i for i, n in enumerate(rec_idx)}
    sigma = mech.sigma
    gen = streams.AgentStreams(seed, reps)
    cp_at = {int(n): i for i, n in enumerate(cps)}
    live = np.arange(R)
    n = 0
    while n < horizon and live.size:
        count = min(_CHUNK, horizon - n)
        block = gen.next(count)
        for j in range(count):
            n += 1
            ci = cp_at.get(n)
            if ci is not None:
                cp_vals[live, ci] = l[live]
            ub = block[live, j]
            th = thetas[live]
            lv = l[live]
            eps_n = _agent_eps(mech, ub[:, streams.BUDGET])
            s = th + sigma * streams.normal_from_uniform(ub[:, streams.SIGNAL])
            a = np.where(s >= -0.5 * sigma * sigma * lv, 1, -1)
            u = flip_probability(mech, s, lv, eps_n)
            x = np.where(ub[:, streams.FLIP] < u, -a, a)
            if ci is not None:
                cp_x[live, ci] = x
            wrong = x != th
            W[live] += wrong
            first = (tau[live] == 0) & ~wrong
            tau[live[first]] = n
            steps[live] = n
            ri = rec_at.get(n)
            if ri is not None:
                rec["eps_n"][live, ri] = eps_n
                rec["s"][live, ri] = s
                rec["a"][live, ri] = a
                rec["x"][live, ri] = x
                rec["l"][live, ri] = lv
            l[live] = llr_step(mech, lv, x)
            if stop_at_tau:
                live = live[tau[live] == 0]
                if not live.size:
                    break
    return _BlockResult(reps, thetas, tau, W, l, steps, cp_vals, cp_x, rec)


def _summary(res: _BlockResult, i: int, horizon: int) -> RunSummary:
    th = WorldState(int(res.theta[i]))
    tau = int(res.tau[i]) or None
    # counts are truncated at the horizon; flag runs still leaning the wrong way
    leaning_wrong = np.sign(res.final_l[i]) != int(th)
    stopped_early = res.steps[i] < horizon
    return RunSummary(
        tau=tau,
        W=int(res.W[i]),
        horizon=horizon,
        theta=th,
        W_censored=bool(tau is None or leaning_wrong or stopped_early),
        extra={"final_l": float(res.final_l[i])},
    )


def simulate_trajectory(
    mech_or_budget,
    sigma,
    theta,
    n_agents: int,
    seed: int,
    replication: int = 0,
) -> tuple[Trajectory, RunSummary]:
    """One fully recorded run."""
    mech = _as_mechanism(mech_or_budget, sigma)
    th = WorldState.coerce(theta)
    n_agents = int(n_agents)
    if n_agents < 1:
        raise ParameterError("n_agents must be >= 1")
    res = simulate_block(mech, [int(th)], [replication], seed, n_agents, record=True)
    r = res.record
    traj = Trajectory(
        n=np.arange(1, n_agents + 1),
        eps_n=r["eps_n"][0],
        s=r["s"][0],
        a=r["a"][0],
        x=r["x"][0],
        l=r["l"][0],
        theta=th,
        seed=int(seed),
        replication=int(replication),
    )
    return traj, _summary(res, 0, n_agents)


@dataclass(frozen=True)
class SimSpec:
    """What to simulate.

    ``theta`` None alternates the state by replication parity: even
    replications use +1, odd ones -1.
    """

    mechanism: Mechanism
    horizon: int = DEFAULT_HORIZON
    theta: WorldState | None = WorldState.PLUS
    checkpoints: tuple | None = None
    stop_at_tau: bool = False

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ParameterError("horizon must be >= 1")
        if self.theta is not None:
            object.__setattr__(self, "theta", WorldState.coerce(self.theta))

    def theta_for(self, reps: np.ndarray) -> np.ndarray:
        if self.theta is None:
            return np.where(reps % 2 == 0, 1.0, -1.0)
        return np.full(reps.size, float(int(self.theta)))

    def resolved_checkpoints(self) -> np.ndarray:
        if self.checkpoints is None:
            return geometric_checkpoints(self.horizon)
        return np.unique(np.asarray(self.checkpoints, dtype=np.int64))


@dataclass(frozen=True)
class EnsembleStats:
    """Merged results of an ensemble, ordered by replication index.

    ``mean_l`` averages theta * l_n, the belief in the direction of the true
    state, so runs with either state can be pooled.
    """

    reps: np.ndarray
    theta: np.ndarray
    checkpoints: np.ndarray
    l_values: np.ndarray
    x_values: np.ndarray
    mean_l: np.ndarray
    se_l: np.ndarray
    summaries: tuple
    horizon: int
    records: dict | None = field(default=None, compare=False)

    def __eq__(self, other):
        if not isinstance(other, EnsembleStats):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.summaries == other.summaries
            and all(
                np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True)
                for k in ("reps", "theta", "checkpoints", "l_values", "x_values", "mean_l", "se_l")
            )
        )

    @property
    def tau(self) -> np.ndarray:
        """tau per replication; NaN where censored."""
        return np.array([np.nan if s.tau is None else s.tau for s in self.summaries])

    @property
    def W(self) -> np.ndarray:
        return np.array([s.W for s in self.summaries])

    @property
    def W_censored(self) -> np.ndarray:
        return np.array([s.W_censored for s in self.summaries])

    def mean_at(self, n: int) -> float:
        i = np.flatnonzero(self.checkpoints == n)
        if not i.size:
            raise KeyError(f"{n} is not a checkpoint")
        return float(self.mean_l[i[0]])

    def correct_fraction(self, n: int) -> tuple[float, float]:
        """Fraction of replications whose agent ``n`` reported theta, with its standard error."""
        i = np.flatnonzero(self.checkpoints == n)
        if not i.size:
            raise KeyError(f"{n} is not a checkpoint")
        x = self.x_values[:, i[0]]
        reached = x != 0
        f = float(np.mean(x[reached] == self.theta[reached]))
        return f, math.sqrt(f * (1.0 - f) / max(int(reached.sum()), 1))

    def tau_stats(self, theta=None) -> dict:
        """Mean of uncensored tau and the censored fraction, per state or pooled."""
        mask = np.ones(self.reps.size, bool) if theta is None else self.theta == int(theta)
        tau = self.tau[mask]
        W = self.W[mask]
        cens = np.isnan(tau)
        ok = tau[~cens]
        return {
            "replications": int(mask.sum()),
            "tau_mean": float(ok.mean()) if ok.size else None,
            "tau_censored_frac": float(cens.mean()) if tau.size else None,
            "w_mean": float(W.mean()) if W.size else None,
            "w_censored_frac": float(self.W_censored[mask].mean()) if W.size else None,
        }

    def survival(self, theta=None, min_at_risk: int = 1):
        return empirical_survival(
            self.tau if theta is None else self.tau[self.theta == int(theta)],
            self.horizon,
            min_at_risk=min_at_risk,
        )


def _blocks(reps: np.ndarray, size: int):
    return [reps[i : i + size] for i in range(0, reps.size, size)]


def run_ensemble(
    spec: SimSpec,
    replications,
    seed: int,
    block_size: int = DEFAULT_BLOCK,
    record=False,
    workers: int | None = None,
) -> EnsembleStats:
    """Simulate replications ``range(replications)`` or an explicit index list.

    Blocks are cut from the sorted indices, so the index set, not its order,
    determines the result.
    """
    if np.ndim(replications) == 0:
        count = int(replications)
        if count < 1:
            raise ParameterError("replications must be >= 1")
        reps = np.arange(count, dtype=np.int64)
    else:
        reps = np.unique(np.asarray(replications, dtype=np.int64))
        if reps.size == 0:
            raise ParameterError("replications must be non-empty")
        if reps.size != np.asarray(replications).size:
            raise ParameterError("replication indices must be distinct")
    horizon = int(spec.horizon)
    cps = spec.resolved_checkpoints()
    thetas = spec.theta_for(reps)
    mech = spec.mechanism

    def job(idx):
        return simulate_block(
            mech, thetas[idx], reps[idx], seed, horizon, cps, record, spec.stop_at_tau
        )

    chunks = _blocks(np.arange(reps.size), int(block_size))
    n_workers = min(workers or worker_count(), len(chunks))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(c) for c in chunks]

    l_values = np.concatenate([r.checkpoint_l for r in results])
    x_values = np.concatenate([r.checkpoint_x for r in results])
    summaries = tuple(_summary(r, i, horizon) for r in results for i in range(r.reps.size))
    aligned = thetas[:, None] * l_values
    live = np.sum(~np.isnan(aligned), axis=0)
    # checkpoints past every stopped run are all NaN; they stay NaN
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_l = np.nanmean(aligned, axis=0) if aligned.size else np.zeros(cps.size)
        se_l = np.where(live > 1, np.nanstd(aligned, axis=0, ddof=min(1, reps.size - 1)) / np.sqrt(live), np.nan)
    records = None
    if results[0].record is not None:
        records = {k: np.concatenate([r.record[k] for r in results]) for k in results[0].record if k != "n"}
        records["n"] = results[0].record["n"]
    return EnsembleStats(reps, thetas, cps, l_values, x_values, mean_l, se_l, summaries, horizon, records)


# --- fits -----------------------------------------------------------------


class RateLaw:
    LOG = "log"
    SQRT = "sqrt"
    SQRT_LOG = "sqrt_log"

    FEATURES = {
        LOG: np.log,
        SQRT: np.sqrt,
        SQRT_LOG: lambda n: np.sqrt(np.log(n)),
    }

    @classmethod
    def coerce(cls, law) -> str:
        key = str(law).lower().replace("-", "_")
        aliases = {"loglaw": cls.LOG, "sqrtlaw": cls.SQRT, "sqrtloglaw": cls.SQRT_LOG}
        key = aliases.get(key.replace("_", ""), key)
        if key not in cls.FEATURES:
            raise ParameterError(f"unknown rate law {law!r}")
        return key


class RateLawRegressor(RegressorMixin, BaseEstimator):
    """l ~ intercept + coef * g(n) with g = log, sqrt or sqrt(log)."""

    def __init__(self, law: str = "sqrt"):
        self.law = law

    def _features(self, X):
        n = np.asarray(X, dtype=float).reshape(-1)
        if np.any(n < 1):
            raise ParameterError("n must be >= 1")
        return RateLaw.FEATURES[RateLaw.coerce(self.law)](n)

    def fit(self, X, y):
        g = self._features(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        if g.size != y.size:
            raise ParameterError("X and y lengths differ")
        A = np.column_stack([g, np.ones_like(g)])
        (self.coef_, self.intercept_), *_ = np.linalg.lstsq(A, y, rcond=None)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.coef_ * self._features(X) + self.intercept_


@dataclass(frozen=True)
class RateFit:
    law: str
    coefficient: float
    intercept: float
    r2: float


def fit_rate(mean_curve, law="sqrt") -> RateFit:
    """Least-squares fit of a mean LLR curve [(n, l), ...] against a growth law."""
    pts = np.asarray(mean_curve, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ParameterError("mean_curve must be a sequence of (n, l) pairs")
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    n, l = pts[:, 0], pts[:, 1]
    if n.size < 10:
        raise ParameterError(f"need at least 10 points, got {n.size}")
    if n.min() < 1 or n.max() / n.min() < 100.0:
        raise ParameterError("n must span at least two decades")
    if np.ptp(l) <= 1e-12 * max(1.0, np.abs(l).max()):
        raise ParameterError("constant curve: no growth to fit")
    est = RateLawRegressor(law).fit(n, l)
    return RateFit(RateLaw.coerce(law), float(est.coef_), float(est.intercept_), float(est.score(n, l)))


def empirical_survival(tau, horizon: int, min_at_risk: int = 1):
    """[(n, P(tau > n))] for n = 1..horizon where at least ``min_at_risk`` runs survive.

    ``tau`` holds first-correct indices with NaN (or None) for censored runs.
    """
    t = np.array([np.nan if v is None else v for v in np.atleast_1d(tau)], dtype=float)
    total = t.size
    if total == 0:
        raise ParameterError("no runs given")
    t = np.where(np.isnan(t), np.inf, t)
    ns = np.arange(1, int(horizon) + 1)
    alive = total - np.searchsorted(np.sort(t), ns, side="right")
    keep = alive >= max(int(min_at_risk), 1)
    return [(int(n), a / total) for n, a in zip(ns[keep], alive[keep])]


def estimate_tail_exponent(survival: Sequence, min_points: int = 20) -> float:
    """Log-log slope of P(tau > n) over the last full decade holding >= ``min_points`` points."""
    pts = np.asarray(survival, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ParameterError("survival must be a non-empty sequence of (n, P) pairs")
    pts = pts[np.argsort(pts[:, 0])]
    n, S = pts[:, 0], pts[:, 1]
    if np.any(S <= 0) or np.any(n <= 0):
        raise ParameterError("survival probabilities and n must be strictly positive")
    top = n[-1]
    for i in range(n.size - 1, -1, -1):
        lo = n[i]
        if 10.0 * lo > top * (1 + 1e-12):
            continue
        window = (n >= lo) & (n <= 10.0 * lo * (1 + 1e-12))
        if window.sum() >= min_points:
            slope, _ = np.polyfit(np.log(n[window]), np.log(S[window]), 1)
            return float(slope)
    raise ParameterError(
        f"insufficient tail: no full decade of n holds {min_points} survival points"
    )
