"""Binary-signal cascades under randomized response.

Before a cascade every agent acts on its own signal and the report is that
action flipped with probability u, so each report matches the state with
probability ``u_tilde`` independently.  The signed count of reports is then
a +-1 walk and a cascade starts once it reaches +-k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import streams
from .core import (
    BinaryParams,
    BudgetKind,
    BudgetSpec,
    NoCascadeError,
    ParameterError,
    WorldState,
)
from .records import RunSummary, Trajectory

__all__ = [
    "BinaryAnalysis",
    "BreakpointTable",
    "flip_prob",
    "expected_flip",
    "correct_report_prob",
    "analyze",
    "cascade_threshold",
    "correct_cascade_prob",
    "epsilon_breakpoints",
    "gambler_ruin_oracle",
    "simulate_binary",
    "BinaryEnsemble",
    "binary_ensemble",
]

# tolerance for snapping log-ratios onto integers before the floor
_SNAP = 1e-9


def _softplus(x: float) -> float:
    """log(1 + e^x) without overflow."""
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def flip_prob(budget: BudgetSpec) -> float:
    """u(eps) = 1 / (1 + e^eps); zero for the non-private budget."""
    if budget.kind is BudgetKind.INFINITE:
        return 0.0
    if budget.kind is BudgetKind.UNIFORM:
        raise ParameterError("flip_prob needs a point budget; use expected_flip for distributions")
    eps = budget.epsilon
    # e^-eps / (1 + e^-eps) keeps large eps accurate
    z = math.exp(-eps)
    return z / (1.0 + z)


def expected_flip(budget: BudgetSpec) -> float:
    """Population flip probability E[1 / (1 + e^eps)].

    For eps ~ U[lo, hi] the antiderivative of 1/(1+e^x) is x - log(1+e^x),
    which equals -softplus(-x).
    """
    if budget.kind is not BudgetKind.UNIFORM:
        return flip_prob(budget)
    lo, hi = budget.lo, budget.hi
    return (_softplus(-lo) - _softplus(-hi)) / (hi - lo)


def correct_report_prob(p: float, u: float) -> float:
    """Probability that a pre-cascade report matches the state."""
    return u * (1.0 - p) + p * (1.0 - u)


def _population_flip(params_or_p, budget: BudgetSpec | None) -> tuple[float, float]:
    if isinstance(params_or_p, BinaryParams):
        return params_or_p.p, expected_flip(params_or_p.budget)
    p = BinaryParams(float(params_or_p)).p
    if budget is None:
        raise ParameterError("a budget is required")
    return p, expected_flip(budget)


@dataclass(frozen=True)
class BinaryAnalysis:
    """Closed-form cascade quantities at one (p, u)."""

    p: float
    u: float
    u_tilde: float
    rho: float
    k: int
    p_correct_cascade: float

    @classmethod
    def from_flip(cls, p: float, u: float) -> "BinaryAnalysis":
        p = BinaryParams(p).p
        if not 0.0 <= u <= 0.5:
            raise ParameterError(f"flip probability must lie in [0, 1/2], got {u!r}")
        u_tilde = correct_report_prob(p, u)
        if u_tilde <= 0.5:
            raise NoCascadeError(
                "reports carry no information (correct-report probability 1/2); "
                "the walk has no drift and no cascade threshold exists"
            )
        rho = (1.0 - u_tilde) / u_tilde
        ratio = math.log((1.0 - p) / p) / math.log(rho)
        nearest = round(ratio)
        if abs(ratio - nearest) <= _SNAP * max(1.0, abs(ratio)):
            ratio = float(nearest)
        k = int(math.floor(ratio)) + 1
        # 1 / (rho^k + 1), in logs so huge k cannot overflow
        log_rk = k * math.log(rho)
        p_correct = 1.0 / (1.0 + math.exp(log_rk))
        return cls(p, u, u_tilde, rho, k, p_correct)


def analyze(params_or_p, budget: BudgetSpec | None = None) -> BinaryAnalysis:
    """Full analysis for ``BinaryParams`` or for ``(p, budget)``.

    Distributional budgets use the population flip probability.
    """
    p, u = _population_flip(params_or_p, budget)
    return BinaryAnalysis.from_flip(p, u)


def cascade_threshold(p, budget: BudgetSpec | None = None) -> int:
    return analyze(p, budget).k


def correct_cascade_prob(p, budget: BudgetSpec | None = None) -> float:
    return analyze(p, budget).p_correct_cascade


@dataclass(frozen=True)
class BreakpointTable:
    """Rows (k, v_k, eps_k): k is the threshold for eps in (eps_{k+1}, eps_k]."""

    p: float
    entries: tuple

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def eps(self, k: int) -> float:
        for kk, _, e in self.entries:
            if kk == k:
                return e
        raise KeyError(k)


def epsilon_breakpoints(p: float, k_max: int) -> BreakpointTable:
    """Flip probabilities v_k and budgets eps_k at which the threshold changes.

    Row k = 2 carries v_2 = 0 and eps_2 = inf.
    """
    p = BinaryParams(p).p
    k_max = int(k_max)
    if k_max < 3:
        raise ParameterError(f"k_max must be >= 3, got {k_max}")
    alpha = (1.0 - p) / p
    rows = [(2, 0.0, math.inf)]
    for k in range(3, k_max + 1):
        a_pow = alpha ** ((k - 2) / (k - 1))
        num = 1.0 - a_pow
        v = num / (num + alpha ** (-1.0 / (k - 1)) - alpha)
        rows.append((k, v, math.log((1.0 - v) / v)))
    return BreakpointTable(p, tuple(rows))


def gambler_ruin_oracle(u_tilde: float, k: int) -> float:
    """P(hit 2k before 0 | start at k) for a +-1 walk stepping up w.p. u_tilde.

    Solved as the linear system h_i = q h_{i+1} + (1-q) h_{i-1} on the
    2k-1 interior states, without the closed form.
    """
    q = float(u_tilde)
    k = int(k)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"u_tilde must lie in (0, 1), got {q!r}")
    if q == 0.5:
        raise NoCascadeError("driftless walk: no cascade signal")
    m = 2 * k - 1
    # banded form: row 0 super-diagonal, row 1 diagonal, row 2 sub-diagonal
    ab = np.zeros((3, m))
    ab[0, 1:] = -q
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - q)
    rhs = np.zeros(m)
    rhs[-1] = q
    h = linalg.solve_banded((1, 1), ab, rhs)
    return float(h[k - 1])


# --- simulation -----------------------------------------------------------


@dataclass(frozen=True)
class BinaryEnsemble:
    """Cascade outcomes of many replications.

    ``side`` is +1 / -1 for the herd direction or 0 when no cascade started
    within ``max_agents``; ``onset`` is the 1-based index of the first herding
    agent (0 when none).
    """

    side: np.ndarray
    onset: np.ndarray
    theta: WorldState
    analysis: BinaryAnalysis

    @property
    def correct_frequency(self) -> float:
        return float(np.mean(self.side == int(self.theta)))

    @property
    def standard_error(self) -> float:
        f = self.correct_frequency
        return math.sqrt(f * (1.0 - f) / self.side.size)


def _reports(params: BinaryParams, theta: int, block: np.ndarray):
    """Signals, epsilons and reports for a (..., 4) block of agent uniforms."""
    p = params.p
    s = np.where(block[..., streams.SIGNAL] < p, theta, -theta)
    eps = params.budget.draw(block[..., streams.BUDGET])
    with np.errstate(over="ignore"):
        u = 1.0 / (1.0 + np.exp(eps))
    flip = block[..., streams.FLIP] < u
    x = np.where(flip, -s, s)
    return s, eps, x


def binary_ensemble(
    params: BinaryParams,
    theta,
    replications: int,
    seed: int,
    max_agents: int = 100_000,
    chunk: int = 64,
) -> BinaryEnsemble:
    """Simulate only until absorption, for many replications at once."""
    theta = int(WorldState.coerce(theta))
    replications = int(replications)
    if replications < 1:
        raise ParameterError("replications must be >= 1")
    an = analyze(params)
    k = an.k
    side = np.zeros(replications, dtype=np.int64)
    onset = np.zeros(replications, dtype=np.int64)
    walk = np.zeros(replications, dtype=np.int64)
    active = np.arange(replications)
    start = 0
    while active.size and start < max_agents:
        count = min(chunk, max_agents - start)
        block = streams.agent_uniforms(seed, active, start, count)
        _, _, x = _reports(params, theta, block)
        path = walk[active, None] + np.cumsum(x, axis=1)
        hit = np.abs(path) >= k
        done = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        idx = active[done]
        side[idx] = np.sign(path[done, first[done]])
        # the agent after the k-th net report is the first herder
        onset[idx] = start + first[done] + 2
        walk[active] = path[:, -1]
        active = active[~done]
        start += count
    return BinaryEnsemble(side, onset, WorldState(theta), an)


def simulate_binary(
    params: BinaryParams,
    theta,
    n_agents: int,
    seed: int,
    replication: int = 0,
) -> tuple[Trajectory, RunSummary]:
    """One run of ``n_agents`` agents.

    Agents follow their own signal until the signed report count reaches
    +-k; from then on every agent takes and truthfully reports the herd
    action.  ``l`` is the public log-likelihood ratio computed with the
    population flip probability.
    """
    theta_s = WorldState.coerce(theta)
    th = int(theta_s)
    n_agents = int(n_agents)
    if n_agents < 1:
        raise ParameterError("n_agents must be >= 1")
    an = analyze(params)
    k = an.k
    step = math.log(an.u_tilde / (1.0 - an.u_tilde))

    block = streams.agent_uniforms(seed, [replication], 0, n_agents)[0]
    s, eps, x = _reports(params, th, block)
    a = s.copy()
    count = np.concatenate(([0], np.cumsum(x)))
    hit = np.flatnonzero(np.abs(count[1:]) >= k)
    cascade = onset = None
    if hit.size and hit[0] + 1 < n_agents:
        j = int(hit[0]) + 1  # zero-based index of the first herder
        herd = int(np.sign(count[j]))
        a[j:] = herd
        x[j:] = herd
        eps[j:] = np.nan  # herders report truthfully, no budget is spent
        count[j + 1 :] = count[j]
        cascade, onset = herd, j + 1
    l = count[:-1] * step

    mism = x != th
    correct = np.flatnonzero(~mism)
    tau = int(correct[0]) + 1 if correct.size else None
    traj = Trajectory(
        n=np.arange(1, n_agents + 1),
        eps_n=np.asarray(eps, dtype=float),
        s=s.astype(float),
        a=a.astype(np.int64),
        x=x.astype(np.int64),
        l=l.astype(float),
        theta=theta_s,
        seed=int(seed),
        replication=int(replication),
    )
    summary = RunSummary(
        tau=tau,
        W=int(mism.sum()),
        horizon=n_agents,
        theta=theta_s,
        # once herding starts nothing changes, so W is final
        W_censored=cascade is None,
        cascade=cascade,
        cascade_onset=onset,
    )
    return traj, summary
