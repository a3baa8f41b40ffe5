"""Per-run simulation records shared by the binary and Gaussian simulators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import WorldState

TRAJECTORY_COLUMNS = ("n", "eps_n", "s", "a", "x", "l")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Agent-by-agent record of one run.

    ``l[i]`` is the public log-likelihood ratio agent ``n[i]`` observed
    before acting, so ``l[0] == 0``.
    """

    n: np.ndarray
    eps_n: np.ndarray
    s: np.ndarray
    a: np.ndarray
    x: np.ndarray
    l: np.ndarray
    theta: WorldState
    seed: int
    replication: int = 0

    def __len__(self):
        return len(self.n)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        same_meta = (self.theta, self.seed, self.replication) == (
            other.theta,
            other.seed,
            other.replication,
        )
        return same_meta and all(
            np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True)
            for c in ("n", "eps_n", "s", "a", "x", "l")
        )

    @property
    def records(self):
        return list(
            zip(
                self.n.tolist(),
                self.eps_n.tolist(),
                self.s.tolist(),
                self.a.tolist(),
                self.x.tolist(),
                self.l.tolist(),
            )
        )


@dataclass(frozen=True)
class RunSummary:
    """Derived statistics of one run.

    ``tau`` is the first agent whose report matched theta and ``W`` the
    number of mismatched reports within the horizon.  A censored ``tau`` is
    ``None``: the horizon was hit first.  ``W`` is always the count seen so
    far; ``W_censored`` flags that later mistakes were not observed.
    """

    tau: int | None
    W: int
    horizon: int
    theta: WorldState
    W_censored: bool = True
    cascade: int | None = None
    cascade_onset: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def tau_censored(self) -> bool:
        return self.tau is None
