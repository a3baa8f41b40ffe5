"""Counter-based random streams keyed by (seed, replication, agent, draw).

Each replication owns a Philox key built from the master seed and the
replication index.  Agent ``n`` reads the single 4-lane Philox block at
counter ``n``, so draw ``d`` of agent ``n`` is a pure function of
``(seed, replication, n, d)`` and does not depend on chunking, on which
other replications run alongside, or on execution order.
"""

from __future__ import annotations

import numpy as np
from scipy import special

DRAWS_PER_AGENT = 4
# lane assignment within an agent's block
SIGNAL, FLIP, BUDGET = 0, 1, 2

_HALF_ULP = 2.0**-54


def _key(seed: int, rep: int) -> int:
    seed, rep = int(seed), int(rep)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    if not 0 <= rep < 2**64:
        raise ValueError(f"replication index must lie in [0, 2**64), got {rep}")
    return (seed << 64) | rep


def agent_uniforms(seed: int, reps, start: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) of shape (len(reps), count, DRAWS_PER_AGENT) for agents start..start+count-1."""
    reps = np.atleast_1d(np.asarray(reps, dtype=np.int64))
    out = np.empty((reps.size, count, DRAWS_PER_AGENT))
    for i, rep in enumerate(reps):
        gen = np.random.Generator(np.random.Philox(key=_key(seed, rep), counter=int(start)))
        out[i] = gen.random((count, DRAWS_PER_AGENT))
    return out


class AgentStreams:
    """Sequential reader over agents for a fixed set of replications.

    Equivalent to repeated ``agent_uniforms`` calls on consecutive agent
    ranges, without re-keying a generator per call.
    """

    def __init__(self, seed: int, reps, start: int = 0):
        self.reps = np.atleast_1d(np.asarray(reps, dtype=np.int64))
        self.position = int(start)
        self._gens = [
            np.random.Generator(np.random.Philox(key=_key(seed, r), counter=self.position))
            for r in self.reps
        ]

    def next(self, count: int) -> np.ndarray:
        out = np.empty((self.reps.size, count, DRAWS_PER_AGENT))
        for i, gen in enumerate(self._gens):
            out[i] = gen.random((count, DRAWS_PER_AGENT))
        self.position += count
        return out


def open_interval(u):
    """Shift [0, 1) uniforms into the open interval (0, 1)."""
    return u + _HALF_ULP


def normal_from_uniform(u):
    return special.ndtri(open_interval(u))
