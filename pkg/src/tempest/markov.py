"""Finite Markov chains: specification, stationary distributions, sampling.

Chains here are tiny (edge processes, typically 2-32 states), so everything
is dense.  A chain is either continuous-time (generator matrix ``Q`` with
zero row sums) or discrete-time (stochastic matrix ``P``).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .errors import NumericalFailure, ReducibleChain

_ROW_TOL = 1e-12
_RESIDUAL_TOL = 1e-10

CT = "ct"
DT = "dt"


@dataclass
class MarkovChainSpec:
    """A finite time-homogeneous Markov chain.

    ``matrix`` is the generator Q for ``time == "ct"`` (off-diagonal rates
    >= 0, rows sum to 0) or the transition matrix P for ``time == "dt"``
    (entries in [0, 1], rows sum to 1).  ``initial_state`` of None means
    "draw from the stationary distribution" wherever an initial state is
    needed.
    """

    states: tuple
    time: str
    matrix: np.ndarray
    initial_state: object = None

    def __post_init__(self):
        self.states = tuple(self.states)
        m = np.array(self.matrix, dtype=float)
        k = len(self.states)
        if m.shape != (k, k):
            raise ValueError(f"matrix shape {m.shape} does not match {k} states")
        if self.time == CT:
            off = m[~np.eye(k, dtype=bool)]
            if off.size and off.min() < -_ROW_TOL:
                raise ValueError("generator has a negative off-diagonal rate")
            if np.abs(m.sum(axis=1)).max() > _ROW_TOL * max(1.0, np.abs(m).max()):
                raise ValueError("generator rows must sum to 0")
        elif self.time == DT:
            if m.min() < -_ROW_TOL or m.max() > 1 + _ROW_TOL:
                raise ValueError("transition probabilities must lie in [0, 1]")
            if np.abs(m.sum(axis=1) - 1).max() > _ROW_TOL:
                raise ValueError("transition matrix rows must sum to 1")
        else:
            raise ValueError(f"time base must be 'ct' or 'dt', got {self.time!r}")
        if self.initial_state is not None and self.initial_state not in self.states:
            raise ValueError(f"initial state {self.initial_state!r} not in state set")
        m.setflags(write=False)
        self.matrix = m

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self.states.index(state)

    def _jump_support(self) -> np.ndarray:
        """Boolean matrix of possible one-step transitions (diagonal excluded)."""
        s = self.matrix > 0
        np.fill_diagonal(s, False)
        return s

    def is_irreducible(self) -> bool:
        if self.n_states == 1:
            return True
        adj = sp.csr_matrix(self._jump_support().astype(np.int8))
        ncomp, _ = csgraph.connected_components(adj, directed=True, connection="strong")
        return ncomp == 1

    def period(self) -> int:
        """Period of an irreducible DT chain (1 = aperiodic)."""
        if self.time != DT:
            raise ValueError("period is defined for discrete-time chains")
        if np.diag(self.matrix).max() > 0:
            return 1
        # gcd of (level[u] + 1 - level[v]) over edges u->v of a BFS tree.
        k = self.n_states
        support = self.matrix > 0
        level = np.full(k, -1)
        level[0] = 0
        queue = [0]
        g = 0
        while queue:
            u = queue.pop()
            for v in np.flatnonzero(support[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
                else:
                    g = gcd(g, level[u] + 1 - level[v])
        return abs(g) if g else 0

    def is_aperiodic(self) -> bool:
        if self.time == CT:
            return True
        return self.period() == 1


def stationary_distribution(chain: MarkovChainSpec) -> np.ndarray:
    """Unique stationary distribution of an irreducible chain.

    Dense LU solve of the balance equations with one equation replaced by
    the normalization row.  Raises ReducibleChain for chains whose positive
    transition graph is not strongly connected, NumericalFailure if the
    residual exceeds 1e-10.
    """
    if not chain.is_irreducible():
        raise ReducibleChain("chain state graph is not strongly connected")
    k = chain.n_states
    if k == 1:
        return np.ones(1)
    if chain.time == CT:
        a = chain.matrix.T.copy()          # pi Q = 0  <=>  Q^T pi = 0
    else:
        a = chain.matrix.T - np.eye(k)     # pi P = pi  <=>  (P^T - I) pi = 0
    a[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"stationary solve failed: {exc}") from exc
    scale = max(1.0, float(np.abs(chain.matrix).max()))
    if chain.time == CT:
        residual = float(np.abs(pi @ chain.matrix).max())
    else:
        residual = float(np.abs(pi @ chain.matrix - pi).max())
    if residual > _RESIDUAL_TOL * scale or pi.min() < -1e-12:
        raise NumericalFailure(
            f"stationary residual {residual:.2e} exceeds tolerance {_RESIDUAL_TOL:.0e}"
        )
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def sample_chain_path_ct(chain: MarkovChainSpec, horizon: float,
                         rng: np.random.Generator, init_idx: int):
    """Exact CT chain trajectory on [0, horizon].

    Returns (jump_times, state_indices); state_indices[i] holds on
    [jump_times[i], jump_times[i+1]), with jump_times[0] == 0.
    """
    q = chain.matrix
    k = chain.n_states
    exit_rate = -np.diag(q)
    # Per-state jump distribution (cumulative), empty rows never used.
    cum = []
    targets = []
    for s in range(k):
        row = q[s].copy()
        row[s] = 0.0
        idx = np.flatnonzero(row > 0)
        targets.append(idx)
        w = row[idx]
        cum.append(np.cumsum(w) / w.sum() if idx.size else None)
    times = [0.0]
    states = [init_idx]
    t, s = 0.0, init_idx
    while True:
        rate = exit_rate[s]
        if rate <= 0:
            break  # absorbing: stays forever
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        s = int(targets[s][np.searchsorted(cum[s], rng.random())])
        times.append(t)
        states.append(s)
    return np.asarray(times), np.asarray(states, dtype=np.intp)


def sample_chain_path_dt(chain: MarkovChainSpec, steps: int,
                         rng: np.random.Generator, init_idx: int) -> np.ndarray:
    """DT chain trajectory: state indices at k = 0..steps (length steps+1)."""
    p = chain.matrix
    cum = np.cumsum(p, axis=1)
    out = np.empty(steps + 1, dtype=np.intp)
    out[0] = init_idx
    s = init_idx
    u = rng.random(steps)
    for k in range(steps):
        s = int(np.searchsorted(cum[s], u[k], side="right"))
        if s >= p.shape[0]:  # guard against cum[-1] = 1 - eps round-off
            s = p.shape[0] - 1
        out[k + 1] = s
    return out
