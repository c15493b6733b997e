"""Aggregated-Markovian dynamic graph models.

An edge process is a finite Markov chain mapped through a {0,1} output map;
a dynamic graph is a sparse collection of such processes, either undirected
(AMEI: one process per unordered pair, mirrored) or directed (AMAI: one
process per ordered pair).  Edge key ``(i, j)`` controls adjacency entry
``A[i, j]``; under the directed convention that entry is the arc from node
j pointing towards node i, so it feeds the infection of node i.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import InvalidRates, ReducibleChain
from .markov import CT, DT, MarkovChainSpec, sample_chain_path_ct, sample_chain_path_dt, stationary_distribution

AMEI = "amei"
AMAI = "amai"


@dataclass
class EdgeProcessModel:
    """One aggregated Markov process sigma = f(theta) driving a (di)edge.

    ``output`` maps each chain state (by index) to 0/1.  Constant output
    maps are only allowed for 1-state chains; those are the statically-on /
    statically-off edges.  Multi-state chains must have surjective output.
    """

    chain: MarkovChainSpec
    output: np.ndarray
    #: serialization hint set by the builders ("markov2" | "coxian" | "static")
    builder: str = "generic"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        out = np.array(self.output, dtype=np.int8)
        if out.shape != (self.chain.n_states,):
            raise ValueError("output map length must equal the number of chain states")
        if not np.isin(out, (0, 1)).all():
            raise ValueError("output map must take values in {0, 1}")
        if self.chain.n_states > 1 and (out.min() == out.max()):
            raise ValueError("output map must be surjective onto {0, 1} "
                             "(declare static edges with a 1-state chain)")
        out.setflags(write=False)
        self.output = out

    @property
    def time(self) -> str:
        return self.chain.time

    @property
    def is_static(self) -> bool:
        return self.chain.n_states == 1

    @property
    def static_value(self):
        return int(self.output[0]) if self.is_static else None

    def initial_index(self, rng: np.random.Generator) -> int:
        """Initial chain-state index: fixed if declared, else stationary draw."""
        if self.chain.initial_state is not None:
            return self.chain.index(self.chain.initial_state)
        pi = stationary_distribution(self.chain)
        return int(rng.choice(len(pi), p=pi))


def build_static_edge(on: bool, time: str = CT) -> EdgeProcessModel:
    matrix = np.zeros((1, 1)) if time == CT else np.ones((1, 1))
    chain = MarkovChainSpec(("s0",), time, matrix, initial_state="s0")
    return EdgeProcessModel(chain, np.array([1 if on else 0]),
                            builder="static", params={"on": bool(on)})


def build_edge_markovian(q: float, r: float, time: str = CT) -> EdgeProcessModel:
    """2-state on/off edge: off->on at rate (probability) q, on->off at r."""
    if q <= 0 or r <= 0:
        raise InvalidRates(f"need q > 0 and r > 0, got q={q}, r={r}")
    if time == CT:
        m = np.array([[-q, q], [r, -r]], dtype=float)
    else:
        if q > 1 or r > 1:
            raise InvalidRates("discrete-time transition probabilities must be <= 1")
        m = np.array([[1 - q, q], [r, 1 - r]], dtype=float)
    chain = MarkovChainSpec(("off", "on"), time, m)
    return EdgeProcessModel(chain, np.array([0, 1]),
                            builder="markov2", params={"q": float(q), "r": float(r)})


def build_coxian_edge(up_rates, exit_rates, down_rates, return_rates) -> EdgeProcessModel:
    """CT edge whose on/off durations are Coxian distributed.

    On-states c_1..c_n: c_i -> c_{i+1} at up_rates[i], c_i -> d_1 at
    exit_rates[i].  Off-states d_1..d_m: d_j -> d_{j+1} at down_rates[j],
    d_j -> c_1 at return_rates[j].
    """
    p = np.array(up_rates, dtype=float)
    q = np.array(exit_rates, dtype=float)
    r = np.array(down_rates, dtype=float)
    s = np.array(return_rates, dtype=float)
    n, m = q.size, s.size
    if n < 1 or m < 1 or p.size != n - 1 or r.size != m - 1:
        raise InvalidRates("need len(exit_rates)=n>=1, len(up_rates)=n-1, "
                           "len(return_rates)=m>=1, len(down_rates)=m-1")
    for arr, name in ((p, "up"), (q, "exit"), (r, "down"), (s, "return")):
        if arr.size and arr.min() < 0:
            raise InvalidRates(f"{name} rates must be nonnegative")
    exit_on = q + np.concatenate([p, [0.0]])
    exit_off = s + np.concatenate([r, [0.0]])
    if exit_on.min() <= 0 or exit_off.min() <= 0:
        raise InvalidRates("a chain state would be absorbing (zero total exit rate)")

    k = n + m
    gen = np.zeros((k, k))
    for i in range(n - 1):
        gen[i, i + 1] = p[i]
    gen[:n, n] = q                      # every c_i exits to d_1
    for j in range(m - 1):
        gen[n + j, n + j + 1] = r[j]
    gen[n:, 0] = s                      # every d_j returns to c_1
    np.fill_diagonal(gen, -gen.sum(axis=1))
    states = tuple(f"c{i+1}" for i in range(n)) + tuple(f"d{j+1}" for j in range(m))
    output = np.array([1] * n + [0] * m)
    chain = MarkovChainSpec(states, CT, gen)
    return EdgeProcessModel(chain, output, builder="coxian",
                            params={"up_rates": p.tolist(), "exit_rates": q.tolist(),
                                    "down_rates": r.tolist(), "return_rates": s.tolist()})


@dataclass
class DynamicGraphModel:
    """n nodes plus a sparse map of node pairs to independent edge processes."""

    n: int
    kind: str
    edges: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (AMEI, AMAI):
            raise ValueError(f"kind must be '{AMEI}' or '{AMAI}'")
        times = set()
        for (i, j), edge in self.edges.items():
            if i == j:
                raise ValueError("self-loops are not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
            if self.kind == AMEI and not i < j:
                raise ValueError("AMEI edges must be keyed with i < j")
            times.add(edge.time)
        if len(times) > 1:
            raise ValueError("all edge processes must share one time base")
        self._time = times.pop() if times else CT

    @property
    def time(self) -> str:
        return self._time

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_keys(self):
        return sorted(self.edges)


@dataclass
class MeanMatrix:
    """Stationary edge-presence probabilities (the aggregated static network)."""

    a_bar: np.ndarray
    kind: str
    time: str = CT

    def __post_init__(self):
        a = np.array(self.a_bar, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("mean matrix must be square")
        if np.diag(a).any():
            raise ValueError("mean matrix must have zero diagonal")
        if a.min() < 0 or a.max() > 1:
            raise ValueError("mean matrix entries must lie in [0, 1]")
        if self.kind == AMEI and not np.array_equal(a, a.T):
            raise ValueError("AMEI mean matrix must be symmetric")
        a.setflags(write=False)
        self.a_bar = a
        self._eta_abar = None
        self._eta_support = None

    @property
    def n(self) -> int:
        return self.a_bar.shape[0]

    def support(self) -> np.ndarray:
        return support_matrix(self)

    # Spectral abscissas of a_bar and sgn(a_bar) are reused heavily by
    # homogeneous-rate certificates; cache them (matrices are read-only).
    def eta_abar(self) -> float:
        if self._eta_abar is None:
            from .spectral import spectral_abscissa
            self._eta_abar = spectral_abscissa(self.a_bar)
        return self._eta_abar

    def eta_support(self) -> float:
        if self._eta_support is None:
            from .spectral import spectral_abscissa
            self._eta_support = spectral_abscissa(self.support())
        return self._eta_support


def edge_on_probability(edge: EdgeProcessModel) -> float:
    """Stationary probability that the edge is present: pi(f^{-1}({1}))."""
    if edge.is_static:
        return float(edge.output[0])
    pi = stationary_distribution(edge.chain)
    return float(pi[edge.output == 1].sum())


def mean_matrix(graph: DynamicGraphModel) -> MeanMatrix:
    a = np.zeros((graph.n, graph.n))
    for (i, j), edge in graph.edges.items():
        try:
            v = edge_on_probability(edge)
        except ReducibleChain as exc:
            raise ReducibleChain(f"edge ({i},{j}): {exc}") from exc
        a[i, j] = v
        if graph.kind == AMEI:
            a[j, i] = v
    return MeanMatrix(a, graph.kind, graph.time)


def support_matrix(mean: MeanMatrix) -> np.ndarray:
    """Entry-wise sign of the mean matrix (the {0,1} support graph)."""
    return (mean.a_bar > 0).astype(float)


@dataclass
class EdgePath:
    """Piecewise-constant {0,1} trajectory of a single edge process.

    CT: ``values[k]`` holds on [times[k], times[k+1]), with times[0] == 0 and
    an implicit final breakpoint at ``horizon``.  DT: ``times`` is 0..steps
    and ``values[k]`` is the edge state at step k.
    """

    times: np.ndarray
    values: np.ndarray
    horizon: float
    time_base: str

    def fraction_on(self) -> float:
        if self.time_base == DT:
            return float(self.values.mean())
        ends = np.append(self.times[1:], self.horizon)
        return float(((ends - self.times) * self.values).sum() / self.horizon)


def sample_edge_path(edge: EdgeProcessModel, horizon, seed_or_rng,
                     init_index: int | None = None) -> EdgePath:
    """Exact trajectory of one edge over [0, horizon] (CT) or `horizon` steps (DT)."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = rngmod.as_generator(seed_or_rng)
    if init_index is None:
        init_index = edge.initial_index(rng)
    if edge.time == CT:
        times, states = sample_chain_path_ct(edge.chain, float(horizon), rng, init_index)
        sigma = edge.output[states]
        keep = np.concatenate([[True], sigma[1:] != sigma[:-1]])
        return EdgePath(times[keep], sigma[keep], float(horizon), CT)
    steps = int(horizon)
    states = sample_chain_path_dt(edge.chain, steps, rng, init_index)
    return EdgePath(np.arange(steps + 1), edge.output[states], steps, DT)


@dataclass
class GraphPath:
    """One sampled adjacency trajectory of a whole dynamic graph.

    CT: ``adjacency[k]`` holds on [times[k], times[k+1]); ``times`` has one
    more entry than ``adjacency`` and ends at the horizon.  DT:
    ``adjacency[k]`` is A(k) for k = 0..steps-1.  Dense storage: intended
    for the small instances used in oracle and soundness work.
    """

    times: np.ndarray
    adjacency: np.ndarray
    time_base: str


def sample_graph_path(graph: DynamicGraphModel, *, horizon=None, steps=None,
                      seed: int = 0) -> GraphPath:
    """Sample all edge processes independently and merge into one path.

    Each edge draws from the stream (seed, TAG_EDGE, i, j), so adding or
    removing edges leaves all other edges' trajectories untouched.
    """
    n = graph.n
    if (horizon is None) == (steps is None):
        raise ValueError("pass exactly one of horizon= (CT) or steps= (DT)")
    want = CT if horizon is not None else DT
    if graph.m and graph.time != want:
        raise ValueError(f"graph is {graph.time}, but the requested path is {want}")
    if want == CT:
        paths = {}
        cuts = {0.0, float(horizon)}
        for (i, j) in graph.edge_keys():
            p = sample_edge_path(graph.edges[(i, j)], horizon,
                                 rngmod.generator(seed, rngmod.TAG_EDGE, i, j))
            paths[(i, j)] = p
            cuts.update(p.times.tolist())
        times = np.array(sorted(t for t in cuts if t < horizon) + [float(horizon)])
        k = len(times) - 1
        adj = np.zeros((k, n, n))
        for (i, j), p in paths.items():
            # value in force on [times[s], times[s+1]) is the last switch <= times[s]
            idx = np.searchsorted(p.times, times[:-1], side="right") - 1
            vals = p.values[idx]
            adj[:, i, j] = vals
            if graph.kind == AMEI:
                adj[:, j, i] = vals
        return GraphPath(times, adj, CT)

    steps = int(steps)
    adj = np.zeros((steps, n, n))
    for (i, j) in graph.edge_keys():
        p = sample_edge_path(graph.edges[(i, j)], steps,
                             rngmod.generator(seed, rngmod.TAG_EDGE, i, j))
        adj[:, i, j] = p.values[:steps]
        if graph.kind == AMEI:
            adj[:, j, i] = p.values[:steps]
    return GraphPath(np.arange(steps + 1), adj, DT)


# ---------------------------------------------------------------------------
# Named generator presets
# ---------------------------------------------------------------------------

def graph_complete_edge_markovian(n: int, q: float, r: float, time: str = CT) -> DynamicGraphModel:
    """Complete edge-Markovian graph: every pair shares activation rate q,
    de-activation rate r."""
    edges = {(i, j): build_edge_markovian(q, r, time)
             for i in range(n) for j in range(i + 1, n)}
    return DynamicGraphModel(n, AMEI, edges, metadata={"preset": "complete_edge_markovian"})


def graph_small_world(n: int, r: float, rate_scale: float = 1.0) -> DynamicGraphModel:
    """Dynamic small-world network: a static directed ring plus dynamic arcs.

    Arcs (i, i+1 mod n) are statically on; every other ordered pair carries
    a 2-state CT process with stationary on-probability r.  The mean matrix
    then has 1 on the ring arcs and r on all remaining off-diagonal entries,
    with spectral abscissa 1 + r(n-2).
    """
    if not 0 < r < 1:
        raise InvalidRates("stationary probability r must lie in (0, 1)")
    ring = {(i, (i + 1) % n) for i in range(n)}
    edges = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (i, j) in ring:
                edges[(i, j)] = build_static_edge(True)
            else:
                edges[(i, j)] = build_edge_markovian(r * rate_scale, (1 - r) * rate_scale)
    return DynamicGraphModel(n, AMAI, edges, metadata={"preset": "small_world", "r": r})


def graph_er_iv(n: int, er_prob: float, seed: int,
                gauss_mode: str = "variance") -> DynamicGraphModel:
    """Discrete-time ER experiment graph: truncated-Gaussian switch rates.

    Undirected ER skeleton with edge probability ``er_prob``; each kept pair
    carries a DT 2-state chain with de-activation probability r drawn from a
    Gaussian with mean 1/2 and dispersion 1/8, clamped to [0, 1], and
    activation probability q = 1 - r.  ``gauss_mode`` selects whether 1/8 is
    the variance (default) or the standard deviation.

    Pairs whose r clamps to 0 become statically-on edges; pairs clamping to
    r = 1 can never activate (q = 0) and are recorded as dead pairs instead
    of edges.  ``metadata`` keeps the ER skeleton and the dead pairs.
    """
    if n < 2 or not 0 <= er_prob <= 1:
        raise ValueError("need n >= 2 and er_prob in [0, 1]")
    if gauss_mode == "variance":
        sigma = float(np.sqrt(1.0 / 8.0))
    elif gauss_mode == "std":
        sigma = 1.0 / 8.0
    else:
        raise ValueError("gauss_mode must be 'variance' or 'std'")
    rng = rngmod.generator(seed, rngmod.TAG_INSTANCE)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < er_prob
    r_all = np.clip(rng.normal(0.5, sigma, size=iu.size), 0.0, 1.0)
    edges = {}
    er_pairs = []
    dead_pairs = []
    for i, j, kept, r in zip(iu, ju, keep, r_all):
        if not kept:
            continue
        i, j = int(i), int(j)
        er_pairs.append((i, j))
        if r >= 1.0:
            dead_pairs.append((i, j))
        elif r <= 0.0:
            edges[(i, j)] = build_static_edge(True, DT)
        else:
            edges[(i, j)] = build_edge_markovian(1.0 - r, r, DT)
    meta = {"preset": "iv", "er_pairs": er_pairs, "dead_pairs": dead_pairs,
            "er_prob": er_prob, "gauss_mode": gauss_mode, "seed": int(seed)}
    return DynamicGraphModel(n, AMEI, edges, metadata=meta)


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def _edge_to_json(edge: EdgeProcessModel) -> dict:
    if edge.builder not in ("markov2", "coxian", "static"):
        raise ValueError("only markov2/coxian/static edges are JSON-serializable")
    return {"type": edge.builder, "params": dict(edge.params), "time": edge.time}


def _edge_from_json(model: dict) -> EdgeProcessModel:
    kind, params, time = model["type"], model.get("params", {}), model.get("time", CT)
    if kind == "markov2":
        return build_edge_markovian(params["q"], params["r"], time)
    if kind == "coxian":
        if time != CT:
            raise ValueError("coxian edges are continuous-time")
        return build_coxian_edge(params["up_rates"], params["exit_rates"],
                                 params["down_rates"], params["return_rates"])
    if kind == "static":
        return build_static_edge(params["on"], time)
    raise ValueError(f"unknown edge model type {kind!r}")


def graph_to_json(graph: DynamicGraphModel) -> dict:
    return {
        "n": graph.n,
        "kind": graph.kind,
        "edges": [{"i": i, "j": j, "model": _edge_to_json(graph.edges[(i, j)])}
                  for (i, j) in graph.edge_keys()],
    }


def graph_from_json(doc) -> DynamicGraphModel:
    if isinstance(doc, str):
        doc = json.loads(doc)
    edges = {(int(e["i"]), int(e["j"])): _edge_from_json(e["model"]) for e in doc["edges"]}
    return DynamicGraphModel(int(doc["n"]), doc["kind"], edges)
