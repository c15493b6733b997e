"""Exact stochastic simulation and linear upper-bound propagation.

Continuous time: event-driven joint simulation of all edge chains and node
states with competing exponential clocks (exact by memorylessness).
Discrete time: synchronous chain with per-contact infection probabilities
and the re-infection protocol used for empirical thresholds.  The linear
systems dp/dt = (B A(t) - D) p and p(k+1) = (B A(k) + I - D) p(k) are
propagated along sampled adjacency paths for decay-rate estimation.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import InsufficientData, ParamRange, ToleranceFailure
from .graphs import AMEI, DynamicGraphModel, GraphPath, sample_graph_path
from .markov import CT, DT
from .thresholds import EpidemicParams


def _rates(params, n: int):
    """Accept EpidemicParams or a (beta, delta) pair; simulation allows zeros."""
    if isinstance(params, EpidemicParams):
        beta, delta = params.beta, params.delta
    else:
        beta, delta = params
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,)).copy()
        delta = np.broadcast_to(np.asarray(delta, dtype=float), (n,)).copy()
    if beta.shape != (n,) or delta.shape != (n,):
        raise ValueError("rate vectors must have one entry per node")
    if beta.min() < 0 or delta.min() < 0:
        raise ValueError("rates must be nonnegative")
    return beta, delta


def _init_mask(init_infected, n: int) -> np.ndarray:
    if isinstance(init_infected, str) and init_infected == "all":
        return np.ones(n, dtype=bool)
    mask = np.zeros(n, dtype=bool)
    ids = list(init_infected)
    if not ids:
        raise ValueError("init_infected must be nonempty")
    mask[np.asarray(ids, dtype=int)] = True
    return mask


@dataclass
class SimulationTrace:
    """Time-stamped infected counts from one exact stochastic run."""

    times: np.ndarray
    infected_counts: np.ndarray
    seed: int
    time_base: str
    reinfections: int = 0
    states: np.ndarray | None = None

    @property
    def final_count(self) -> int:
        return int(self.infected_counts[-1])

    @property
    def extinct(self) -> bool:
        return self.final_count == 0


# ---------------------------------------------------------------------------
# Continuous-time exact simulation (Gillespie over the joint process)
# ---------------------------------------------------------------------------

def simulate_ct_exact(graph: DynamicGraphModel, params, horizon: float,
                      init_infected="all", seed: int = 0,
                      record_states: bool = False) -> SimulationTrace:
    """Event-driven simulation of the joint (edges + epidemic) Markov process.

    Every enabled transition carries an exponential clock: chain jumps at
    the current state's exit rates, recovery at delta_i for infected i,
    infection at beta_i times the number of currently-connected infected
    in-neighbors for susceptible i.  Clocks are refreshed after every event.
    Stops early at extinction (the all-susceptible state is absorbing for
    the epidemic).
    """
    if graph.m and graph.time != CT:
        raise ValueError("simulate_ct_exact needs a continuous-time graph")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n = graph.n
    beta, delta = _rates(params, n)
    rng = rngmod.generator(seed)

    keys = graph.edge_keys()
    chains = [graph.edges[k].chain for k in keys]
    outputs = [graph.edges[k].output for k in keys]
    exit_rates = [-np.diag(c.matrix) for c in chains]
    jump_targets, jump_cums = [], []
    for c in chains:
        tg, cm = [], []
        for s in range(c.n_states):
            row = c.matrix[s].copy()
            row[s] = 0.0
            idx = np.flatnonzero(row > 0)
            tg.append(idx)
            cm.append(np.cumsum(row[idx]) / row[idx].sum() if idx.size else None)
        jump_targets.append(tg)
        jump_cums.append(cm)

    state_idx = np.array([graph.edges[k].initial_index(rng) for k in keys], dtype=np.intp)
    adj = np.zeros((n, n))
    for e, (i, j) in enumerate(keys):
        val = float(outputs[e][state_idx[e]])
        adj[i, j] = val
        if graph.kind == AMEI:
            adj[j, i] = val

    x = _init_mask(init_infected, n)
    t = 0.0
    times = [0.0]
    counts = [int(x.sum())]
    states_log = [x.copy()] if record_states else None

    while True:
        edge_rates = np.array([exit_rates[e][state_idx[e]] for e in range(len(keys))]) \
            if keys else np.zeros(0)
        rec_rates = delta * x
        inf_rates = beta * (adj @ x) * (~x)
        r_edge, r_rec, r_inf = edge_rates.sum(), rec_rates.sum(), inf_rates.sum()
        total = r_edge + r_rec + r_inf
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        u = rng.random() * total
        if u < r_edge:
            e = int(np.searchsorted(np.cumsum(edge_rates), u))
            s = state_idx[e]
            nxt = int(jump_targets[e][s][np.searchsorted(jump_cums[e][s], rng.random())])
            state_idx[e] = nxt
            val = float(outputs[e][nxt])
            i, j = keys[e]
            adj[i, j] = val
            if graph.kind == AMEI:
                adj[j, i] = val
            continue  # infected count unchanged
        if u < r_edge + r_rec:
            i = int(np.searchsorted(np.cumsum(rec_rates), u - r_edge))
            x[i] = False
        else:
            i = int(np.searchsorted(np.cumsum(inf_rates), u - r_edge - r_rec))
            x[i] = True
        times.append(t)
        counts.append(int(x.sum()))
        if record_states:
            states_log.append(x.copy())
        if counts[-1] == 0:
            break  # epidemic extinct; edge dynamics no longer matter

    return SimulationTrace(np.asarray(times), np.asarray(counts, dtype=np.int64),
                           int(seed), CT, 0,
                           np.asarray(states_log) if record_states else None)


# ---------------------------------------------------------------------------
# Discrete-time exact simulation
# ---------------------------------------------------------------------------

def _two_state_dt_arrays(graph: DynamicGraphModel):
    """Edge arrays for the vectorized DT runner, or None if not applicable."""
    if graph.time != DT:
        return None
    ei, ej, q, r, si, sj = [], [], [], [], [], []
    for (i, j) in graph.edge_keys():
        edge = graph.edges[(i, j)]
        if edge.is_static:
            if edge.static_value:
                si.append(i)
                sj.append(j)
            continue
        if edge.chain.n_states != 2:
            return None
        on = int(np.flatnonzero(edge.output == 1)[0])
        off = 1 - on
        ei.append(i)
        ej.append(j)
        q.append(edge.chain.matrix[off, on])
        r.append(edge.chain.matrix[on, off])
    return {
        "n": graph.n,
        "undirected": graph.kind == AMEI,
        "ei": np.asarray(ei, dtype=np.intp), "ej": np.asarray(ej, dtype=np.intp),
        "q": np.asarray(q, dtype=float), "r": np.asarray(r, dtype=float),
        "si": np.asarray(si, dtype=np.intp), "sj": np.asarray(sj, dtype=np.intp),
    }


def simulate_dt_exact(graph: DynamicGraphModel, params, steps: int,
                      init_infected="all", reinfect: bool = False, seed: int = 0,
                      edge_path: GraphPath | None = None,
                      record_states: bool = False) -> SimulationTrace:
    """Synchronous discrete-time chain over a sampled dynamic graph.

    Per step k: adjacency A(k) is the current edge configuration; each
    infected node recovers with probability delta_i; each susceptible node i
    becomes infected with probability 1 - prod_j (1 - beta_i A_ij(k) X_j(k));
    then the edge chains advance one step.  With ``reinfect``, a uniformly
    random node is re-seeded whenever the update leaves everyone
    susceptible.  Passing ``edge_path`` runs the epidemic on that fixed
    adjacency trajectory instead of sampling edges.
    """
    if graph.m and graph.time != DT:
        raise ValueError("simulate_dt_exact needs a discrete-time graph")
    n = graph.n
    beta, delta = _rates(params, n)
    if beta.max() > 1 or delta.max() > 1:
        raise ParamRange("discrete-time probabilities must lie in [0, 1]")
    x0 = _init_mask(init_infected, n)
    rng = rngmod.generator(seed)

    if edge_path is None:
        arr = _two_state_dt_arrays(graph)
        if arr is None:
            edge_path = sample_graph_path(graph, steps=steps, seed=seed)
        else:
            x, counts, reinf, states_log = _dt_run_fast(
                arr, beta, delta, steps, x0, reinfect, rng, record_states)
            return SimulationTrace(np.arange(steps + 1), counts, int(seed), DT,
                                   reinf, np.asarray(states_log) if record_states else None)
    if edge_path.adjacency.shape[0] < steps:
        raise ValueError("edge path shorter than the requested step count")

    x = x0.copy()
    with np.errstate(divide="ignore"):
        log1m_beta = np.log1p(-beta)
    counts = np.empty(steps + 1, dtype=np.int64)
    counts[0] = x.sum()
    states_log = [x.copy()] if record_states else None
    reinfections = 0
    for k in range(steps):
        c = edge_path.adjacency[k] @ x
        with np.errstate(invalid="ignore"):
            p_inf = np.where(c > 0, -np.expm1(c * log1m_beta), 0.0)
        new_inf = (~x) & (rng.random(n) < p_inf)
        recov = x & (rng.random(n) < delta)
        x = (x & ~recov) | new_inf
        if reinfect and not x.any():
            x[int(rng.integers(n))] = True
            reinfections += 1
        counts[k + 1] = x.sum()
        if record_states:
            states_log.append(x.copy())
    return SimulationTrace(np.arange(steps + 1), counts, int(seed), DT,
                           reinfections, np.asarray(states_log) if record_states else None)


def _dt_run_fast(arr: dict, beta, delta, steps, x0, reinfect, rng, record_states):
    """Vectorized synchronous run over 2-state/static edge arrays."""
    n = arr["n"]
    ei, ej, q, r = arr["ei"], arr["ej"], arr["q"], arr["r"]
    si, sj = arr["si"], arr["sj"]
    undirected = arr["undirected"]
    m = ei.size
    s_on = rng.random(m) < (q / (q + r)) if m else np.zeros(0, dtype=bool)
    x = x0.copy()
    with np.errstate(divide="ignore"):
        log1m_beta = np.log1p(-beta)
    counts = np.empty(steps + 1, dtype=np.int64)
    counts[0] = x.sum()
    states_log = [x.copy()] if record_states else None
    reinfections = 0
    one_minus_r = 1.0 - r
    for k in range(steps):
        c = np.zeros(n)
        if m:
            act = s_on & x[ej]
            c += np.bincount(ei[act], minlength=n)
            if undirected:
                act2 = s_on & x[ei]
                c += np.bincount(ej[act2], minlength=n)
        if si.size:
            c += np.bincount(si[x[sj]], minlength=n)
            if undirected:
                c += np.bincount(sj[x[si]], minlength=n)
        with np.errstate(invalid="ignore"):
            p_inf = np.where(c > 0, -np.expm1(c * log1m_beta), 0.0)
        new_inf = (~x) & (rng.random(n) < p_inf)
        recov = x & (rng.random(n) < delta)
        x = (x & ~recov) | new_inf
        if reinfect and not x.any():
            x[int(rng.integers(n))] = True
            reinfections += 1
        if m:
            s_on = rng.random(m) < np.where(s_on, one_minus_r, q)
        counts[k + 1] = x.sum()
        if record_states:
            states_log.append(x.copy())
    return x, counts, reinfections, states_log


# ---------------------------------------------------------------------------
# Linear upper-bound systems along sampled paths
# ---------------------------------------------------------------------------

@dataclass
class LinearTrajectory:
    """Renormalized linear-system trajectory with accumulated log norms."""

    times: np.ndarray
    log_norms: np.ndarray
    unit_p: np.ndarray

    def values(self) -> np.ndarray:
        return self.unit_p * np.exp(self.log_norms)[:, None]


def _eigen_stepper(m: np.ndarray):
    """Eigendecomposition of a segment matrix, or None when it is defective.

    Directed adjacency patterns often produce non-diagonalizable system
    matrices (e.g. strictly triangular coupling); those are detected by a
    reconstruction-error check and stepped with the dense exponential.
    """
    w, vec = np.linalg.eig(m)
    try:
        vinv = np.linalg.inv(vec)
    except np.linalg.LinAlgError:
        return None
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs((vec * w) @ vinv - m).max() > 1e-9 * scale:
        return None
    return w, vec, vinv


class _DormandPrince:
    """Adaptive RK45 (Dormand-Prince) stepper for dp/dt = M p on one interval."""

    A = [
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    ]
    B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
    B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])

    def __init__(self, m: np.ndarray, rtol: float, atol: float):
        self.m = m
        self.rtol = rtol
        self.atol = atol

    def integrate(self, p: np.ndarray, span: float) -> np.ndarray:
        if span == 0.0:
            return p
        scale = max(1.0, float(np.abs(self.m).max()))
        h = min(span, 0.1 / scale)
        t = 0.0
        k = np.empty((7, p.size))
        while t < span:
            h = min(h, span - t)
            k[0] = self.m @ p
            for i in range(1, 7):
                acc = p + h * sum(a * k[j] for j, a in enumerate(self.A[i]))
                k[i] = self.m @ acc
            p5 = p + h * (self.B5 @ k)
            p4 = p + h * (self.B4 @ k)
            err = np.abs(p5 - p4).max()
            tol = self.atol + self.rtol * max(1.0, float(np.abs(p5).max()))
            if err <= tol:
                t += h
                p = p5
                h *= min(5.0, max(0.2, 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0))
            else:
                h *= max(0.2, 0.9 * (tol / err) ** 0.2)
            if h < 1e-14 * max(1.0, span):
                raise ToleranceFailure("RK45 step size underflow")
        return p


def propagate_linear(path: GraphPath, params, p0=None, mode: str | None = None,
                     backend: str = "rk45", rtol: float = 1e-10) -> LinearTrajectory:
    """Propagate the linear upper-bound system along a sampled adjacency path.

    CT: dp/dt = (B A(t) - D) p integrated segment-by-segment, restarting the
    adaptive RK45 stepper at every switch (default backend).  The "eigen"
    backend steps each segment exactly through a cached eigendecomposition
    of its (constant) system matrix; both backends agree to solver accuracy.
    DT: the exact recursion p(k+1) = (B A(k) + I - D) p(k).

    The state is renormalized at every breakpoint and the accumulated log
    norm recorded, so arbitrarily long decays never underflow.
    """
    n = path.adjacency.shape[1]
    beta, delta = _rates(params, n)
    mode = mode or path.time_base
    if mode != path.time_base:
        raise ValueError("mode does not match the path's time base")
    p = np.ones(n) if p0 is None else np.asarray(p0, dtype=float).copy()
    if p.min() < 0:
        raise ValueError("p0 must be nonnegative")
    norm = float(np.linalg.norm(p))
    if norm == 0:
        raise ValueError("p0 must be nonzero")
    p /= norm
    log_norm = np.log(norm)
    times = path.times
    out_p = np.empty((len(times), n))
    out_log = np.empty(len(times))
    out_p[0], out_log[0] = p, log_norm

    if mode == DT:
        for k in range(path.adjacency.shape[0]):
            m = beta[:, None] * path.adjacency[k] + np.diag(1.0 - delta)
            p = m @ p
            norm = float(np.linalg.norm(p))
            if norm == 0:
                log_norm = -np.inf
            else:
                log_norm += np.log(norm)
                p = p / norm
            out_p[k + 1], out_log[k + 1] = p, log_norm
        return LinearTrajectory(times.astype(float), out_log, out_p)

    cache: dict = {}
    d = np.diag(delta)
    for k in range(path.adjacency.shape[0]):
        span = float(times[k + 1] - times[k])
        a = path.adjacency[k]
        m = beta[:, None] * a - d
        if backend == "eigen":
            key = a.tobytes()
            if key not in cache:
                cache[key] = _eigen_stepper(m)
            step = cache[key]
            if step is None:  # defective matrix: exact dense exponential instead
                import scipy.linalg
                p = scipy.linalg.expm(m * span) @ p
            else:
                w, vec, vinv = step
                p = (vec @ (np.exp(w * span) * (vinv @ p))).real
        elif backend == "rk45":
            p = _DormandPrince(m, rtol, rtol * 1e-3).integrate(p, span)
        else:
            raise ValueError("backend must be 'rk45' or 'eigen'")
        norm = float(np.linalg.norm(p))
        if norm == 0:
            log_norm = -np.inf
        else:
            log_norm += np.log(norm)
            p = p / norm
        out_p[k + 1], out_log[k + 1] = p, log_norm
    return LinearTrajectory(times.astype(float), out_log, out_p)


@dataclass
class DecayEstimate:
    rate: float
    stderr: float
    rates: np.ndarray

    @property
    def ci95(self):
        return (self.rate - 1.96 * self.stderr, self.rate + 1.96 * self.stderr)


def decay_rate_estimate(trajectories, burn_in: float = 0.2) -> DecayEstimate:
    """Per-trajectory least-squares slope of log||p|| after burn-in.

    Needs at least 20 independent trajectories; returns the mean decay rate
    (negated slope) with its standard error.
    """
    if len(trajectories) < 20:
        raise InsufficientData(f"need >= 20 trajectories, got {len(trajectories)}")
    rates = []
    for traj in trajectories:
        t, y = traj.times, traj.log_norms
        cutoff = t[0] + burn_in * (t[-1] - t[0])
        mask = (t >= cutoff) & np.isfinite(y)
        if mask.sum() < 2:
            # sparse-switch trajectory: fall back to the final stretch
            finite = np.flatnonzero(np.isfinite(y))
            if finite.size < 2:
                raise InsufficientData("trajectory too short after burn-in")
            mask = np.zeros_like(mask)
            mask[finite[-2:]] = True
        slope = np.polyfit(t[mask], y[mask], 1)[0]
        rates.append(-slope)
    rates = np.asarray(rates)
    return DecayEstimate(float(rates.mean()),
                         float(rates.std(ddof=1) / np.sqrt(len(rates))), rates)


# ---------------------------------------------------------------------------
# Empirical threshold protocol
# ---------------------------------------------------------------------------

@dataclass
class EmpiricalThresholdReport:
    beta_grid: np.ndarray
    y_star: np.ndarray
    z_star: np.ndarray
    beta_star: float | None
    paths: int
    horizon: int
    seed: int
    final_counts: np.ndarray = field(repr=False, default=None)


_WORKER_STATE: dict = {}


def _empirical_init(payload):
    _WORKER_STATE["payload"] = payload


def _empirical_task(task):
    bi, pid = task
    pl = _WORKER_STATE["payload"]
    rng = rngmod.generator(pl["seed"], rngmod.TAG_PATH, bi, pid)
    beta = np.full(pl["n"], pl["beta_grid"][bi])
    x0 = np.ones(pl["n"], dtype=bool) if pl["init_all"] else pl["x0"].copy()
    _, counts, reinf, _ = _dt_run_fast(pl["arrays"], beta, pl["delta"], pl["steps"],
                                       x0, True, rng, False)
    return bi, pid, int(counts[-1]), reinf


def empirical_threshold(graph: DynamicGraphModel, delta: float, beta_grid,
                        paths: int, steps: int, seed: int = 0,
                        threads: int = 1, init_infected="all") -> EmpiricalThresholdReport:
    """Re-infection protocol: metastable infected level over a beta grid.

    For each beta, runs ``paths`` independent discrete-time simulations with
    re-infection; y* is the mean infected count at the final step, z* =
    y* - 1 compensates the forced re-infection, and beta* is the largest
    grid value with z* < 1.  Work items are seeded by (seed, beta index,
    path id), so results are identical for any thread count.
    """
    beta_grid = np.sort(np.asarray(beta_grid, dtype=float))
    arrays = _two_state_dt_arrays(graph)
    if arrays is None:
        raise ValueError("empirical threshold needs a discrete-time graph with "
                         "2-state or static edges")
    n = graph.n
    init_all = isinstance(init_infected, str) and init_infected == "all"
    payload = {
        "arrays": arrays, "n": n,
        "delta": np.full(n, float(delta)),
        "beta_grid": beta_grid, "steps": int(steps), "seed": int(seed),
        "init_all": init_all,
        "x0": None if init_all else _init_mask(init_infected, n),
    }
    tasks = [(bi, pid) for bi in range(beta_grid.size) for pid in range(paths)]
    if threads > 1:
        ctx = mp.get_context("fork")
        with ctx.Pool(threads, initializer=_empirical_init, initargs=(payload,)) as pool:
            results = list(pool.imap_unordered(_empirical_task, tasks, chunksize=4))
    else:
        _empirical_init(payload)
        results = [_empirical_task(t) for t in tasks]
    finals = np.zeros((beta_grid.size, paths), dtype=np.int64)
    for bi, pid, count, _ in results:
        finals[bi, pid] = count
    y_star = finals.mean(axis=1)
    z_star = y_star - 1.0
    below = np.flatnonzero(z_star < 1.0)
    beta_star = float(beta_grid[below[-1]]) if below.size else None
    return EmpiricalThresholdReport(beta_grid, y_star, z_star, beta_star,
                                    paths, int(steps), int(seed), finals)
