"""Ground-truth machinery for small instances.

The exponential-size exact stability condition (hypercube generator over
the 2^m subgraphs, Kronecker assembly), exhaustive and Monte-Carlo
evaluation of the expected spectral statistics of the certificate random
matrices M1..M4, and empirical verification of the matrix concentration
tail bound that powers every linear-size certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import rng as rngmod
from .errors import NonMarkovEdge, TooManyConfigurations, TooManyEdges, WrongKind
from .graphs import AMEI, DynamicGraphModel, MeanMatrix
from .markov import CT
from .spectral import KappaParams, kappa, power_iteration_abscissa
from .thresholds import EpidemicParams

_EDGE_CAP = 20
_DIM_CAP = 2_000_000
_CONFIG_CAP = 2 ** 20
_DENSE_DIM = 512


@dataclass
class SubgraphEnumeration:
    """The 2^m subgraphs of a dynamic graph with 2-state Markov edges.

    Label ``l`` in [0, 2^m) encodes the present-edge bitmask chi_l directly:
    bit k of l is 1 iff stochastic edge k is present.  Statically-on edges
    are folded into ``static_base`` and belong to every subgraph.
    """

    n: int
    kind: str
    edge_keys: list
    u: np.ndarray          # off -> on rates, per stochastic edge
    v: np.ndarray          # on -> off rates
    static_base: np.ndarray

    @property
    def m(self) -> int:
        return len(self.edge_keys)

    @property
    def n_labels(self) -> int:
        return 1 << self.m

    def chi(self, label: int) -> np.ndarray:
        return (label >> np.arange(self.m)) & 1

    def adjacency(self, label: int) -> np.ndarray:
        f = self.static_base.copy()
        for k, (i, j) in enumerate(self.edge_keys):
            if (label >> k) & 1:
                f[i, j] = 1.0
                if self.kind == AMEI:
                    f[j, i] = 1.0
        return f


def enumerate_subgraphs(graph: DynamicGraphModel) -> SubgraphEnumeration:
    """Extract the hypercube structure from a graph of 2-state CT Markov edges."""
    if graph.time != CT:
        raise WrongKind("subgraph enumeration applies to continuous-time graphs")
    keys, u, v = [], [], []
    static_base = np.zeros((graph.n, graph.n))
    for (i, j) in graph.edge_keys():
        edge = graph.edges[(i, j)]
        if edge.is_static:
            if edge.static_value:
                static_base[i, j] = 1.0
                if graph.kind == AMEI:
                    static_base[j, i] = 1.0
            continue
        if edge.chain.n_states != 2:
            raise NonMarkovEdge(f"edge ({i},{j}) has {edge.chain.n_states} states; "
                                "the exact condition assumes plain 2-state Markov edges")
        on = int(np.flatnonzero(edge.output == 1)[0])
        off = 1 - on
        keys.append((i, j))
        u.append(edge.chain.matrix[off, on])
        v.append(edge.chain.matrix[on, off])
    if len(keys) > _EDGE_CAP:
        raise TooManyEdges(f"{len(keys)} stochastic edges exceeds the 2^m cap of {_EDGE_CAP}")
    return SubgraphEnumeration(graph.n, graph.kind, keys,
                               np.asarray(u, dtype=float), np.asarray(v, dtype=float),
                               static_base)


def pi_matrix(enum: SubgraphEnumeration) -> sp.csr_matrix:
    """Generator of the joint edge process over the 2^m subgraph labels.

    Off-diagonal entries sit exactly at Hamming-distance-1 label pairs:
    u(k) when the flipped edge k is absent in the source label, v(k) when
    present; diagonal entries make rows sum to zero.
    """
    m, big_l = enum.m, enum.n_labels
    if m == 0:
        return sp.csr_matrix((1, 1))
    labels = np.arange(big_l, dtype=np.int64)
    rows, cols, data = [], [], []
    for k in range(m):
        bit = (labels >> k) & 1
        rows.append(labels)
        cols.append(labels ^ (1 << k))
        data.append(np.where(bit == 1, enum.v[k], enum.u[k]))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    pi = sp.coo_matrix((data, (rows, cols)), shape=(big_l, big_l)).tocsr()
    diag = -np.asarray(pi.sum(axis=1)).ravel()
    return (pi + sp.diags(diag)).tocsr()


def assemble_exponential_generator(graph: DynamicGraphModel,
                                   params: EpidemicParams) -> sp.csr_matrix:
    """Sparse assembly of Pi (x) I_n + blockdiag_l (B F_l - D).

    The hypercube stencil is built as one Kronecker product; the per-label
    blocks are assembled per edge over the labels where that edge is
    present, never materializing the dense n*2^m square.
    """
    enum = enumerate_subgraphs(graph)
    n, big_l = enum.n, enum.n_labels
    dim = n * big_l
    if dim > _DIM_CAP:
        raise TooManyEdges(f"matrix dimension {dim} exceeds cap {_DIM_CAP}")
    pi = pi_matrix(enum)
    mat = sp.kron(pi, sp.identity(n, format="csr"), format="csr")
    base = params.beta[:, None] * enum.static_base - np.diag(params.delta)
    mat = mat + sp.kron(sp.identity(big_l, format="csr"), sp.csr_matrix(base), format="csr")
    rows, cols, data = [], [], []
    labels = np.arange(big_l, dtype=np.int64)
    for k, (i, j) in enumerate(enum.edge_keys):
        sel = labels[((labels >> k) & 1) == 1]
        rows.append(sel * n + i)
        cols.append(sel * n + j)
        data.append(np.full(sel.size, params.beta[i]))
        if enum.kind == AMEI:
            rows.append(sel * n + j)
            cols.append(sel * n + i)
            data.append(np.full(sel.size, params.beta[j]))
    if rows:
        extra = sp.coo_matrix((np.concatenate(data),
                               (np.concatenate(rows), np.concatenate(cols))),
                              shape=(dim, dim)).tocsr()
        mat = mat + extra
    return mat.tocsr()


def exponential_condition(graph: DynamicGraphModel, params: EpidemicParams):
    """Exact-chain stability condition of exponential size.

    Returns (stable, eta): the Hurwitz verdict and the spectral abscissa of
    the assembled generator.  The matrix is Metzler, so the power-iteration
    fast path applies beyond the dense cutoff.
    """
    mat = assemble_exponential_generator(graph, params)
    dim = mat.shape[0]
    if dim <= _DENSE_DIM:
        eta = float(np.linalg.eigvals(mat.toarray()).real.max())
    else:
        eta = power_iteration_abscissa(mat, tol=1e-10)
    return eta < 0.0, eta


# ---------------------------------------------------------------------------
# Certificate random matrices M1..M4
# ---------------------------------------------------------------------------

@dataclass
class RandomMatrixSampler:
    """Bernoulli-support random matrices behind the certificates.

    M1 = -D + sum_(i!=j) beta_i h_ij E_ij                  (arc-independent)
    M2 = -D + sum_(i<j) sqrt(beta_i beta_j)(E_ij+E_ji) h_ij
    M3 =      sum_(i<j) (E_ij+E_ji) h_ij
    M4 = I-D + sum_(i<j) sqrt(beta_i beta_j)(E_ij+E_ji) h_ij

    with independent h_ij ~ Bernoulli(abar_ij).  Deterministic pairs
    (abar in {0,1}) are folded into the base matrix; only genuinely random
    pairs are sampled or enumerated.
    """

    which: str
    abar: np.ndarray
    beta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.which = self.which.upper()
        if self.which not in ("M1", "M2", "M3", "M4"):
            raise ValueError("which must be one of M1, M2, M3, M4")
        a = np.array(self.abar, dtype=float)
        if a.min() < 0 or a.max() > 1 or np.diag(a).any():
            raise ValueError("means must lie in [0,1] with zero diagonal")
        if self.which != "M1" and not np.array_equal(a, a.T):
            raise ValueError(f"{self.which} needs a symmetric mean matrix")
        a.setflags(write=False)
        self.abar = a
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        n = a.shape[0]
        if self.which == "M1":
            ii, jj = np.nonzero(~np.eye(n, dtype=bool))
        else:
            ii, jj = np.triu_indices(n, k=1)
        rand = (a[ii, jj] > 0) & (a[ii, jj] < 1)
        self._ri, self._rj = ii[rand], jj[rand]
        self._rp = a[self._ri, self._rj]
        base = np.zeros((n, n))
        det = a[ii, jj] == 1.0
        self._fill(base, ii[det], jj[det], np.ones(det.sum()))
        base += self._offset()
        self._base = base
        self._rw = self._weights(self._ri, self._rj)

    @classmethod
    def from_mean(cls, which: str, mean: MeanMatrix, params: EpidemicParams):
        return cls(which, mean.a_bar, params.beta, params.delta)

    @property
    def n(self) -> int:
        return self.abar.shape[0]

    @property
    def n_random_pairs(self) -> int:
        return self._ri.size

    @property
    def symmetric(self) -> bool:
        return self.which != "M1"

    def _offset(self) -> np.ndarray:
        if self.which == "M3":
            return np.zeros((self.n, self.n))
        d = np.diag(-self.delta)
        if self.which == "M4":
            d = d + np.eye(self.n)
        return d

    def _weights(self, ii, jj) -> np.ndarray:
        if self.which == "M1":
            return self.beta[ii]
        if self.which == "M3":
            return np.ones(ii.size)
        return np.sqrt(self.beta[ii] * self.beta[jj])

    def _fill(self, out, ii, jj, h):
        w = self._weights(ii, jj) * h
        out[..., ii, jj] += w
        if self.symmetric:
            out[..., jj, ii] += w

    def expectation(self) -> np.ndarray:
        out = self._base.copy()
        self._fill(out, self._ri, self._rj, self._rp)
        return out

    def bound_c(self) -> float:
        """Deviation bound C of the concentration inequality (beta_max; 1 for M3)."""
        return 1.0 if self.which == "M3" else float(self.beta.max())

    def variance_proxy(self) -> float:
        """v^2 = || sum Var(X_k) ||: Delta1, Delta2, or Delta3 of the family."""
        w = self.abar * (1.0 - self.abar)
        if self.which == "M1":
            b2 = self.beta ** 2
            return float((b2 * w.sum(axis=1) + w.T @ b2).max())
        if self.which == "M3":
            return float(w.sum(axis=1).max())
        return float((self.beta * (w @ self.beta)).max())

    def sample_batch(self, rng: np.random.Generator, count: int) -> np.ndarray:
        h = rng.random((count, self._ri.size)) < self._rp
        return self.from_bits(h.astype(float))

    def from_bits(self, bits: np.ndarray) -> np.ndarray:
        """Matrices for explicit support configurations (bits: (..., r))."""
        out = np.broadcast_to(self._base, bits.shape[:-1] + (self.n, self.n)).copy()
        w = self._rw * bits
        # index pairs are unique, so fancy-indexed += accumulates correctly
        out[..., self._ri, self._rj] += w
        if self.symmetric:
            out[..., self._rj, self._ri] += w
        return out

    def statistic(self, mats: np.ndarray) -> np.ndarray:
        """mu for M1, eta for M2/M3, log eta for M4 (batched over leading axes)."""
        if self.which == "M1":
            sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
            return np.linalg.eigvalsh(sym)[..., -1]
        top = np.linalg.eigvalsh(mats)[..., -1]
        if self.which == "M4":
            with np.errstate(divide="ignore"):
                return np.log(top)
        return top

    def statistic_name(self) -> str:
        return {"M1": "E[mu(M1)]", "M2": "E[eta(M2)]",
                "M3": "E[eta(M3)]", "M4": "E[log eta(M4)]"}[self.which]


def sample_certificate_matrix(sampler: RandomMatrixSampler, seed: int) -> np.ndarray:
    """One draw of the sampler's random matrix."""
    rng = rngmod.generator(seed, rngmod.TAG_DRAW)
    return sampler.sample_batch(rng, 1)[0]


@dataclass
class ExpectationEstimate:
    value: float
    stderr: float
    mode: str
    count: int
    statistic: str


def expected_certificate(sampler: RandomMatrixSampler, mode: str = "exhaustive",
                         draws: int = 10_000, seed: int = 0,
                         batch: int = 2048) -> ExpectationEstimate:
    """E[mu(M1)] / E[eta(M2|M3)] / E[log eta(M4)].

    ``exhaustive`` enumerates all support configurations of the random
    pairs in Gray-code order and returns the exact probability-weighted sum
    (standard error 0).  ``montecarlo`` averages over ``draws`` samples.
    """
    name = sampler.statistic_name()
    r = sampler.n_random_pairs
    if mode == "exhaustive":
        if 2 ** r > _CONFIG_CAP:
            raise TooManyConfigurations(f"2^{r} support configurations exceed the cap")
        labels = np.arange(2 ** r, dtype=np.int64)
        gray = labels ^ (labels >> 1)
        total = 0.0
        logp = np.log(sampler._rp) if r else np.zeros(0)
        log1mp = np.log1p(-sampler._rp) if r else np.zeros(0)
        for start in range(0, gray.size, batch):
            g = gray[start:start + batch]
            bits = ((g[:, None] >> np.arange(r)) & 1).astype(float) if r else np.zeros((g.size, 0))
            w = np.exp(bits @ logp + (1.0 - bits) @ log1mp)
            total += float(w @ sampler.statistic(sampler.from_bits(bits)))
        return ExpectationEstimate(total, 0.0, "exhaustive", int(2 ** r), name)
    if mode != "montecarlo":
        raise ValueError("mode must be 'exhaustive' or 'montecarlo'")
    rng = rngmod.generator(seed, rngmod.TAG_DRAW)
    vals = np.empty(draws)
    for start in range(0, draws, batch):
        k = min(batch, draws - start)
        vals[start:start + k] = sampler.statistic(sampler.sample_batch(rng, k))
    se = float(vals.std(ddof=1) / np.sqrt(draws)) if draws > 1 else float("inf")
    return ExpectationEstimate(float(vals.mean()), se, "montecarlo", draws, name)


@dataclass
class ChungTailCheck:
    """Empirical tail frequencies against the concentration bound, per s."""

    s: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    stderr: np.ndarray
    eta_mean: float
    draws: int

    def rows(self):
        return list(zip(self.s, self.empirical, self.bound, self.stderr))


def chung_tail_check(sampler: RandomMatrixSampler, s_grid, draws: int = 10_000,
                     seed: int = 0, batch: int = 2048) -> ChungTailCheck:
    """Estimate Pr(eta(X) > eta(E[X]) + s) and pair it with kappa_{C,v^2}(s).

    Applies to the symmetric families (M2/M3/M4); C and v^2 are the values
    used in the certificate proofs (C = beta_max or 1, v^2 = the family's
    Delta).
    """
    if not sampler.symmetric:
        raise ValueError("the tail bound check applies to symmetric families (M2/M3/M4)")
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    eta_mean = float(np.linalg.eigvalsh(sampler.expectation())[-1])
    rng = rngmod.generator(seed, rngmod.TAG_DRAW)
    exceed = np.zeros(s_grid.size, dtype=np.int64)
    for start in range(0, draws, batch):
        k = min(batch, draws - start)
        etas = np.linalg.eigvalsh(sampler.sample_batch(rng, k))[:, -1]
        exceed += (etas[:, None] > eta_mean + s_grid[None, :]).sum(axis=0)
    freq = exceed / draws
    kp = KappaParams(sampler.bound_c(), sampler.variance_proxy(), sampler.n)
    bound = kappa(kp, s_grid)
    stderr = np.sqrt(freq * (1.0 - freq) / draws)
    return ChungTailCheck(s_grid, freq, bound, stderr, eta_mean, draws)
