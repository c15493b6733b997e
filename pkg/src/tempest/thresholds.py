"""Linear-size stability certificates for spreading over dynamic graphs.

Four certificates (continuous-time arc-independent, continuous-time
edge-independent, its homogeneous-rate specialization, and the discrete-time
edge-independent one) plus the static baselines.  Each produces a
ThresholdReport carrying the verdict, the certified threshold, the
optimizer, a decay-rate lower bound, and every named intermediate.

All certificates are sufficient conditions: the maximizer reports a grid +
golden-section lower bound on the true supremum, so verdicts may be
conservative but never unsound.  When the certificate objective diverges at
the left interval endpoint, the always-on support graph is itself stable
and the verdict is returned as SUPPORT_TRIVIAL with the support-bound decay
rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketError, DivergenceDetected, NonIrreducible, ParamRange, \
    ReducibleChain, WrongKind
from .graphs import AMAI, AMEI, DynamicGraphModel, MeanMatrix, mean_matrix
from .markov import CT, DT
from .spectral import KappaParams, c_minus, kappa, kappa_inv_at_one, matrix_measure, \
    maximize_on_interval, spectral_abscissa

T1, T2, T3, T4 = "T1", "T2", "T3", "T4"
STATIC_CT, STATIC_DT, SUPPORT_TRIVIAL = "STATIC_CT", "STATIC_DT", "SUPPORT_TRIVIAL"


@dataclass
class EpidemicParams:
    """Per-node infection rates beta_i and recovery rates delta_i."""

    beta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.array(self.beta, dtype=float))
        d = np.atleast_1d(np.array(self.delta, dtype=float))
        if b.shape != d.shape or b.ndim != 1:
            raise ValueError("beta and delta must be 1-D vectors of equal length")
        if b.min() <= 0 or d.min() <= 0:
            raise ValueError("all rates must be strictly positive")
        b.setflags(write=False)
        d.setflags(write=False)
        self.beta, self.delta = b, d

    @classmethod
    def homogeneous(cls, beta: float, delta: float, n: int) -> "EpidemicParams":
        return cls(np.full(n, float(beta)), np.full(n, float(delta)))

    @property
    def n(self) -> int:
        return self.beta.size

    @property
    def beta_max(self) -> float:
        return float(self.beta.max())

    @property
    def delta_min(self) -> float:
        return float(self.delta.min())

    @property
    def is_homogeneous(self) -> bool:
        return self.beta.min() == self.beta.max() and self.delta.min() == self.delta.max()

    def B(self) -> np.ndarray:
        return np.diag(self.beta)

    def D(self) -> np.ndarray:
        return np.diag(self.delta)

    def require_dt(self):
        if self.delta.max() > 1:
            raise ParamRange("discrete-time recovery probabilities must satisfy delta_i <= 1")
        if self.beta.max() > 1:
            raise ParamRange("discrete-time infection probabilities must satisfy beta_i <= 1")


@dataclass
class ThresholdReport:
    """Certificate output; ``stable`` always equals ``lhs < threshold``."""

    certificate: str
    lhs: float
    threshold: float
    s_star: float
    decay_rate_bound: float | None
    stable: bool
    intermediates: dict = field(default_factory=dict)

    def __post_init__(self):
        assert self.stable == bool(self.lhs < self.threshold)
        assert (self.decay_rate_bound is not None) == self.stable

    def to_dict(self) -> dict:
        return {
            "certificate": self.certificate,
            "lhs": _jsonable(self.lhs),
            "threshold": _jsonable(self.threshold),
            "s_star": _jsonable(self.s_star),
            "decay_bound": _jsonable(self.decay_rate_bound),
            "stable": self.stable,
            "intermediates": {k: _jsonable(v) for k, v in self.intermediates.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(v):
    """Map non-finite floats onto JSON-safe tokens ('inf', '-inf', None)."""
    if v is None or isinstance(v, (bool, str, int)):
        return v
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _as_mean(graph_or_mean) -> MeanMatrix:
    if isinstance(graph_or_mean, MeanMatrix):
        return graph_or_mean
    try:
        return mean_matrix(graph_or_mean)
    except ReducibleChain as exc:
        raise NonIrreducible(str(exc)) from exc


def _check(mean: MeanMatrix, params: EpidemicParams, kind: str, time: str):
    if mean.kind != kind:
        raise WrongKind(f"certificate needs a {kind.upper()} graph, got {mean.kind.upper()}")
    if mean.time != time:
        raise WrongKind(f"certificate needs a {time.upper()} graph, got {mean.time.upper()}")
    if params.n != mean.n:
        raise ValueError("epidemic params length does not match node count")


def _eta_mix(mean: MeanMatrix, params: EpidemicParams, *, support: bool,
             plus_identity: bool = False) -> float:
    """eta(B*M - D [+ I]) with M = a_bar or sgn(a_bar).

    Homogeneous rates reduce to beta*eta(M) - delta [+ 1] using the cached
    spectra; heterogeneous AMEI inputs go through the similarity
    B^{-1/2}(BM - D)B^{1/2} = B^{1/2} M B^{1/2} - D, which is symmetric.
    """
    shift = 1.0 if plus_identity else 0.0
    if params.is_homogeneous:
        eta_m = mean.eta_support() if support else mean.eta_abar()
        return float(params.beta[0]) * eta_m - float(params.delta[0]) + shift
    a = mean.support() if support else mean.a_bar
    if mean.kind == AMEI:
        sb = np.sqrt(params.beta)
        m = sb[:, None] * a * sb[None, :] - np.diag(params.delta - shift)
        return float(np.linalg.eigvalsh(m)[-1])
    m = params.beta[:, None] * a - np.diag(params.delta - shift)
    return spectral_abscissa(m)


def _variability(mean: MeanMatrix) -> np.ndarray:
    return mean.a_bar * (1.0 - mean.a_bar)


# ---------------------------------------------------------------------------
# Static baselines
# ---------------------------------------------------------------------------

def static_ct_condition(a: np.ndarray, params: EpidemicParams):
    """Continuous-time static condition on adjacency ``a``.

    Homogeneous rates: beta/delta < 1/eta(a) (exact threshold).
    Heterogeneous: the sufficient Hurwitz condition eta(BA - D) < 0.
    Returns (stable, margin) with margin = threshold - lhs.
    """
    a = np.asarray(a, dtype=float)
    if params.is_homogeneous:
        eta_a = spectral_abscissa(a)
        lhs = float(params.beta[0] / params.delta[0])
        threshold = math.inf if eta_a <= 0 else 1.0 / eta_a
        return lhs < threshold, threshold - lhs
    lhs = spectral_abscissa(params.beta[:, None] * a - np.diag(params.delta))
    return lhs < 0.0, -lhs


def static_dt_condition(a: np.ndarray, params: EpidemicParams):
    """Discrete-time static condition: eta(BA + I - D) < 1."""
    a = np.asarray(a, dtype=float)
    params.require_dt()
    lhs = spectral_abscissa(params.beta[:, None] * a + np.diag(1.0 - params.delta))
    return lhs < 1.0, 1.0 - lhs


def _static_report(mean: MeanMatrix, params: EpidemicParams, routed_from: str) -> ThresholdReport:
    """Deterministic-graph route (Delta = 0): exact static condition."""
    inter = {"routed_from": routed_from, "deterministic": True}
    if mean.time == CT:
        lhs = _eta_mix(mean, params, support=False)
        stable = lhs < 0.0
        inter["eta_BAbar_minus_D"] = lhs
        return ThresholdReport(STATIC_CT, lhs, 0.0, float("nan"),
                               -lhs if stable else None, stable, inter)
    params.require_dt()
    lam4 = _eta_mix(mean, params, support=False, plus_identity=True)
    stable = lam4 < 1.0
    inter["lambda4"] = lam4
    decay = (-math.log(lam4) if lam4 > 0 else math.inf) if stable else None
    return ThresholdReport(STATIC_DT, lam4, 1.0, float("nan"), decay, stable, inter)


def _support_trivial_report(lhs: float, decay: float, inter: dict) -> ThresholdReport:
    inter = dict(inter, trivial_regime=True)
    return ThresholdReport(SUPPORT_TRIVIAL, lhs, math.inf, float("nan"), decay, True, inter)


# ---------------------------------------------------------------------------
# T1: continuous-time, arc-independent certificate
# ---------------------------------------------------------------------------

def certify_amai_ct(graph_or_mean, params: EpidemicParams) -> ThresholdReport:
    mean = _as_mean(graph_or_mean)
    _check(mean, params, AMAI, CT)
    b2 = params.beta ** 2
    w = _variability(mean)
    delta1 = float((b2 * w.sum(axis=1) + w.T @ b2).max())
    if delta1 == 0.0:
        return _static_report(mean, params, T1)

    lhs = matrix_measure(params.beta[:, None] * mean.a_bar - np.diag(params.delta))
    mu_sgn = matrix_measure(params.beta[:, None] * mean.support() - np.diag(params.delta))
    kp = KappaParams(params.beta_max, delta1, mean.n)
    s0 = kappa_inv_at_one(kp)
    c1 = mu_sgn - s0 / 2.0
    sbar1 = 2.0 * params.delta_min + 2.0 * c_minus(c1)
    inter = {"Delta1": delta1, "c1": c1, "sbar1": sbar1, "kappa_inv_1": s0,
             "mu_BAbar_minus_D": lhs, "mu_Bsgn_minus_D": mu_sgn,
             "beta_max": params.beta_max, "delta_min": params.delta_min}

    if mu_sgn < 0.0:  # objective diverges at the left endpoint: trivially stable
        inter.update(tau_A=math.inf, s_star=float("nan"), decay_bound=-mu_sgn)
        return _support_trivial_report(lhs, -mu_sgn, inter)
    if sbar1 <= s0:
        inter.update(tau_A=-math.inf, s_star=float("nan"), interval_empty=True)
        return ThresholdReport(T1, lhs, -math.inf, float("nan"), None, False, inter)

    def objective(s):
        k = kappa(kp, s)
        return -(s + 2.0 * c1 * k) / (2.0 * (1.0 - k))

    try:
        res = maximize_on_interval(objective, s0, sbar1)
    except DivergenceDetected:
        inter.update(tau_A=math.inf, s_star=float("nan"), decay_bound=-mu_sgn)
        return _support_trivial_report(lhs, -mu_sgn, inter)
    tau_a, s_star = res.value, res.s_star
    stable = lhs < tau_a
    k_star = kappa(kp, s_star)
    decay = (-lhs * (1.0 - k_star) - s_star / 2.0 - c1 * k_star) if stable else None
    inter.update(tau_A=tau_a, s_star=s_star, kappa_s_star=k_star,
                 decay_bound=decay if stable else None)
    return ThresholdReport(T1, lhs, tau_a, s_star, decay, stable, inter)


# ---------------------------------------------------------------------------
# T2: continuous-time, edge-independent certificate
# ---------------------------------------------------------------------------

def certify_amei_ct(graph_or_mean, params: EpidemicParams) -> ThresholdReport:
    mean = _as_mean(graph_or_mean)
    _check(mean, params, AMEI, CT)
    w = _variability(mean)
    delta2 = float((params.beta * (w @ params.beta)).max())
    if delta2 == 0.0:
        return _static_report(mean, params, T2)

    lhs = _eta_mix(mean, params, support=False)
    eta_sgn = _eta_mix(mean, params, support=True)
    kp = KappaParams(params.beta_max, delta2, mean.n)
    s0 = kappa_inv_at_one(kp)
    c2 = eta_sgn - s0
    sbar2 = params.delta_min + c_minus(c2)
    inter = {"Delta2": delta2, "c2": c2, "sbar2": sbar2, "kappa_inv_1": s0,
             "eta_BAbar_minus_D": lhs, "eta_Bsgn_minus_D": eta_sgn,
             "beta_max": params.beta_max, "delta_min": params.delta_min}

    if eta_sgn < 0.0:
        inter.update(tau_E=math.inf, s_star=float("nan"), decay_bound=-eta_sgn)
        return _support_trivial_report(lhs, -eta_sgn, inter)
    if sbar2 <= s0:
        inter.update(tau_E=-math.inf, s_star=float("nan"), interval_empty=True)
        return ThresholdReport(T2, lhs, -math.inf, float("nan"), None, False, inter)

    def objective(s):
        k = kappa(kp, s)
        return -(s + c2 * k) / (1.0 - k)

    try:
        res = maximize_on_interval(objective, s0, sbar2)
    except DivergenceDetected:
        inter.update(tau_E=math.inf, s_star=float("nan"), decay_bound=-eta_sgn)
        return _support_trivial_report(lhs, -eta_sgn, inter)
    tau_e, s_star = res.value, res.s_star
    stable = lhs < tau_e
    k_star = kappa(kp, s_star)
    decay = (-lhs * (1.0 - k_star) - s_star - c2 * k_star) if stable else None
    inter.update(tau_E=tau_e, s_star=s_star, kappa_s_star=k_star,
                 decay_bound=decay if stable else None)
    return ThresholdReport(T2, lhs, tau_e, s_star, decay, stable, inter)


# ---------------------------------------------------------------------------
# T3: homogeneous rates on an AMEI graph
# ---------------------------------------------------------------------------

def xi_h_factor(n: int, eta_sgn: float, delta_over_beta: float, delta3: float):
    """The multiplicative threshold factor xi_H for homogeneous rates.

    Depends only on (n, eta(sgn Abar), delta/beta, Delta3).  Returns
    (xi_H, s_star): xi_H = 1 for a deterministic graph (Delta3 = 0), +inf in
    the trivial regime beta/delta < 1/eta(sgn Abar), and -inf when the
    maximization interval is empty (certificate cannot conclude).
    """
    if delta3 < 0:
        raise ValueError("Delta3 must be nonnegative")
    if delta3 == 0.0:
        return 1.0, float("nan")
    if delta_over_beta > eta_sgn:
        return math.inf, float("nan")
    kp = KappaParams(1.0, float(delta3), int(n))
    s0 = kappa_inv_at_one(kp)
    c3 = eta_sgn - s0
    sbar3 = delta_over_beta + c_minus(c3)
    if sbar3 <= s0:
        return -math.inf, float("nan")

    inv_ratio = 1.0 / delta_over_beta  # beta/delta

    def objective(s):
        k = kappa(kp, s)
        return (1.0 - inv_ratio * (s + c3 * k)) / (1.0 - k)

    res = maximize_on_interval(objective, s0, sbar3)
    return res.value, res.s_star


def certify_homogeneous(graph_or_mean, beta: float, delta: float) -> ThresholdReport:
    mean = _as_mean(graph_or_mean)
    params = EpidemicParams.homogeneous(beta, delta, mean.n)
    _check(mean, params, AMEI, CT)
    beta, delta = float(beta), float(delta)
    w = _variability(mean)
    delta3 = float(w.sum(axis=1).max())
    if delta3 == 0.0:
        lam3 = mean.eta_abar()
        lhs = beta / delta
        threshold = math.inf if lam3 <= 0 else 1.0 / lam3
        stable = lhs < threshold
        decay = (delta - beta * lam3) if stable else None
        inter = {"Delta3": 0.0, "lambda3": lam3, "routed_from": T3, "deterministic": True}
        return ThresholdReport(STATIC_CT, lhs, threshold, float("nan"), decay, stable, inter)

    lam3 = mean.eta_abar()
    eta_sgn = mean.eta_support()
    dob = delta / beta
    kp = KappaParams(1.0, delta3, mean.n)
    s0 = kappa_inv_at_one(kp)
    c3 = eta_sgn - s0
    sbar3 = dob + c_minus(c3)
    trivial = beta / delta < 1.0 / eta_sgn
    inter = {"Delta3": delta3, "c3": c3, "sbar3": sbar3, "kappa_inv_1": s0,
             "lambda3": lam3, "eta_sgn": eta_sgn, "beta": beta, "delta": delta}

    if trivial:
        decay = delta - beta * eta_sgn
        inter.update(xi_H=math.inf, s_star=float("nan"), decay_bound=decay)
        return _support_trivial_report(beta / delta, decay, inter)

    xi_h, s_star = xi_h_factor(mean.n, eta_sgn, dob, delta3)
    lhs = beta / delta
    if not math.isfinite(xi_h):  # empty interval: cannot certify
        inter.update(xi_H=xi_h, s_star=float("nan"), interval_empty=True)
        return ThresholdReport(T3, lhs, -math.inf, float("nan"), None, False, inter)
    threshold = xi_h / lam3
    stable = lhs < threshold
    k_star = kappa(kp, s_star)
    # Paper-convention bound is per unit of beta-scaled time; multiply by
    # beta so the bound applies to the decay of Sigma itself.
    paper_bound = dob - lam3 - s_star - (c3 - lam3) * k_star
    decay = beta * paper_bound if stable else None
    inter.update(xi_H=xi_h, s_star=s_star, kappa_s_star=k_star,
                 decay_bound=decay if stable else None,
                 decay_bound_paper_convention=paper_bound)
    return ThresholdReport(T3, lhs, threshold, s_star, decay, stable, inter)


# ---------------------------------------------------------------------------
# T4: discrete-time, edge-independent certificate
# ---------------------------------------------------------------------------

def certify_amei_dt(graph_or_mean, params: EpidemicParams) -> ThresholdReport:
    if isinstance(graph_or_mean, DynamicGraphModel):
        for (i, j), edge in graph_or_mean.edges.items():
            if not edge.is_static and not edge.chain.is_aperiodic():
                raise NonIrreducible(f"edge ({i},{j}) chain is periodic; "
                                     "the discrete-time certificate needs aperiodic chains")
    mean = _as_mean(graph_or_mean)
    _check(mean, params, AMEI, DT)
    params.require_dt()
    w = _variability(mean)
    delta2 = float((params.beta * (w @ params.beta)).max())
    if delta2 == 0.0:
        return _static_report(mean, params, T4)

    lam4 = _eta_mix(mean, params, support=False, plus_identity=True)
    eta_max = _eta_mix(mean, params, support=True, plus_identity=True)
    inter = {"Delta2": delta2, "lambda4": lam4, "eta_Mmax": eta_max,
             "beta_max": params.beta_max, "delta_min": params.delta_min}
    if lam4 >= 1.0:
        inter.update(tau_D=-math.inf, s_star=float("nan"), interval_empty=True)
        return ThresholdReport(T4, lam4, -math.inf, float("nan"), None, False, inter)

    kp = KappaParams(params.beta_max, delta2, mean.n)
    log_ratio = math.log(lam4 / eta_max)  # <= 0 by Metzler monotonicity

    def objective(s):
        return np.exp(kappa(kp, s) * log_ratio) - s

    hi = 1.0 - lam4
    # the interval is closed at s = 0 (kappa(0) = n); evaluate it separately
    g0 = math.exp(mean.n * log_ratio)
    res = maximize_on_interval(objective, 0.0, hi)
    if res.value >= g0:
        tau_d, s_star = res.value, res.s_star
    else:
        tau_d, s_star = g0, 0.0
    stable = lam4 < tau_d
    k_star = kappa(kp, s_star)
    gamma_d = -math.log(lam4 + s_star) + k_star * log_ratio
    decay = gamma_d if stable else None
    inter.update(tau_D=tau_d, s_star=s_star, kappa_s_star=k_star,
                 gamma_D=gamma_d, decay_bound=decay)
    return ThresholdReport(T4, lam4, tau_d, s_star, decay, stable, inter)


# ---------------------------------------------------------------------------
# Scalar threshold search
# ---------------------------------------------------------------------------

_CERTIFICATES = {
    "t1": lambda mean, p: certify_amai_ct(mean, p),
    "t2": lambda mean, p: certify_amei_ct(mean, p),
    "t3": lambda mean, p: certify_homogeneous(mean, float(p.beta[0]), float(p.delta[0])),
    "t4": lambda mean, p: certify_amei_dt(mean, p),
}


def certificate_verdict(mean: MeanMatrix, certificate: str, beta: float, delta: float) -> bool:
    """Stable/unstable verdict of one certificate at homogeneous rates."""
    certificate = certificate.lower()
    params = EpidemicParams.homogeneous(beta, delta, mean.n)
    if certificate == "static_ct":
        return static_ct_condition(mean.a_bar, params)[0]
    if certificate == "static_dt":
        return static_dt_condition(mean.a_bar, params)[0]
    if certificate not in _CERTIFICATES:
        raise ValueError(f"unknown certificate {certificate!r}")
    return _CERTIFICATES[certificate](mean, params).stable


def threshold_in_beta(graph_or_mean, delta: float, certificate: str,
                      search_bounds, tol: float = 1e-7) -> float:
    """Largest homogeneous beta certified stable, by bisection.

    Requires the verdict to be monotone over the bracket, verified at the
    endpoints: raises BracketError if the lower endpoint is not stable;
    returns the upper bound when even it is stable.
    """
    mean = _as_mean(graph_or_mean)
    lo, hi = float(search_bounds[0]), float(search_bounds[1])
    if not lo < hi:
        raise BracketError(f"need lo < hi, got ({lo}, {hi})")
    stable = lambda b: certificate_verdict(mean, certificate, b, delta)
    if stable(hi):
        return hi
    if not stable(lo):
        raise BracketError(f"certificate {certificate} is already unstable at beta={lo}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo
