"""Shared test utilities: instance generators and independent oracles.

The grid-oracle functions re-implement every certificate formula from
scratch (direct kappa evaluation, own bisection, dense eigensolvers, and a
uniform 10^7-point grid maximizer) so the package implementation can be
cross-checked end to end.
"""

from __future__ import annotations

import numpy as np

from tempest import AMAI, AMEI, DynamicGraphModel, build_edge_markovian


# ---------------------------------------------------------------------------
# Random instance generators
# ---------------------------------------------------------------------------

def random_amei_ct(rng, n, p_edge=0.5, rate_lo=0.3, rate_hi=1.5):
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                edges[(i, j)] = build_edge_markovian(rng.uniform(rate_lo, rate_hi),
                                                     rng.uniform(rate_lo, rate_hi))
    return DynamicGraphModel(n, AMEI, edges)


def random_amai_ct(rng, n, p_edge=0.4, rate_lo=0.3, rate_hi=1.5):
    edges = {}
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < p_edge:
                edges[(i, j)] = build_edge_markovian(rng.uniform(rate_lo, rate_hi),
                                                     rng.uniform(rate_lo, rate_hi))
    return DynamicGraphModel(n, AMAI, edges)


def random_amei_dt(rng, n, p_edge=0.5, prob_lo=0.1, prob_hi=0.9):
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_edge:
                edges[(i, j)] = build_edge_markovian(rng.uniform(prob_lo, prob_hi),
                                                     rng.uniform(prob_lo, prob_hi),
                                                     time="dt")
    return DynamicGraphModel(n, AMEI, edges)


def random_metzler(rng, n, density=0.6, scale=1.0):
    m = np.where(rng.random((n, n)) < density, rng.uniform(0, scale, (n, n)), 0.0)
    np.fill_diagonal(m, rng.uniform(-scale, scale, n))
    return m


def random_metzler_pair(rng, n):
    """Metzler A <= B entrywise (both Metzler)."""
    b = random_metzler(rng, n)
    cut = rng.random((n, n)) * np.where(b > 0, b, 0.0)
    off = ~np.eye(n, dtype=bool)
    a = b.copy()
    a[off] = b[off] - cut[off]
    a[np.diag_indices(n)] -= rng.random(n)
    return a, b


# ---------------------------------------------------------------------------
# Independent certificate oracles (uniform 1e7-point grid maximizer)
# ---------------------------------------------------------------------------

GRID = 10_000_000


def oracle_kappa(n, b, d, s):
    return n * np.exp(s / b) * ((b * s + d) / d) ** (-(b * s + d) / b ** 2)


def oracle_kappa_inv1(n, b, d):
    lo, hi = 0.0, max(b, 1.0)
    while oracle_kappa(n, b, d, hi) > 1.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if oracle_kappa(n, b, d, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _eta_dense(m):
    return float(np.linalg.eigvals(m).real.max())


def _mu_dense(m):
    return _eta_dense(0.5 * (m + m.T))


def _grid_max(f, lo, hi, grid=GRID):
    ss = np.linspace(lo, hi, grid)[1:]  # exclude the open left endpoint
    vals = f(ss)
    k = int(np.argmax(vals))
    return float(ss[k]), float(vals[k])


def oracle_certify_amai_ct(abar, beta, delta):
    """T1-certificate quantities recomputed independently; returns a dict."""
    n = abar.shape[0]
    w = abar * (1 - abar)
    delta1 = max(
        sum(beta[i] ** 2 * w[i, j] + beta[j] ** 2 * w[j, i] for j in range(n))
        for i in range(n)
    )
    bmax = beta.max()
    big_b = np.diag(beta)
    big_d = np.diag(delta)
    lhs = _mu_dense(big_b @ abar - big_d)
    mu_sgn = _mu_dense(big_b @ (abar > 0).astype(float) - big_d)
    s0 = oracle_kappa_inv1(n, bmax, delta1)
    c1 = mu_sgn - s0 / 2
    sbar1 = 2 * delta.min() + 2 * max(-c1, 0.0)
    out = dict(Delta1=delta1, kappa_inv_1=s0, c1=c1, sbar1=sbar1, lhs=lhs, mu_sgn=mu_sgn)
    if mu_sgn < 0 or sbar1 <= s0:
        return out
    kap = lambda s: oracle_kappa(n, bmax, delta1, s)
    s_star, tau = _grid_max(lambda s: -(s + 2 * c1 * kap(s)) / (2 * (1 - kap(s))), s0, sbar1)
    out.update(tau_A=tau, s_star=s_star, stable=lhs < tau,
               decay=-lhs * (1 - kap(s_star)) - s_star / 2 - c1 * kap(s_star))
    return out


def oracle_certify_amei_ct(abar, beta, delta):
    """T2-certificate quantities recomputed independently."""
    n = abar.shape[0]
    w = abar * (1 - abar)
    delta2 = max(
        sum(beta[i] * beta[j] * w[i, j] for j in range(n)) for i in range(n)
    )
    bmax = beta.max()
    big_b = np.diag(beta)
    big_d = np.diag(delta)
    lhs = _eta_dense(big_b @ abar - big_d)
    eta_sgn = _eta_dense(big_b @ (abar > 0).astype(float) - big_d)
    s0 = oracle_kappa_inv1(n, bmax, delta2)
    c2 = eta_sgn - s0
    sbar2 = delta.min() + max(-c2, 0.0)
    out = dict(Delta2=delta2, kappa_inv_1=s0, c2=c2, sbar2=sbar2, lhs=lhs, eta_sgn=eta_sgn)
    if eta_sgn < 0 or sbar2 <= s0:
        return out
    kap = lambda s: oracle_kappa(n, bmax, delta2, s)
    s_star, tau = _grid_max(lambda s: -(s + c2 * kap(s)) / (1 - kap(s)), s0, sbar2)
    out.update(tau_E=tau, s_star=s_star, stable=lhs < tau,
               decay=-lhs * (1 - kap(s_star)) - s_star - c2 * kap(s_star))
    return out


def oracle_certify_amei_dt(abar, beta, delta):
    """T4-certificate quantities recomputed independently."""
    n = abar.shape[0]
    w = abar * (1 - abar)
    delta2 = max(sum(beta[i] * beta[j] * w[i, j] for j in range(n)) for i in range(n))
    bmax = beta.max()
    big_b = np.diag(beta)
    eye_d = np.eye(n) - np.diag(delta)
    lam4 = _eta_dense(big_b @ abar + eye_d)
    eta_max = _eta_dense(big_b @ (abar > 0).astype(float) + eye_d)
    out = dict(Delta2=delta2, lambda4=lam4, eta_Mmax=eta_max)
    if lam4 >= 1:
        return out
    kap = lambda s: oracle_kappa(n, bmax, delta2, s)
    ss = np.linspace(0.0, 1.0 - lam4, GRID)
    vals = (lam4 / eta_max) ** kap(ss) - ss
    k = int(np.argmax(vals))
    s_star, tau = float(ss[k]), float(vals[k])
    gamma = -np.log(lam4 + s_star) - kap(s_star) * np.log(eta_max / lam4)
    out.update(tau_D=tau, s_star=s_star, stable=lam4 < tau, gamma_D=gamma)
    return out
