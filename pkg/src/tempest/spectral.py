"""Scalar and spectral kernels shared by every stability certificate.

Houses the concentration function kappa_{b,d} and its inverse at 1, the
spectral abscissa eta, the matrix measure mu, the c^- clip, and bounded 1-D
maximization with a certified-lower-bound contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceFailure, DivergenceDetected, DomainError, EmptyInterval, NumericalFailure

_DENSE_FALLBACK_DIM = 64
_POWER_MAX_ITER = 100_000


@dataclass(frozen=True)
class KappaParams:
    """Parameters of kappa_{b,d}: deviation bound b, variance proxy d, dimension n."""

    b: float
    d: float
    n: int

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError(f"b must be positive, got {self.b}")
        if self.d < 0:
            raise DomainError(f"d must be nonnegative, got {self.d}")
        if self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")


def kappa(params: KappaParams, s):
    """kappa_{b,d}(s) = n exp(s/b) ((bs+d)/d)^(-(bs+d)/b^2), evaluated in log space.

    Strictly decreasing in s for d > 0, with kappa(0) = n.  The d = 0 limit
    is the pointwise one: n at s = 0, 0 for s > 0.  Vectorized over s.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError("kappa is defined for s >= 0")
    b, d, n = params.b, params.d, params.n
    if d == 0:
        out = np.where(s_arr == 0, float(n), 0.0)
        return out if s_arr.ndim else float(out)
    z = (b * s_arr + d) / (b * b)
    log_k = np.log(n) + s_arr / b - z * np.log1p(b * s_arr / d)
    out = np.exp(log_k)
    return out if s_arr.ndim else float(out)


def kappa_inv_at_one(params: KappaParams) -> float:
    """The point s0 >= 0 with kappa(s0) = 1 (bisection on log kappa).

    kappa maps [0, inf) onto (0, n], so the root exists and is unique for
    every n >= 1 with d > 0; n = 1 gives s0 = 0 exactly.
    """
    if params.d == 0:
        raise DomainError("kappa_inv_at_one needs d > 0 (d = 0 is routed upstream)")
    if params.n == 1:
        return 0.0
    b, d, n = params.b, params.d, params.n

    def log_kappa(s):
        z = (b * s + d) / (b * b)
        return np.log(n) + s / b - z * np.log1p(b * s / d)

    hi = b
    while log_kappa(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalFailure("kappa inverse bracket exploded")
    lo = 0.0
    for _ in range(120):  # bisection to machine precision; monotone objective
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if log_kappa(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def c_minus(c: float) -> float:
    """Negative part (|c| - c)/2 = max(-c, 0)."""
    return max(-float(c), 0.0)


def _is_symmetric(m: np.ndarray) -> bool:
    scale = np.abs(m).max() if m.size else 0.0
    return np.abs(m - m.T).max() <= 1e-12 * max(1.0, scale)


def _is_metzler(m: np.ndarray) -> bool:
    off = m[~np.eye(m.shape[0], dtype=bool)]
    return off.size == 0 or off.min() >= 0


def power_iteration_abscissa(m, tol: float = 1e-10, max_iter: int = _POWER_MAX_ITER) -> float:
    """Spectral abscissa of a Metzler matrix by shifted power iteration.

    Iterates on M + cI with c = max_i |M_ii| plus a small positive margin;
    the margin keeps the diagonal strictly positive so every irreducible
    block is primitive and the iteration cannot cycle on periodic supports.
    Convergence is certified by the Collatz-Wielandt bracket
    min_i (Ax)_i/x_i <= rho <= max_i (Ax)_i/x_i for positive x.
    Accepts dense arrays or scipy sparse matrices.
    """
    sparse = sp.issparse(m)
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0]) if not sparse else float(m.tocsr()[0, 0])
    diag = m.diagonal()
    scale = max(float(np.abs(diag).max()),
                float(abs(m).max() if not sparse else np.abs(m.tocoo().data).max(initial=0.0)))
    scale = max(scale, 1.0)
    shift = float(np.abs(diag).max()) + 0.05 * scale
    ident = sp.identity(n, format="csr") if sparse else np.eye(n)
    a = (m + shift * ident)
    if sparse:
        a = a.tocsr()
    x = np.full(n, 1.0 / np.sqrt(n))
    bracket = (np.nan, np.nan)
    width_checkpoint = np.inf
    for it in range(1, max_iter + 1):
        y = a @ x
        ymax = y.max()
        if ymax <= 0:
            return -shift if not y.any() else float(y.max()) - shift
        pos = x > 0
        ratios = y[pos] / x[pos]
        lo, hi = float(ratios.min()), float(ratios.max())
        bracket = (lo - shift, hi - shift)
        width = hi - lo
        if width <= tol * max(1.0, abs(hi)):
            return 0.5 * (lo + hi) - shift
        if it % 500 == 0:
            # reducible inputs (e.g. disjoint blocks with distinct roots) keep
            # the bracket frozen forever: bail out early for the dense fallback
            if width > 0.9 * width_checkpoint:
                raise ConvergenceFailure(
                    f"Collatz-Wielandt bracket stagnant after {it} iterations",
                    iterations=it, bracket=bracket)
            width_checkpoint = width
        x = y / np.linalg.norm(y)
        x[x < 0] = 0.0  # round-off guard; iterates of a nonnegative matrix stay >= 0
    raise ConvergenceFailure(
        f"power iteration did not converge in {max_iter} iterations",
        iterations=max_iter, bracket=bracket)


def spectral_abscissa(m) -> float:
    """Maximum real part of the eigenvalues (the Perron root for Metzler input).

    Symmetric input goes through the symmetric eigensolver; larger Metzler
    matrices take the shifted power-iteration fast path with a dense
    fallback, and everything else is solved densely.
    """
    if sp.issparse(m):
        return power_iteration_abscissa(m)
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("spectral_abscissa needs a square matrix")
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    if _is_symmetric(m):
        return float(np.linalg.eigvalsh(m)[-1])
    if _is_metzler(m) and n > _DENSE_FALLBACK_DIM:
        try:
            return power_iteration_abscissa(m)
        except ConvergenceFailure:
            pass  # defective/reducible corner cases: fall through to dense
    return float(np.linalg.eigvals(m).real.max())


def matrix_measure(m) -> float:
    """mu(A) = eta(A + A^T)/2, via the symmetric eigensolver."""
    if sp.issparse(m):
        m = m.toarray()
    m = np.asarray(m, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[-1])


@dataclass
class ScalarMaximizeResult:
    s_star: float
    value: float
    interval: tuple

    def __post_init__(self):
        lo, hi = self.interval
        if not (lo < self.s_star <= hi):
            raise ValueError("maximizer must lie in (lo, hi]")


def maximize_on_interval(objective, lo: float, hi: float, budget: int = 4096,
                         divergence_cap: float = 1e15,
                         refine_brackets: int = 3) -> ScalarMaximizeResult:
    """Maximize a scalar objective on the half-open interval (lo, hi].

    Dense grid of ``budget`` points, geometrically clustered towards lo
    (first point at lo + (hi-lo)*1e-9) because certificate objectives can
    diverge there, followed by golden-section refinement around the best
    brackets.  The reported value is attained at the reported point, hence a
    certified lower bound on the supremum.  ``objective`` must accept numpy
    arrays.  Raises DivergenceDetected when any value exceeds the cap, which
    certificate callers treat as "condition holds trivially".
    """
    if not hi > lo:
        raise EmptyInterval(f"need hi > lo, got ({lo}, {hi}]")
    if budget < 4:
        raise ValueError("grid budget must be at least 4")
    span = hi - lo
    ts = np.geomspace(1e-9, 1.0, budget)
    xs = lo + span * ts
    xs[-1] = hi
    vals = np.asarray(objective(xs), dtype=float)
    if vals.shape != xs.shape:
        raise ValueError("objective must be vectorized over s")
    if np.any(vals > divergence_cap) or np.any(np.isposinf(vals)):
        raise DivergenceDetected("objective exceeds the divergence cap near lo")
    finite = np.isfinite(vals)
    if not finite.any():
        raise NumericalFailure("objective returned no finite values on the grid")
    vals = np.where(finite, vals, -np.inf)

    def scalar(x):
        return float(np.asarray(objective(np.array([x])), dtype=float)[0])

    order = np.argsort(vals)[::-1]
    best_x = float(xs[order[0]])
    best_v = float(vals[order[0]])
    seen = set()
    for k in order[:max(1, refine_brackets)]:
        k = int(k)
        if k in seen or not np.isfinite(vals[k]):
            continue
        seen.update((k - 1, k, k + 1))
        a = xs[k - 1] if k > 0 else lo + span * 1e-12
        b = xs[k + 1] if k + 1 < budget else hi
        x, v = _golden_max(scalar, float(a), float(b))
        if v > best_v and lo < x <= hi:
            best_x, best_v = x, v
        if v > divergence_cap:
            raise DivergenceDetected("objective exceeds the divergence cap near lo")
    return ScalarMaximizeResult(best_x, best_v, (lo, hi))


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, a: float, b: float, iters: int = 80):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= 1e-14 * max(1.0, abs(a), abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)
