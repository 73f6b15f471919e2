"""Normal CDF, regularized incomplete gamma and the Gamma quantile.

All functions are vectorized over ``x``/``p`` for a scalar shape ``a``.
The incomplete gamma uses the power series below ``x = a + 1`` and the
Lentz continued fraction above it, both evaluated in log space so tiny
tail probabilities keep full relative precision.  The quantile is a
bracketed Newton iteration on ``log P`` (lower tail) or ``log Q`` (upper
tail) with respect to ``log x``.
"""

from __future__ import annotations

import math

import numpy as np

from regsynth.errors import NumericalError

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 1000
CLAMP = 1e-300
_SMALLEST = np.nextafter(0.0, 1.0)

_erfc = np.frompyfunc(math.erfc, 1, 1)


def _result(a: np.ndarray):
    """Plain float for scalar input, array otherwise."""
    return float(a) if a.ndim == 0 else a


def norm_cdf(z):
    """Standard normal CDF, ``0.5 * erfc(-z / sqrt(2))``."""
    z = np.asarray(z, dtype=np.float64)
    return _result(np.asarray(0.5 * _erfc(-z / math.sqrt(2.0)), dtype=np.float64))


def _log_series(a: float, x: np.ndarray, logx: np.ndarray) -> np.ndarray:
    """log P(a, x) by the power series; intended for x < a + 1."""
    term = np.full_like(x, 1.0 / a)
    total = term.copy()
    ap = np.full_like(x, a)
    active = np.ones(x.shape, dtype=bool)
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term = np.where(active, term * x / ap, 0.0)
        total += term
        active &= np.abs(term) > np.abs(total) * _EPS
        if not active.any():
            break
    else:
        raise NumericalError("incomplete gamma series did not converge")
    return -x + a * logx - math.lgamma(a) + np.log(total)


def _log_contfrac(a: float, x: np.ndarray) -> np.ndarray:
    """log Q(a, x) by the modified Lentz continued fraction; intended for x >= a + 1."""
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = c * d
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _EPS
        if not active.any():
            break
    else:
        raise NumericalError("incomplete gamma continued fraction did not converge")
    return -x + a * np.log(x) - math.lgamma(a) + np.log(h)


def _log_pq(a: float, x: np.ndarray, logx=None):
    """(log P, log Q) for x > 0; ``logx`` keeps precision when x underflows."""
    if logx is None:
        logx = np.log(x)
    lower = x < a + 1.0
    logp = np.empty_like(x)
    logq = np.empty_like(x)
    if lower.any():
        lp = _log_series(a, x[lower], logx[lower])
        logp[lower] = lp
        logq[lower] = np.log1p(-np.exp(lp))
    upper = ~lower
    if upper.any():
        lq = _log_contfrac(a, x[upper])
        logq[upper] = lq
        logp[upper] = np.log1p(-np.exp(lq))
    return logp, logq


def _check_shape(a):
    if not (a > 0 and math.isfinite(a)):
        raise ValueError(f"shape parameter must be positive and finite, got {a}")


def gammainc_lower(a: float, x):
    """Regularized lower incomplete gamma P(a, x)."""
    _check_shape(a)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = np.zeros_like(x)
    pos = x > 0
    if pos.any():
        out[pos] = np.exp(_log_pq(a, x[pos])[0])
    return _result(out)


def gammainc_upper(a: float, x):
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _check_shape(a)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = np.ones_like(x)
    pos = x > 0
    if pos.any():
        out[pos] = np.exp(_log_pq(a, x[pos])[1])
    return _result(out)


def _initial_log_x(a: float, logp: np.ndarray, z: np.ndarray) -> np.ndarray:
    # Wilson-Hilferty where it is positive, small-x asymptote P ~ x^a / Gamma(a+1) otherwise
    t = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * math.sqrt(a))
    small = (logp + math.lgamma(a + 1.0)) / a
    with np.errstate(divide="ignore", invalid="ignore"):
        wh = math.log(a) + 3.0 * np.log(np.where(t > 0, t, 1.0))
    return np.where(t > 0.05, wh, np.minimum(small, math.log(a + 1.0)))


def _solve_tail(a: float, logt: np.ndarray, z: np.ndarray, upper: bool) -> np.ndarray:
    """log x solving log P(a, x) = logt (or log Q when ``upper``)."""
    lg = math.lgamma(a)
    u = _initial_log_x(a, logt if not upper else np.log1p(-np.exp(logt)), z)
    lo = np.full_like(u, -np.inf)
    hi = np.full_like(u, np.inf)
    done = np.zeros(u.shape, dtype=bool)
    for _ in range(200):
        x = np.exp(u)
        logp, logq = _log_pq(a, x, u)
        cur = logq if upper else logp
        resid = cur - logt
        # residual increases with u for the lower tail, decreases for the upper
        incr = -resid if upper else resid
        lo = np.where(incr < 0, u, lo)
        hi = np.where(incr > 0, u, hi)
        slope = np.exp(a * u - x - lg - cur)
        if upper:
            slope = -slope
        with np.errstate(invalid="ignore", divide="ignore"):
            step = resid / slope
        un = u - step
        outside = ~np.isfinite(un) | (un <= lo) | (un >= hi)
        both = np.isfinite(lo) & np.isfinite(hi)
        with np.errstate(invalid="ignore"):
            mid = 0.5 * (lo + hi)
        fallback = np.where(both, mid, np.where(np.isfinite(lo), u + 2.0, u - 2.0))
        un = np.where(outside, fallback, un)
        converged = (np.abs(un - u) <= 1e-15 * np.maximum(1.0, np.abs(u))) | (resid == 0)
        u = np.where(done, u, un)
        done |= converged
        if done.all():
            break
    else:
        raise NumericalError("gamma quantile iteration did not converge")
    return u


def gamma_ppf(p, a: float, scale: float = 1.0, z=None):
    """Quantile of Gamma(shape=a, scale) at probability ``p``.

    ``z`` optionally supplies the standard-normal score of ``p``; it only
    seeds the starting point.  Probabilities above one half are solved on
    the upper tail using ``1 - p``.
    """
    _check_shape(a)
    p = np.asarray(p, dtype=np.float64)
    shape = p.shape
    p = np.clip(np.atleast_1d(p), CLAMP, 1.0 - CLAMP)
    if z is not None:
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    return _result(_ppf_from_tails(p, 1.0 - p, a, scale, z).reshape(shape))


def _ppf_from_tails(p, q, a, scale, z):
    if z is None:
        z = np.zeros_like(p)
    z = np.broadcast_to(np.asarray(z, dtype=np.float64), p.shape)
    out = np.empty_like(p)
    low = p <= 0.5
    if low.any():
        out[low] = np.exp(_solve_tail(a, np.log(p[low]), z[low], upper=False))
    if (~low).any():
        out[~low] = np.exp(_solve_tail(a, np.log(q[~low]), z[~low], upper=True))
    # quantiles below the double range underflow; keep the Gamma support open
    return np.maximum(scale * out, _SMALLEST)


def gamma_ppf_from_normal(z, a: float, scale: float = 1.0):
    """Gamma quantile of ``Phi(z)``, using ``Phi(-z)`` for the upper tail."""
    _check_shape(a)
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    p = np.clip(norm_cdf(z), CLAMP, 1.0 - CLAMP)
    q = np.clip(norm_cdf(-z), CLAMP, 1.0 - CLAMP)
    out = _ppf_from_tails(np.atleast_1d(p), np.atleast_1d(q), a, scale, np.atleast_1d(z))
    return _result(out.reshape(z.shape))
