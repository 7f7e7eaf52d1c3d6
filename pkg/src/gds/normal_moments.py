"""Moments of shifted reciprocals of a standard normal.

For ``Z = 1/(p + sigma*W)`` with ``W ~ N(0, 1)`` the moments ``E[Z^j]`` are
read as principal values (finite parts): ``E[Z]`` comes from the Dawson
function and higher moments from the three-term recurrence

    E[Z^j] = (p E[Z^(j-1)] - E[Z^(j-2)]) / ((j - 1) sigma^2).

The recurrence loses about ``log10(p^2/sigma^2)`` digits per step, so it is
run in extended precision (mpmath) and only the result is rounded to float.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import mpmath
import numpy as np

from .errors import DomainError

# |x| above this uses the asymptotic series; the optimal truncation error
# there is about exp(-x^2) < 1e-15 relative.
_DAWSON_SWITCH = 6.0


def double_factorial(k):
    """k!! as a float, with (-1)!! = 0!! = 1.

    Switches to a log-gamma evaluation for k > 150.
    """
    k = int(k)
    if k < -1:
        raise DomainError(f"double factorial undefined for k={k}")
    if k <= 0:
        return 1.0
    if k > 150:
        if k % 2:
            m = (k + 1) // 2
            log = math.lgamma(2 * m + 1) - m * math.log(2) - math.lgamma(m + 1)
        else:
            m = k // 2
            log = m * math.log(2) + math.lgamma(m + 1)
        try:
            return math.exp(log)
        except OverflowError:
            return math.inf
    out = 1.0
    while k > 1:
        out *= k
        k -= 2
    return out


def double_factorial_int(k):
    """Exact integer k!! with (-1)!! = 0!! = 1."""
    k = int(k)
    if k < -1:
        raise DomainError(f"double factorial undefined for k={k}")
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gaussian_moment(m):
    """E[W^m] for a standard normal W."""
    if m < 0:
        raise DomainError("moment order must be non-negative")
    if m % 2:
        return 0.0
    return double_factorial(m - 1)


# -- Dawson function -----------------------------------------------------------


def _dawson_small(x):
    # exp(-x^2) * sum x^(2k+1) / (k! (2k+1)): every term is positive
    x2 = x * x
    p = x.copy()
    total = x.copy()
    k = 0
    while True:
        k += 1
        p = p * x2 / k
        term = p / (2 * k + 1)
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return np.exp(-x2) * total


def _dawson_large(x):
    # 1/(2x) * sum (2k-1)!! / (2x^2)^k, truncated before terms start growing
    inv = 1.0 / (2.0 * x * x)
    term = np.ones_like(x)
    total = np.ones_like(x)
    k = 0
    while True:
        k += 1
        nxt = term * (2 * k - 1) * inv
        shrinking = nxt < term
        term = np.where(shrinking, nxt, 0.0)
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return total / (2.0 * x)


def dawson(x):
    """Dawson's integral D(x) = exp(-x^2) * int_0^x exp(t^2) dt.

    Accepts scalars or arrays; accurate to about 1e-14 relative.
    """
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr).ravel()
    out = np.zeros_like(flat)
    ax = np.abs(flat)
    small = ax <= _DAWSON_SWITCH
    if np.any(small):
        out[small] = _dawson_small(ax[small])
    large = ~small & np.isfinite(ax)
    if np.any(large):
        out[large] = _dawson_large(ax[large])
    out[np.isinf(ax)] = 0.0
    out[np.isnan(flat)] = np.nan
    out = np.copysign(out, flat)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def _dawson_mp(ctx, x):
    """Dawson function in the working precision of the mpmath context."""
    sign = -1 if x < 0 else 1
    x = abs(x)
    if x == 0:
        return ctx.mpf(0)
    eps = ctx.mpf(10) ** (-(ctx.dps + 5))
    if x * x > (ctx.dps + 8) * math.log(10):
        inv = 1 / (2 * x * x)
        term = ctx.mpf(1)
        total = ctx.mpf(1)
        k = 0
        while True:
            k += 1
            nxt = term * (2 * k - 1) * inv
            if nxt >= term:
                break
            term = nxt
            total += term
            if term <= eps * total:
                break
        return sign * total / (2 * x)
    x2 = x * x
    p = x
    total = x
    k = 0
    while True:
        k += 1
        p = p * x2 / k
        term = p / (2 * k + 1)
        total += term
        if term <= eps * total:
            break
    return sign * ctx.exp(-x2) * total


# -- shifted reciprocal normal ---------------------------------------------------


@dataclass(frozen=True)
class SRNParams:
    """Shift ``p`` and scale ``sigma`` of ``Z = 1/(p + sigma W)``; both non-zero."""

    p: float
    sigma: float

    def __post_init__(self):
        if self.p == 0 or self.sigma == 0:
            raise DomainError("p and sigma must both be non-zero")
        if not (math.isfinite(self.p) and math.isfinite(self.sigma)):
            raise DomainError("p and sigma must be finite")


def _working_digits(p, sigma, j_max):
    ratio = (p * p) / (sigma * sigma)
    lost = max(0.0, math.log10(ratio)) * max(j_max - 1, 0)
    return 25 + int(math.ceil(lost))


def srn_moments(params, j_max, dps=None):
    """List of E[Z^j] for j = 0..j_max (principal-value reading).

    Parameters
    ----------
    params : SRNParams
    j_max : int
    dps : int, optional
        Decimal digits for the recurrence; chosen from the conditioning of the
        recurrence when omitted.
    """
    if j_max < 0:
        raise DomainError("j must be non-negative")
    ctx = mpmath.MPContext()
    ctx.dps = dps or _working_digits(params.p, params.sigma, j_max)
    p = ctx.mpf(params.p)
    s = ctx.mpf(params.sigma)
    scale = abs(s) * ctx.sqrt(2)
    moments = [ctx.mpf(1)]
    if j_max >= 1:
        moments.append(2 / scale * _dawson_mp(ctx, p / scale))
    s2 = s * s
    for j in range(2, j_max + 1):
        moments.append((p * moments[-1] - moments[-2]) / ((j - 1) * s2))
    return [float(m) for m in moments]


def srn_moment(params, j):
    """E[(p + sigma W)^-j] for j >= 0."""
    return srn_moments(params, j)[j]


def srn_cross_moment(params, j):
    """E[W (p + sigma W)^-j] = -sigma j E[(p + sigma W)^-(j+1)] for j >= 1."""
    if j < 1:
        raise DomainError("cross moment needs j >= 1")
    return -params.sigma * j * srn_moment(params, j + 1)


# -- asymptotic series coefficients -----------------------------------------------


def alpha_coeff(j, k, exact=False):
    """Closed-form coefficient alpha_j(k) of the reciprocal-moment series.

    ``alpha_j(k) = (2k - (2 floor((j-1)/2) + 1))!! 2^floor((j-1)/2) / (j-1)!``
    times ``(k - floor(j/2)) (k - floor(j/2) - 1) ... (k - (j-2))`` when j > 2.

    With ``exact=True`` the value is a :class:`fractions.Fraction`.
    """
    if j < 1:
        raise DomainError("alpha_j(k) needs j >= 1")
    if k < j - 1:
        raise DomainError(f"alpha_j(k) needs k >= j - 1, got j={j}, k={k}")
    h = (j - 1) // 2
    factors = range(j // 2, j - 1) if j > 2 else ()
    if exact:
        out = Fraction(double_factorial_int(2 * k - (2 * h + 1)) * 2**h, math.factorial(j - 1))
        for lag in factors:
            out *= k - lag
        return out
    out = double_factorial(2 * k - (2 * h + 1)) * 2.0**h / float(math.factorial(j - 1))
    for lag in factors:
        out *= k - lag
    return out


@dataclass(frozen=True)
class AlphaTable:
    """alpha_j(k) for 1 <= j <= j_max and j-1 <= k <= k_max."""

    j_max: int
    k_max: int
    values: dict

    def __getitem__(self, jk):
        return self.values[jk]

    def row(self, j):
        return [self.values[(j, k)] for k in range(j - 1, self.k_max + 1)]


def alpha_table_recursive(j_max, k_max, exact=False):
    """Build alpha_j(k) from the rows j = 1, 2 and the recurrence

    alpha_n(k) = (alpha_{n-1}(k) - alpha_{n-2}(k-1)) / (n - 1).
    """
    if j_max < 1 or k_max < j_max - 1:
        raise DomainError("need j_max >= 1 and k_max >= j_max - 1")
    dfact = (lambda m: Fraction(double_factorial_int(m))) if exact else double_factorial
    values = {}
    for k in range(0, k_max + 1):
        values[(1, k)] = dfact(2 * k - 1)
    for k in range(1, k_max + 1):
        if j_max >= 2:
            values[(2, k)] = dfact(2 * k - 1)
    for n in range(3, j_max + 1):
        for k in range(n - 1, k_max + 1):
            values[(n, k)] = (values[(n - 1, k)] - values[(n - 2, k - 1)]) / (n - 1)
    return AlphaTable(j_max, k_max, values)


def srn_moment_series(tau, a1, b1, r1, r2, N, j, K):
    """First ``K`` terms of the large-N series for E[h^j(W)],

    h(W) = 1 / (1 + tau + N^-r1 a1 + N^-r2 b1 W).
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    p = 1.0 + tau + N ** (-r1) * a1
    if not p > 0:
        raise DomainError("1 + tau + N^-r1 a1 must be positive")
    s2 = N ** (-2.0 * r2) * b1 * b1
    total = 0.0
    for m in range(K):
        total += alpha_coeff(j, j - 1 + m) * s2**m / p ** (2 * m + j)
    return total
