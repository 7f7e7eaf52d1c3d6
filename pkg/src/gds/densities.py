"""Analytic densities on compact boxes.

A :class:`DensitySpec` is a product density: every coordinate follows the
same one-dimensional family, rescaled to that coordinate's interval.  The
shipped experiments are one-dimensional, but nothing here assumes q = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special, stats

from .errors import ConfigError, NonFinite, SupportError
from .quadrature import DEFAULT_RULE, integrate_box

FAMILIES = ("uniform", "beta", "truncated-normal", "two-component-mixture")
_NPARAMS = {"uniform": 0, "beta": 2, "truncated-normal": 2, "two-component-mixture": 5}


def _power(x, e):
    # small integer exponents are common (beta(2,2)) and much cheaper than pow
    if e == 0:
        return 1.0
    if e == 1:
        return x
    if e == 2:
        return x * x
    return x**e


def _normalize_support(support):
    arr = np.asarray(support, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ValueError(f"support must be [lo, hi] or a list of [lo, hi] pairs, got {support!r}")
    if not np.all(np.isfinite(arr)) or np.any(arr[:, 1] <= arr[:, 0]):
        raise ValueError(f"support intervals must be finite with lo < hi, got {support!r}")
    return tuple((float(lo), float(hi)) for lo, hi in arr)


@dataclass(frozen=True)
class DensitySpec:
    """A known density with compact support.

    Parameters
    ----------
    family : str
        One of ``uniform``, ``beta`` (params ``a, b`` on the rescaled unit
        interval), ``truncated-normal`` (params ``m, s``) or
        ``two-component-mixture`` (params ``w, m1, s1, m2, s2``: a mixture of
        two normals truncated to the support).
    params : tuple of float
    support : tuple of (lo, hi)
        One interval per dimension.
    constant : float
        The known constant ``c`` with ``g = c * g_tilde``; only meaningful for
        target densities.  :meth:`pdf_tilde` returns ``pdf / c``.
    """

    family: str
    params: tuple = ()
    support: tuple = ((0.0, 1.0),)
    constant: float = 1.0
    _norm: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown density family {self.family!r}; expected one of {FAMILIES}")
        params = tuple(float(p) for p in np.atleast_1d(np.asarray(self.params, dtype=float)))
        if len(params) != _NPARAMS[self.family]:
            raise ValueError(
                f"{self.family} takes {_NPARAMS[self.family]} parameters, got {len(params)}"
            )
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "support", _normalize_support(self.support))
        if not (self.constant > 0 and math.isfinite(self.constant)):
            raise ValueError("constant must be a positive finite number")
        object.__setattr__(self, "constant", float(self.constant))

        if self.family == "beta":
            a, b = params
            if a <= 0 or b <= 0:
                raise ValueError(f"beta shapes must be positive, got a={a}, b={b}")
            norm = (special.beta(a, b),)
        elif self.family == "truncated-normal":
            m, s = params
            if s <= 0:
                raise ValueError("truncated-normal scale must be positive")
            norm = tuple(self._tn_mass(m, s, lo, hi) for lo, hi in self.support)
        elif self.family == "two-component-mixture":
            w, m1, s1, m2, s2 = params
            if not 0.0 <= w <= 1.0:
                raise ValueError("mixture weight must lie in [0, 1]")
            if s1 <= 0 or s2 <= 0:
                raise ValueError("mixture scales must be positive")
            norm = tuple(
                (self._tn_mass(m1, s1, lo, hi), self._tn_mass(m2, s2, lo, hi))
                for lo, hi in self.support
            )
        else:
            norm = ()
        object.__setattr__(self, "_norm", norm)

    @staticmethod
    def _tn_mass(m, s, lo, hi):
        mass = special.ndtr((hi - m) / s) - special.ndtr((lo - m) / s)
        if not mass > 0:
            raise ValueError("truncated normal has no mass on the support")
        return float(mass)

    # -- basic accessors ---------------------------------------------------

    @property
    def dim(self):
        return len(self.support)

    @property
    def volume(self):
        return math.prod(hi - lo for lo, hi in self.support)

    def contains_support(self, other):
        """True if ``other.support`` lies inside this density's support."""
        if other.dim != self.dim:
            return False
        return all(
            lo <= olo and ohi <= hi for (lo, hi), (olo, ohi) in zip(self.support, other.support)
        )

    # -- evaluation --------------------------------------------------------

    def marginal_pdf(self, t, axis=0, checked=True):
        """Density of coordinate ``axis`` at values ``t`` (zero outside).

        ``checked=False`` skips the support mask for points known to lie in
        the support.
        """
        lo, hi = self.support[axis]
        t = np.asarray(t, dtype=float)
        inside = (t >= lo) & (t <= hi) if checked else True
        width = hi - lo
        fam, p = self.family, self.params
        if fam == "uniform":
            return np.where(inside, 1.0 / width, 0.0) if checked else np.full(t.shape, 1.0 / width)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam == "beta":
                u = (t - lo) * (1.0 / width)
                a, b = p
                val = _power(u, a - 1) * _power(1.0 - u, b - 1)
                val *= 1.0 / (self._norm[0] * width)
            elif fam == "truncated-normal":
                m, s = p
                val = np.exp(-0.5 * ((t - m) / s) ** 2) / (s * math.sqrt(2 * math.pi) * self._norm[axis])
            else:
                w, m1, s1, m2, s2 = p
                z1, z2 = self._norm[axis]
                c = 1.0 / math.sqrt(2 * math.pi)
                val = w * c * np.exp(-0.5 * ((t - m1) / s1) ** 2) / (s1 * z1) + (1 - w) * c * np.exp(
                    -0.5 * ((t - m2) / s2) ** 2
                ) / (s2 * z2)
        return np.where(inside, val, 0.0) if checked else val

    def _coords(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            if x.ndim >= 2 and x.shape[-1] == 1:
                x = x[..., 0]
            return [x], x.shape
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}, got shape {x.shape}")
        return [x[..., d] for d in range(self.dim)], x.shape[:-1]

    def pdf(self, x, checked=True):
        """Exact density at ``x``; points outside the support give 0.

        Pass ``checked=False`` only for points already known to be in the
        support.
        """
        coords, shape = self._coords(x)
        out = self.marginal_pdf(coords[0], 0, checked)
        for d, t in enumerate(coords[1:], start=1):
            out = out * self.marginal_pdf(t, d, checked)
        return float(out) if out.ndim == 0 else out

    def pdf_tilde(self, x):
        """The unnormalized target ``g / c``."""
        return self.pdf(x) / self.constant

    # -- sampling ------------------------------------------------------------

    def sample(self, count, stream):
        """Draw ``count`` i.i.d. points as a ``(count, q)`` array."""
        if count < 1:
            raise ValueError("count must be at least 1")
        cols = [self._sample_axis(count, d, stream) for d in range(self.dim)]
        return np.stack(cols, axis=-1)

    def _sample_axis(self, count, axis, stream):
        lo, hi = self.support[axis]
        width = hi - lo
        fam, p = self.family, self.params
        if fam == "uniform":
            return lo + width * stream.random(count)
        if fam == "beta":
            if p == (2.0, 2.0):
                # closed-form inverse of the cdf 3u^2 - 2u^3
                u = 0.5 + np.sin(np.arcsin(2.0 * stream.random(count) - 1.0) / 3.0)
            else:
                u = stream.beta(p[0], p[1], count)
            return lo + width * u
        if fam == "truncated-normal":
            m, s = p
            return stats.truncnorm.ppf(stream.random(count), (lo - m) / s, (hi - m) / s, loc=m, scale=s)
        w, m1, s1, m2, s2 = p
        pick = stream.random(count) < w
        u = stream.random(count)
        first = stats.truncnorm.ppf(u, (lo - m1) / s1, (hi - m1) / s1, loc=m1, scale=s1)
        second = stats.truncnorm.ppf(u, (lo - m2) / s2, (hi - m2) / s2, loc=m2, scale=s2)
        return np.where(pick, first, second)

    # -- integrals -------------------------------------------------------------

    def box_mass(self, box, rule=DEFAULT_RULE):
        """Probability of an axis-aligned box (clipped to the support)."""
        mass = 1.0
        for d, (a, b) in enumerate(box):
            lo, hi = self.support[d]
            a, b = max(a, lo), min(b, hi)
            if b <= a:
                return 0.0
            mass *= integrate_box(lambda pts, d=d: self.marginal_pdf(pts[:, 0], d), [(a, b)], rule)
        return mass

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        out = {"family": self.family, "params": list(self.params), "support": [list(s) for s in self.support]}
        if self.constant != 1.0:
            out["constant"] = self.constant
        return out

    @classmethod
    def from_dict(cls, record, field="density"):
        if not isinstance(record, dict):
            raise ConfigError("expected an object with family, params, support", field)
        for key in ("family", "support"):
            if key not in record:
                raise ConfigError("missing required field", f"{field}.{key}")
        try:
            return cls(
                family=record["family"],
                params=tuple(record.get("params", ())),
                support=record["support"],
                constant=record.get("constant", 1.0),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field) from exc


def pdf_eval(d, x):
    """Density of ``d`` at ``x`` (0 outside the support)."""
    return d.pdf(x)


def sample_iid(d, count, stream):
    """``count`` i.i.d. draws from ``d`` using the numpy Generator ``stream``."""
    return d.sample(count, stream)


def _require_nested(f, g):
    if not f.contains_support(g):
        raise SupportError(f"target support {g.support} is not contained in data support {f.support}")


def expect_ratio_moment(f, g, m, quad=DEFAULT_RULE):
    """E_f[(g/f)^m] = integral of g^m / f^(m-1) over the target support.

    Raises
    ------
    NonFinite
        If the integral diverges, i.e. the regularity condition fails.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    _require_nested(f, g)

    def integrand(pts):
        gv = np.asarray(g.pdf(pts))
        fv = np.asarray(f.pdf(pts))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = gv**m / fv ** (m - 1)
        return np.where(gv > 0, val, 0.0)

    return integrate_box(integrand, g.support, quad)


@dataclass(frozen=True)
class MomentEntry:
    m: int
    value: float | None
    finite: bool
    message: str = ""


@dataclass(frozen=True)
class RegularityReport:
    entries: tuple
    passed: bool

    def to_dict(self):
        return {
            "passed": self.passed,
            "moments": [
                {"m": e.m, "value": e.value, "finite": e.finite, "message": e.message} for e in self.entries
            ],
        }


def check_regularity(f, g, m_max=4, quad=DEFAULT_RULE):
    """Tabulate E[(g/f)^m] for m = 1..m_max and flag divergent ones."""
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    entries = []
    for m in range(1, m_max + 1):
        try:
            entries.append(MomentEntry(m, expect_ratio_moment(f, g, m, quad), True))
        except NonFinite as exc:
            entries.append(MomentEntry(m, None, False, str(exc)))
    return RegularityReport(tuple(entries), all(e.finite for e in entries))
