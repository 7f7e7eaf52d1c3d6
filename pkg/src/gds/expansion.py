"""Pointwise error expansion of the g-DS subsample density.

For a fixed ordered tuple ``z_1..z_n`` in the target support, the ratio of
the subsample density to ``prod g(z_k)`` minus one is expanded as

    const + N^-r1 [r1 group] + N^-2r1 [2r1 group] + N^-2r2 [2r2 group]
          + N^-1 [1/N group] + o(N^-1).

The groups are built from the point products ``I``, ``A1``, ``A2`` and the
moment constants ``mu_{i,k-i}`` and ``sigma00^2``, which are integrals over
the target support.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from .densities import DensitySpec
from .errors import NonFinite, SupportError
from .estimator import PerturbationSpec
from .normal_moments import gaussian_moment
from .quadrature import DEFAULT_RULE, QuadratureRule, integrate_box

TAU_ZERO_THRESHOLD = 1e-12


def _points(z, dim=1):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z[None]
    if z.ndim == 1:
        z = z[:, None] if dim == 1 else z[None, :]
    return z


def _one_plus_tau(z, spec):
    return 1.0 + np.broadcast_to(spec.tau(z), (len(z),))


def calI(z, spec):
    """I = prod_k (1 + tau(z_k))."""
    z = _points(z)
    return float(np.prod(_one_plus_tau(z, spec)))


def A1(z, spec):
    """A1 = sum_j a1(z_j) prod_{k != j} (1 + tau(z_k))."""
    z = _points(z)
    t = _one_plus_tau(z, spec)
    a = np.broadcast_to(spec.a1(z), (len(z),))
    return float(sum(a[j] * np.prod(np.delete(t, j)) for j in range(len(z))))


def A2(z, spec, strict=True):
    """A2 = sum_{i<j} a1(z_i) a1(z_j) prod_{k not in {i,j}} (1 + tau(z_k)).

    With ``strict=True`` an empty product counts as 0 (so A2 vanishes for
    n = 2); ``strict=False`` uses the usual empty product 1.
    """
    z = _points(z)
    t = _one_plus_tau(z, spec)
    a = np.broadcast_to(spec.a1(z), (len(z),))
    total = 0.0
    for i, j in itertools.combinations(range(len(z)), 2):
        rest = np.delete(t, [i, j])
        prod = float(np.prod(rest)) if rest.size else (0.0 if strict else 1.0)
        total += a[i] * a[j] * prod
    return float(total)


def _require_nested(f, g):
    if not f.contains_support(g):
        raise SupportError(f"target support {g.support} is not contained in data support {f.support}")


def mu_moment(f, g, spec, i, km_i, quad=DEFAULT_RULE):
    """mu_{i,k-i} = (-1)^k C(k,i) E[W^(k-i)] * integral of g a1^i b1^(k-i) / (1+tau)^(k+1).

    The integral runs over the target support.  When tau, a1 and b1 are
    catalog constants it is evaluated in closed form using that g integrates
    to one.
    """
    k = i + km_i
    if i < 0 or km_i < 0 or k > 2:
        raise ValueError("only orders with i, k-i >= 0 and k <= 2 are available")
    _require_nested(f, g)
    wm = gaussian_moment(km_i)
    if wm == 0.0:
        return 0.0
    coef = (-1) ** k * math.comb(k, i) * wm
    fns = (spec.tau, spec.a1, spec.b1)
    if all(fn.is_constant for fn in fns):
        tau, a1, b1 = (fn.params[0][1] for fn in fns)
        return coef * a1**i * b1**km_i / (1.0 + tau) ** (k + 1)

    def integrand(pts):
        val = g.pdf(pts) / (1.0 + spec.tau(pts)) ** (k + 1)
        if i:
            val = val * spec.a1(pts) ** i
        if km_i:
            val = val * spec.b1(pts) ** km_i
        return val

    return coef * integrate_box(integrand, g.support, quad)


def sigma00_sq(f, g, spec, quad=DEFAULT_RULE):
    """Var[(g/f)(X) / (1 + tau(X))] for X ~ f.

    Raises
    ------
    NonFinite
        If the second moment diverges.
    """
    _require_nested(f, g)
    mu = mu_moment(f, g, spec, 0, 0, quad)
    if f == g and spec.tau.is_constant:
        return 0.0

    def integrand(pts):
        gv = g.pdf(pts)
        fv = f.pdf(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = gv * gv / (fv * (1.0 + spec.tau(pts)) ** 2)
        return np.where(gv > 0, val, 0.0)

    second = integrate_box(integrand, g.support, quad)
    return max(second - mu * mu, 0.0)


def rate_exponent(spec, support=((0.0, 1.0),)):
    """Predicted decay order of the ratio error.

    Returns ``{"exponent": min(r1, 2 r2, 1)}`` for an unbiased estimator
    limit (tau == 0 on the support) and ``{"diverges": True}`` otherwise.
    """
    if spec.tau.sup_abs(support) > TAU_ZERO_THRESHOLD:
        return {"diverges": True}
    return {"exponent": min(spec.r1, 2.0 * spec.r2, 1.0)}


@dataclass(frozen=True)
class ExpansionInputs:
    """A point tuple and the model it is expanded under."""

    f: DensitySpec
    g: DensitySpec
    spec: PerturbationSpec
    n: int
    z: np.ndarray
    quad: QuadratureRule = DEFAULT_RULE
    strict_paper_conventions: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        z = _points(self.z, self.g.dim)
        if len(z) != self.n or z.shape[1] != self.g.dim:
            raise ValueError(f"z must hold {self.n} points of dimension {self.g.dim}")
        for lo_hi, col in zip(self.g.support, z.T):
            if np.any(col < lo_hi[0]) or np.any(col > lo_hi[1]):
                raise SupportError("every z_k must lie in the target support")
        _require_nested(self.f, self.g)
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class ExpansionBreakdown:
    const_term: float
    r1_term: float
    two_r1_term: float
    two_r2_term: float
    inv_N_term: float
    mu: dict
    sigma00_sq: float
    calI: float
    A1: float
    A2: float
    rate_exponent: dict
    r1: float
    r2: float
    extras: dict = field(default_factory=dict)

    @property
    def groups(self):
        return {
            "const": self.const_term,
            "r1": self.r1_term,
            "two_r1": self.two_r1_term,
            "two_r2": self.two_r2_term,
            "inv_N": self.inv_N_term,
        }

    def total(self, N):
        """Predicted ratio error at sample size ``N`` (scalar or array)."""
        N = np.asarray(N, dtype=float)
        out = (
            self.const_term
            + N ** (-self.r1) * self.r1_term
            + N ** (-2 * self.r1) * self.two_r1_term
            + N ** (-2 * self.r2) * self.two_r2_term
            + self.inv_N_term / N
        )
        return float(out) if out.ndim == 0 else out

    def to_dict(self, N_values=()):
        def num(x):
            return float(x) if math.isfinite(x) else None

        return {
            "calI": num(self.calI),
            "A1": num(self.A1),
            "A2": num(self.A2),
            "mu": {key: num(v) for key, v in self.mu.items()},
            "sigma00_sq": num(self.sigma00_sq),
            "groups": {key: num(v) for key, v in self.groups.items()},
            "total": {str(int(N)) if float(N).is_integer() else repr(float(N)): num(self.total(N)) for N in N_values},
            "rate_exponent": self.rate_exponent,
        }


def theorem_ratio(inputs, N=None, allow_nonfinite=False):
    """Evaluate every group of the expansion at the tuple ``inputs.z``.

    Parameters
    ----------
    inputs : ExpansionInputs
    N : float, optional
        Accepted for convenience; the breakdown is N-free and
        :meth:`ExpansionBreakdown.total` evaluates any N.
    allow_nonfinite : bool
        If the variance integral diverges, record ``sigma00_sq = inf`` (and an
        infinite 1/N group) instead of raising; the lower-order groups stay
        usable.

    Raises
    ------
    NonFinite
        From the moment integrals, unless ``allow_nonfinite``.
    """
    f, g, spec, n, z, quad = inputs.f, inputs.g, inputs.spec, inputs.n, inputs.z, inputs.quad
    I = calI(z, spec)
    a1_sum = A1(z, spec)
    a2_sum = A2(z, spec, strict=inputs.strict_paper_conventions)
    mu = {
        "0,0": mu_moment(f, g, spec, 0, 0, quad),
        "1,0": mu_moment(f, g, spec, 1, 0, quad),
        "2,0": mu_moment(f, g, spec, 2, 0, quad),
        "0,2": mu_moment(f, g, spec, 0, 2, quad),
        "0,1": mu_moment(f, g, spec, 0, 1, quad),
        "1,1": mu_moment(f, g, spec, 1, 1, quad),
    }
    try:
        s2 = sigma00_sq(f, g, spec, quad)
    except NonFinite:
        if not allow_nonfinite:
            raise
        s2 = math.inf
    m0, m10, m20, m02 = mu["0,0"], mu["1,0"], mu["2,0"], mu["0,2"]

    const = m0 ** (-n) / I - 1.0
    r1_term = -(n * m0 ** (-n - 1) * m10 / I + m0 ** (-n) * a1_sum / I**2)
    two_r1 = (
        -n * m0 ** (-n - 1) * m20 / I
        + 0.5 * n * (n + 1) * m0 ** (-n - 2) * m10**2 / I
        + n * m0 ** (-n - 1) * m10 * a1_sum / I**2
        - m0 ** (-n) * a2_sum / I**2
        + m0 ** (-n) * a1_sum**2 / I**3
    )
    t = _one_plus_tau(z, spec)
    b = np.broadcast_to(spec.b1(z), (n,))
    b_sum = sum(b[j] ** 2 * np.prod(np.delete(t, j)) ** 2 for j in range(n))
    two_r2 = -n * m0 ** (-n - 1) * m02 / I + m0 ** (-n) * b_sum / I**3
    ratio = np.asarray(g.pdf(z), dtype=float) / np.asarray(f.pdf(z), dtype=float)
    weighted = sum((i + 1) * ratio[i] / t[i] for i in range(n))
    inv_N = (
        0.5 * n * (n + 1) * m0 ** (-n)
        + 0.5 * n * (n + 1) * m0 ** (-n - 2) * s2
        - m0 ** (-n - 1) * weighted
    ) / I

    return ExpansionBreakdown(
        const_term=float(const),
        r1_term=float(r1_term),
        two_r1_term=float(two_r1),
        two_r2_term=float(two_r2),
        inv_N_term=float(inv_N),
        mu=mu,
        sigma00_sq=float(s2),
        calI=I,
        A1=a1_sum,
        A2=a2_sum,
        rate_exponent=rate_exponent(spec, g.support),
        r1=spec.r1,
        r2=spec.r2,
        extras={"n": n, "z": z.tolist(), "strict_paper_conventions": inputs.strict_paper_conventions},
    )
