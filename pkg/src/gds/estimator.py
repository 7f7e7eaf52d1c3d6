"""Density estimators feeding the selection weights.

Two estimators live here: a synthetic one that realizes the perturbed model

    f_hat(X_i) = f(X_i) * (1 + tau(X_i) + N^-r1 a1(X_i) + N^-r2 b1(X_i) W_i)

exactly, and a Gaussian kernel density estimate for realistic runs.  The
perturbation fields are drawn from a small closed catalog so configurations
stay serializable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import AllZeroWeights, ConfigError, DegenerateData, SpecBoundsViolated

CATALOG = {
    "constant": ("value",),
    "linear": ("intercept", "slope"),
    "sinusoidal": ("offset", "amplitude", "frequency", "phase"),
}
_DEFAULTS = {"offset": 0.0, "phase": 0.0, "frequency": 1.0, "intercept": 0.0}

CLAMP_DELTA = 1e-6


@dataclass(frozen=True)
class CatalogFunction:
    """A scalar field on the support, chosen from :data:`CATALOG`.

    The field depends on a point only through the mean of its coordinates
    ``t``: ``constant`` is ``value``, ``linear`` is ``intercept + slope*t``
    and ``sinusoidal`` is ``offset + amplitude*sin(2*pi*frequency*t + phase)``.
    Pass ``(M, q)`` arrays for q > 1; 0-d and 1-d inputs are read as q = 1.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in CATALOG:
            raise ValueError(f"unknown function kind {self.kind!r}; expected one of {sorted(CATALOG)}")
        given = dict(self.params)
        names = CATALOG[self.kind]
        unknown = set(given) - set(names)
        if unknown:
            raise ValueError(f"{self.kind} does not take parameters {sorted(unknown)}")
        values = []
        for name in names:
            if name in given:
                values.append((name, float(given[name])))
            elif name in _DEFAULTS:
                values.append((name, _DEFAULTS[name]))
            else:
                raise ValueError(f"{self.kind} requires parameter {name!r}")
        object.__setattr__(self, "params", tuple(values))

    @classmethod
    def constant(cls, value):
        return cls("constant", {"value": value}.items())

    def __getitem__(self, name):
        return dict(self.params)[name]

    @property
    def is_constant(self):
        return self.kind == "constant"

    def _t(self, x):
        x = np.asarray(x, dtype=float)
        return x.mean(axis=-1) if x.ndim >= 2 else x

    def __call__(self, x):
        t = self._t(x)
        p = dict(self.params)
        if self.kind == "constant":
            return np.full(t.shape, p["value"]) if t.ndim else p["value"]
        if self.kind == "linear":
            return p["intercept"] + p["slope"] * t
        return p["offset"] + p["amplitude"] * np.sin(2 * np.pi * p["frequency"] * t + p["phase"])

    def field(self, x):
        """Like ``__call__`` but returns a bare float for constants (broadcastable)."""
        if self.kind == "constant":
            return self.params[0][1]
        return self(x)

    def sup_abs(self, support, grid=1024):
        """sup |fn| over the support, on a dense grid of the mean coordinate."""
        if self.kind == "constant":
            return abs(self.params[0][1])
        lo = float(np.mean([s[0] for s in support]))
        hi = float(np.mean([s[1] for s in support]))
        return float(np.max(np.abs(self(np.linspace(lo, hi, grid)))))

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, record, field="function"):
        if isinstance(record, (int, float)):
            return cls.constant(record)
        if not isinstance(record, dict) or "kind" not in record:
            raise ConfigError("expected {kind, params}", field)
        try:
            return cls(record["kind"], dict(record.get("params", {})).items())
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field) from exc


ZERO = CatalogFunction.constant(0.0)


@dataclass(frozen=True)
class PerturbationSpec:
    """The perturbed-estimator model: bias ``tau + N^-r1 a1``, noise ``N^-r2 b1 W``.

    ``eps``, ``alpha`` and ``beta`` bound ``|tau|``, ``|a1|`` and ``|b1|``;
    left as ``None`` they are taken to be the grid suprema over the support.
    """

    tau: CatalogFunction = ZERO
    a1: CatalogFunction = ZERO
    b1: CatalogFunction = ZERO
    r1: float = 0.5
    r2: float = 0.5
    eps: float | None = None
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        for name in ("tau", "a1", "b1"):
            fn = getattr(self, name)
            if isinstance(fn, (int, float)):
                object.__setattr__(self, name, CatalogFunction.constant(fn))
        if not (self.r1 > 1 / 3 and self.r2 > 1 / 3):
            raise ValueError(f"need r1 > 1/3 and r2 > 1/3, got r1={self.r1}, r2={self.r2}")

    def bounds(self, support):
        """Return ``(eps, alpha, beta)`` after checking them on a dense grid.

        Raises
        ------
        SpecBoundsViolated
        """
        sups = {name: getattr(self, name).sup_abs(support) for name in ("tau", "a1", "b1")}
        eps = sups["tau"] if self.eps is None else self.eps
        alpha = sups["a1"] if self.alpha is None else self.alpha
        beta = sups["b1"] if self.beta is None else self.beta
        problems = []
        if sups["tau"] > eps:
            problems.append(f"sup|tau| = {sups['tau']:.6g} exceeds eps = {eps:.6g}")
        if not eps < 1:
            problems.append(f"eps = {eps:.6g} must be < 1")
        if sups["a1"] > alpha:
            problems.append(f"sup|a1| = {sups['a1']:.6g} exceeds alpha = {alpha:.6g}")
        if not alpha < 1 - eps:
            problems.append(f"alpha = {alpha:.6g} must be < 1 - eps = {1 - eps:.6g}")
        if sups["b1"] > beta or not math.isfinite(beta):
            problems.append(f"sup|b1| = {sups['b1']:.6g} exceeds beta = {beta:.6g}")
        if problems:
            raise SpecBoundsViolated("; ".join(problems))
        return eps, alpha, beta

    def tau_is_zero(self, support, threshold=1e-12):
        return self.tau.sup_abs(support) <= threshold

    def to_dict(self):
        out = {
            "tau": self.tau.to_dict(),
            "a1": self.a1.to_dict(),
            "b1": self.b1.to_dict(),
            "r1": self.r1,
            "r2": self.r2,
        }
        for name in ("eps", "alpha", "beta"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, record, field="perturbation"):
        if not isinstance(record, dict):
            raise ConfigError("expected an object", field)
        kwargs = {}
        for name in ("tau", "a1", "b1"):
            if name in record:
                kwargs[name] = CatalogFunction.from_dict(record[name], f"{field}.{name}")
        for name in ("r1", "r2"):
            if name not in record:
                raise ConfigError("missing required field", f"{field}.{name}")
            kwargs[name] = record[name]
        for name in ("eps", "alpha", "beta"):
            if name in record:
                kwargs[name] = record[name]
        try:
            return cls(**{k: float(v) if k in ("r1", "r2", "eps", "alpha", "beta") else v for k, v in kwargs.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field) from exc


@dataclass
class EstimateRealization:
    """One draw of the synthetic estimator at the data points.

    ``values[i] = f(X_i) * factor[i]`` with
    ``factor[i] = 1 + tau_N(X_i) + sigma_N(X_i) * noise[i]``.
    """

    values: np.ndarray
    noise: np.ndarray
    clamp_count: int = 0
    factor: np.ndarray | None = field(default=None, repr=False)


def synth_estimate(f, data, spec, N, stream, delta=CLAMP_DELTA, check_bounds=True):
    """Realize the perturbed estimator at ``data``.

    Parameters
    ----------
    f : DensitySpec
        True data density.
    data : ndarray, shape (N, q)
    spec : PerturbationSpec
    N : int
        Sample size entering the rates; must equal ``len(data)``.
    stream : numpy.random.Generator
        Noise stream, separate from the one that drew ``data``.
    delta : float
        Positivity guard: noise draws leaving ``factor <= delta`` are redrawn
        and counted in ``clamp_count``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if N != len(data):
        raise ValueError(f"N={N} must equal the number of data points ({len(data)})")
    if check_bounds:
        spec.bounds(f.support)
    bias = spec.tau.field(data) + N ** (-spec.r1) * spec.a1.field(data)
    scale = N ** (-spec.r2) * spec.b1.field(data)
    noise = stream.standard_normal(N)
    factor = noise * scale
    factor += 1.0 + bias
    clamps = 0
    bad = np.flatnonzero(factor <= delta)
    rounds = 0
    while bad.size:
        rounds += 1
        b = bias[bad] if np.ndim(bias) else bias
        s = scale[bad] if np.ndim(scale) else scale
        if np.any(np.asarray(s) == 0) or rounds > 1000:
            raise SpecBoundsViolated("estimator factor stays below the positivity guard")
        clamps += bad.size
        noise[bad] = stream.standard_normal(bad.size)
        factor[bad] = 1.0 + b + s * noise[bad]
        bad = bad[factor[bad] <= delta]
    values = f.pdf(data, checked=False)
    values *= factor
    return EstimateRealization(values=values, noise=noise, clamp_count=int(clamps), factor=factor)


def weights(g, est, data):
    """Selection weights ``g_tilde(X_i) / f_hat(X_i)``.

    ``g`` is the target :class:`DensitySpec` (its ``constant`` gives
    ``g_tilde = g / c``); ``est`` is an :class:`EstimateRealization` or an
    array of positive estimates.  Points outside the target support get
    weight 0.
    """
    values = est.values if isinstance(est, EstimateRealization) else np.asarray(est, dtype=float)
    if not np.all(values > 0) or not np.all(np.isfinite(values)):
        raise ValueError("density estimates must be positive and finite")
    w = g.pdf_tilde(data) / values
    if not np.any(w > 0):
        raise AllZeroWeights("no data point falls in the target support")
    return w


# -- kernel density estimate -----------------------------------------------------------


def silverman_bandwidth(data):
    """Silverman's rule of thumb (the multivariate normal-reference form for q > 1)."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n, q = data.shape
    if n < 2:
        raise DegenerateData("rule-based bandwidth needs at least two points")
    sd = data.std(axis=0, ddof=1)
    if q == 1:
        q75, q25 = np.percentile(data[:, 0], [75, 25])
        iqr = (q75 - q25) / 1.34
        spread = min(sd[0], iqr) if iqr > 0 else sd[0]
        h = 0.9 * spread * n ** (-0.2)
    else:
        h = (4.0 / (q + 2)) ** (1.0 / (q + 4)) * n ** (-1.0 / (q + 4)) * float(np.mean(sd))
    if not h > 0:
        raise DegenerateData("all data points coincide; bandwidth would be zero")
    return float(h)


@dataclass(frozen=True)
class GaussianKDE:
    data: np.ndarray
    bandwidth: float

    @property
    def dim(self):
        return self.data.shape[1]

    def __call__(self, x):
        return kde_eval(self, x)


def kde_fit(data, bandwidth="silverman"):
    """Fit a Gaussian-kernel density estimate.

    ``bandwidth`` is a positive number or ``"silverman"``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if len(data) < 1:
        raise DegenerateData("no data")
    if bandwidth == "silverman":
        h = silverman_bandwidth(data)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
    data = data.copy()
    data.flags.writeable = False
    return GaussianKDE(data, h)


def kde_eval(model, x, chunk_elems=4_000_000):
    """(1 / (N h^q)) * sum_i K((x - X_i) / h) with the standard normal kernel K."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 or (x.ndim == 1 and model.dim > 1)
    pts = x.reshape(-1, model.dim)
    n, q = model.data.shape
    h = model.bandwidth
    norm = 1.0 / (n * h**q * (2 * np.pi) ** (q / 2))
    out = np.empty(len(pts))
    step = max(1, chunk_elems // n)
    for start in range(0, len(pts), step):
        block = pts[start : start + step]
        d2 = np.zeros((len(block), n))
        for axis in range(q):
            d2 += ((block[:, axis, None] - model.data[None, :, axis]) / h) ** 2
        out[start : start + step] = norm * np.exp(-0.5 * d2).sum(axis=1)
    if scalar:
        return float(out[0])
    return out.reshape(x.shape[:-1] if (x.ndim >= 2 and model.dim > 1) or (x.ndim >= 2 and x.shape[-1] == 1) else x.shape)


def kde_estimate(model, data=None):
    """KDE values at the data points (the model's own sample by default)."""
    return kde_eval(model, model.data if data is None else data)
