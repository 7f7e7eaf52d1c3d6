"""Monte Carlo verification of the ratio-error expansion.

For each ``N`` on the grid, every replication draws a fresh dataset from
``f``, a synthetic estimate ``f_hat``, and one g-DS subsample of size ``n``.
Selected tuples are binned on a fixed joint histogram over the target
support and compared, cell by cell, with the probability the exact target
law assigns to that cell.  The histogram carries an O(h^2) discretization
bias that is the same for every N: it moves the limit, not the slope.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import logging
import math

import numpy as np

from .densities import DensitySpec
from .errors import AllZeroWeights, GDSError, InsufficientSignal, NonFinite
from .estimator import PerturbationSpec, synth_estimate
from .expansion import ExpansionInputs, rate_exponent, theorem_ratio
from .quadrature import DEFAULT_RULE, QuadratureRule
from .rng import StreamFactory, check_seed
from .sampler import sweep_select

log = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {
    "slope": 0.15,  # |fitted slope + exponent|
    "r_squared": 0.8,
    "z": 4.0,  # bias-floor z-score at the largest N
    "flat_slope": 0.1,  # |slope| against the wrong limit 0 when tau != 0
    "exclusion": 2.0,  # rate_fit drops points with |signal| < exclusion * std_err
    "clamp_rate": 1e-4,
}


@dataclass(frozen=True)
class ExperimentConfig:
    f: DensitySpec
    g: DensitySpec
    spec: PerturbationSpec
    n: int = 2
    N_grid: tuple = tuple(2**k for k in range(12, 18))
    replications: int = 200_000
    bins: tuple = (8,)
    eval_cells: tuple = ()
    master_seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    threads: int = 1
    strict_paper_conventions: bool = True
    quad: QuadratureRule = DEFAULT_RULE
    min_replications: int = 1000

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        grid = tuple(int(N) for N in self.N_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("N_grid must be non-empty and strictly ascending")
        if grid[0] < self.n:
            raise ValueError("every N must be at least n")
        object.__setattr__(self, "N_grid", grid)
        if self.replications < self.min_replications:
            raise ValueError(f"replications must be at least {self.min_replications}")
        bins = tuple(int(b) for b in np.atleast_1d(self.bins))
        if len(bins) == 1 and self.g.dim > 1:
            bins = bins * self.g.dim
        if len(bins) != self.g.dim or any(b < 1 for b in bins):
            raise ValueError("bins needs one positive count per dimension")
        object.__setattr__(self, "bins", bins)
        cells = tuple(tuple(int(c) for c in cell) for cell in self.eval_cells)
        width = self.n * self.g.dim
        for cell in cells:
            if len(cell) != width:
                raise ValueError(f"eval cell {cell} needs {width} bin indices (n * q)")
            for pos, c in enumerate(cell):
                if not 0 <= c < bins[pos % self.g.dim]:
                    raise ValueError(f"eval cell {cell} is outside the bin range")
        object.__setattr__(self, "eval_cells", cells)
        object.__setattr__(self, "master_seed", check_seed(self.master_seed))
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances or {})
        object.__setattr__(self, "tolerances", tol)
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if not self.f.contains_support(self.g):
            raise ValueError("target support must lie inside the data support")

    @property
    def edges(self):
        return [np.linspace(lo, hi, b + 1) for (lo, hi), b in zip(self.g.support, self.bins)]

    def with_updates(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ExperimentConfig(**fields)


# -- replications ------------------------------------------------------------------


@dataclass
class ReplicationBatch:
    """Selected tuples of a block of replications at one N."""

    N: int
    start: int
    indices: np.ndarray  # (R, n) dataset indices
    points: np.ndarray  # (R, n, q) selected points
    clamps: np.ndarray  # (R,) clamp counts

    @property
    def replications(self):
        return len(self.indices)

    @property
    def clamp_rate(self):
        return float(self.clamps.sum()) / (self.replications * self.N)


def _run_block(cfg, N, start, stop):
    streams = StreamFactory(cfg.master_seed)
    count = stop - start
    q = cfg.g.dim
    indices = np.empty((count, cfg.n), dtype=np.int64)
    points = np.empty((count, cfg.n, q))
    clamps = np.zeros(count, dtype=np.int64)
    g_tilde = cfg.g
    for row, r in enumerate(range(start, stop)):
        try:
            data = cfg.f.sample(N, streams.get(N, r, "data"))
            est = synth_estimate(cfg.f, data, cfg.spec, N, streams.get(N, r, "noise"), check_bounds=False)
            w = g_tilde.pdf_tilde(data) / est.values
            c = np.cumsum(w)
            if not c[-1] > 0:
                raise AllZeroWeights("no data point falls in the target support")
            idx = sweep_select(w, cfg.n, streams.get(N, r, "selection"), cumulative=c)
        except GDSError as exc:
            raise type(exc)(f"replication {r} at N={N}: {exc}") from exc
        indices[row] = idx
        points[row] = data[list(idx)]
        clamps[row] = est.clamp_count
    return ReplicationBatch(N, start, indices, points, clamps)


def _blocks(total, parts):
    edges = np.linspace(0, total, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def merge_batches(batches):
    """Concatenate blocks in replication order, whatever order they arrive in."""
    batches = sorted(batches, key=lambda b: b.start)
    return ReplicationBatch(
        batches[0].N,
        batches[0].start,
        np.concatenate([b.indices for b in batches]),
        np.concatenate([b.points for b in batches]),
        np.concatenate([b.clamps for b in batches]),
    )


def run_replications(cfg, N, threads=None, replications=None):
    """Run every replication at one N.

    Streams are derived from ``(master_seed, N, replication, purpose)``, so
    the output does not depend on ``threads``.
    """
    if N not in cfg.N_grid:
        raise ValueError(f"N={N} is not on the configured grid")
    cfg.spec.bounds(cfg.f.support)
    total = cfg.replications if replications is None else int(replications)
    threads = cfg.threads if threads is None else int(threads)
    if threads <= 1:
        return _run_block(cfg, N, 0, total)
    blocks = _blocks(total, 4 * threads)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        batches = list(pool.map(_run_block, [cfg] * len(blocks), [N] * len(blocks), *zip(*blocks)))
    return merge_batches(batches)


# -- histogram ratio ---------------------------------------------------------------


@dataclass
class JointHistogram:
    """Sparse counts over the joint ``n * q`` bin grid."""

    shape: tuple
    counts: dict = field(default_factory=dict)
    total: int = 0
    outside: int = 0

    def add(self, cell_ids):
        ids, cnt = np.unique(np.asarray(cell_ids), return_counts=True)
        for i, c in zip(ids.tolist(), cnt.tolist()):
            if i < 0:
                self.outside += c
            else:
                self.counts[i] = self.counts.get(i, 0) + c
        self.total += int(len(cell_ids))
        return self

    def merge(self, other):
        if other.shape != self.shape:
            raise ValueError("histogram shapes differ")
        out = JointHistogram(self.shape, dict(self.counts), self.total + other.total, self.outside + other.outside)
        for i, c in other.counts.items():
            out.counts[i] = out.counts.get(i, 0) + c
        return out

    def count(self, cell):
        return self.counts.get(int(np.ravel_multi_index(cell, self.shape)), 0)


def bin_points(points, cfg):
    """Flat joint cell id per tuple; -1 for tuples leaving the grid."""
    pts = np.asarray(points, dtype=float)
    R = len(pts)
    pts = pts.reshape(R, cfg.n, cfg.g.dim)
    shape = tuple(cfg.bins) * cfg.n
    coords = []
    valid = np.ones(R, dtype=bool)
    for k in range(cfg.n):
        for d, e in enumerate(cfg.edges):
            x = pts[:, k, d]
            b = np.searchsorted(e, x, side="right") - 1
            b = np.where(x == e[-1], len(e) - 2, b)  # closed upper edge
            valid &= (b >= 0) & (b < len(e) - 1)
            coords.append(np.clip(b, 0, len(e) - 2))
    flat = np.ravel_multi_index(coords, shape)
    return np.where(valid, flat, -1), shape


def histogram(batch, cfg):
    ids, shape = bin_points(batch.points, cfg)
    return JointHistogram(shape).add(ids)


@dataclass(frozen=True)
class RatioEstimate:
    """Empirical ratio error in one joint cell; ``empty`` marks an EmptyCell."""

    cell: tuple
    ratio_minus_one: float
    std_err: float
    clamp_rate: float
    N: int
    count: int = 0
    expected: float = 0.0
    empty: bool = False

    @property
    def cell_id(self):
        return "_".join(str(c) for c in self.cell)


def cell_probability(cfg, cell):
    """Mass the product target law puts on a joint cell."""
    edges = cfg.edges
    q = cfg.g.dim
    prob = 1.0
    for k in range(cfg.n):
        box = []
        for d in range(q):
            b = cell[k * q + d]
            box.append((edges[d][b], edges[d][b + 1]))
        prob *= cfg.g.box_mass(box, cfg.quad)
    return prob


def cell_midpoints(cfg, cell):
    """The ``(n, q)`` tuple of bin centers for a joint cell."""
    edges = cfg.edges
    q = cfg.g.dim
    return np.array(
        [[0.5 * (edges[d][cell[k * q + d]] + edges[d][cell[k * q + d] + 1]) for d in range(q)] for k in range(cfg.n)]
    )


def all_cells(cfg):
    return [tuple(c) for c in np.ndindex(*(tuple(cfg.bins) * cfg.n))]


def histogram_ratio(batch, cfg, N=None, cells=None, hist=None):
    """Per-cell ``count / (R * P_g(cell)) - 1`` with its binomial standard error."""
    N = batch.N if N is None else N
    hist = histogram(batch, cfg) if hist is None else hist
    if hist.total < cfg.min_replications:
        raise ValueError(f"need at least {cfg.min_replications} tuples, got {hist.total}")
    cells = cfg.eval_cells or all_cells(cfg) if cells is None else cells
    R = hist.total
    clamp = batch.clamp_rate
    out = []
    for cell in cells:
        cell = tuple(int(c) for c in cell)
        k = hist.count(cell)
        p0 = cell_probability(cfg, cell)
        if k == 0 or p0 <= 0:
            out.append(RatioEstimate(cell, math.nan, math.nan, clamp, N, k, p0, empty=True))
            continue
        phat = k / R
        se = math.sqrt(phat * (1 - phat) / R) / p0
        out.append(RatioEstimate(cell, phat / p0 - 1.0, se, clamp, N, k, p0))
    return out


# -- rate fit ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple  # (log N, log |error|) of the fitted points
    excluded: tuple = ()  # N values left out
    limit: float = 0.0

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points": [list(p) for p in self.points],
            "excluded": list(self.excluded),
            "limit": self.limit,
        }


def _triples(estimates):
    out = []
    for e in estimates:
        if isinstance(e, RatioEstimate):
            out.append((e.N, e.ratio_minus_one, e.std_err))
        else:
            N, value, se = e
            out.append((N, value, se))
    return sorted(out)


def rate_fit(estimates, limit=0.0, exclusion=2.0):
    """Weighted least-squares slope of ``log|ratio - limit|`` against ``log N``.

    Points whose signal ``|ratio - limit|`` is below ``exclusion * std_err``
    are dropped; the rest are weighted by ``(signal / std_err)^2``, the
    inverse variance of ``log|signal|``.

    Raises
    ------
    InsufficientSignal
        When more than half of the points are excluded (or fewer than two
        remain).
    """
    rows = _triples(estimates)
    if len(rows) < 4:
        raise ValueError("rate_fit needs at least 4 grid points")
    keep, excluded = [], []
    for N, value, se in rows:
        signal = abs(value - limit)
        if not (math.isfinite(signal) and math.isfinite(se)) or signal < exclusion * se or signal == 0:
            excluded.append(N)
        else:
            keep.append((N, signal, se))
    if len(excluded) > len(rows) / 2 or len(keep) < 2:
        raise InsufficientSignal(
            f"{len(excluded)} of {len(rows)} points are below {exclusion} standard errors", excluded
        )
    x = np.log([k[0] for k in keep])
    y = np.log([k[1] for k in keep])
    se = np.array([k[2] for k in keep])
    sig = np.array([k[1] for k in keep])
    w = np.where(se > 0, (sig / np.where(se > 0, se, 1.0)) ** 2, 1.0)
    if np.all(se <= 0):
        w = np.ones_like(x)
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    slope = float((w * (x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sst = (w * (y - ym) ** 2).sum()
    r2 = 1.0 if sst == 0 else float(1.0 - (w * resid**2).sum() / sst)
    r2 = min(max(r2, 0.0), 1.0)
    return RateFit(slope, intercept, r2, tuple(zip(x.tolist(), y.tolist())), tuple(excluded), float(limit))


# -- driver ----------------------------------------------------------------------------


def run_experiment(cfg, threads=None):
    """Ratio estimates for every eval cell at every N: ``{N: [RatioEstimate]}``."""
    results = {}
    for N in cfg.N_grid:
        log.info("N=%d: %d replications", N, cfg.replications)
        batch = run_replications(cfg, N, threads)
        results[N] = histogram_ratio(batch, cfg, N)
    return results


def _prediction(breakdown, N):
    total = breakdown.total(N)
    if math.isfinite(total):
        return total, True
    # 1/N group diverges: keep the lower-order groups only
    return (
        breakdown.const_term
        + N ** (-breakdown.r1) * breakdown.r1_term
        + N ** (-2 * breakdown.r1) * breakdown.two_r1_term
        + N ** (-2 * breakdown.r2) * breakdown.two_r2_term
    ), False


def compare_to_theory(cfg, results):
    """Per-cell comparison of the empirical ratios with the expansion.

    Returns a JSON-ready report.  For an asymptotically unbiased estimator
    the fitted slope must match ``-min(r1, 2 r2, 1)``; otherwise every cell
    must sit at the bias floor ``const_term`` at the largest N while the fit
    against the limit 0 shows no decay.
    """
    tol = cfg.tolerances
    rate = rate_exponent(cfg.spec, cfg.g.support)
    cells = sorted({e.cell for ests in results.values() for e in ests})
    Ns = sorted(results)
    report_cells = []
    passed = True
    for cell in cells:
        per_N = [next(e for e in results[N] if e.cell == cell) for N in Ns]
        entry = {"cell": list(cell), "cell_id": "_".join(map(str, cell))}
        z = cell_midpoints(cfg, cell)
        try:
            bd = theorem_ratio(
                ExpansionInputs(cfg.f, cfg.g, cfg.spec, cfg.n, z, cfg.quad, cfg.strict_paper_conventions),
                allow_nonfinite=True,
            )
            entry["expansion"] = bd.to_dict(Ns)
        except NonFinite as exc:
            bd = None
            entry["expansion"] = {"error": str(exc)}
        rows = []
        for e in per_N:
            row = {"N": e.N, "ratio_minus_one": e.ratio_minus_one, "std_err": e.std_err, "empty": e.empty}
            if bd is not None and not e.empty:
                pred, complete = _prediction(bd, e.N)
                row["predicted"] = pred
                row["prediction_complete"] = complete
                row["z"] = (e.ratio_minus_one - pred) / e.std_err
            rows.append(row)
        entry["points"] = rows
        checks = {}
        if "exponent" in rate:
            target = -rate["exponent"]
            try:
                fit = rate_fit(per_N, 0.0, tol["exclusion"])
                entry["fit"] = fit.to_dict()
                ok = abs(fit.slope - target) <= tol["slope"] and fit.r_squared >= tol["r_squared"]
                checks["slope"] = {"target": target, "slope": fit.slope, "r_squared": fit.r_squared, "pass": ok}
            except InsufficientSignal as exc:
                entry["fit"] = {"error": "InsufficientSignal", "message": str(exc), "excluded": exc.excluded}
                checks["slope"] = {"target": target, "pass": False, "reason": "InsufficientSignal"}
        else:
            last = per_N[-1]
            floor = bd.const_term if bd is not None else math.nan
            zf = (last.ratio_minus_one - floor) / last.std_err if not last.empty else math.nan
            checks["bias_floor"] = {"const_term": floor, "N": last.N, "z": zf, "pass": bool(abs(zf) <= tol["z"])}
            try:
                fit = rate_fit(per_N, 0.0, tol["exclusion"])
                entry["fit"] = fit.to_dict()
                ok = abs(fit.slope) < tol["flat_slope"]
                checks["no_decay"] = {"slope": fit.slope, "pass": ok}
            except InsufficientSignal as exc:
                entry["fit"] = {"error": "InsufficientSignal", "message": str(exc), "excluded": exc.excluded}
                checks["no_decay"] = {"reason": "InsufficientSignal", "pass": True}
        clamp_max = max(e.clamp_rate for e in per_N)
        checks["clamp_rate"] = {"max": clamp_max, "pass": clamp_max < tol["clamp_rate"]}
        entry["checks"] = checks
        entry["verdict"] = "PASS" if all(c["pass"] for c in checks.values()) else "FAIL"
        passed &= entry["verdict"] == "PASS"
        report_cells.append(entry)
    return {
        "rate_exponent": rate,
        "tolerances": tol,
        "cells": report_cells,
        "verdict": "PASS" if passed else "FAIL",
    }


# -- output files ------------------------------------------------------------------------

RESULT_COLUMNS = ("N", "cell_id", "ratio_minus_one", "std_err", "clamp_rate")


def _g17(x):
    return "%.17g" % x


def results_csv(results):
    """CSV text for :data:`RESULT_COLUMNS`, floats with 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for N in sorted(results):
        for e in results[N]:
            w.writerow([e.N, e.cell_id, _g17(e.ratio_minus_one), _g17(e.std_err), _g17(e.clamp_rate)])
    return buf.getvalue()


def read_results_csv(path):
    """Parse a results file back into ``{N: [RatioEstimate]}``."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"results file lacks columns {sorted(missing)}")
        for row in reader:
            N = int(row["N"])
            cell = tuple(int(c) for c in row["cell_id"].split("_"))
            value = float(row["ratio_minus_one"])
            se = float(row["std_err"])
            out.setdefault(N, []).append(
                RatioEstimate(cell, value, se, float(row["clamp_rate"]), N, empty=not math.isfinite(se))
            )
    return out


def fits_by_cell(results, limit=0.0, exclusion=2.0):
    """Rate fit per cell; InsufficientSignal is recorded, not raised."""
    cells = sorted({e.cell for ests in results.values() for e in ests})
    out = {}
    for cell in cells:
        per_N = [e for N in sorted(results) for e in results[N] if e.cell == cell]
        key = "_".join(map(str, cell))
        lim = limit(cell) if callable(limit) else limit
        try:
            out[key] = rate_fit(per_N, lim, exclusion).to_dict()
        except InsufficientSignal as exc:
            out[key] = {"error": "InsufficientSignal", "message": str(exc), "excluded": exc.excluded, "limit": lim}
    return out


def dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def sanitize(obj):
    """Replace non-finite floats by None so the result is strict JSON."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
