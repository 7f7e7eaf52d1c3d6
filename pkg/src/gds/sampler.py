"""Sequential weighted sampling without replacement.

Draw ``k`` picks index ``i`` with probability ``w_i / (remaining total)`` and
removes it.  A uniform variate ``u`` maps to the first index whose running
sum of active weights strictly exceeds ``u * total``; zero-weight points stay
in the pool but can never be picked.

Three interchangeable selectors share that rule and consume exactly one
uniform per draw, so they return the same indices for the same stream:

* :func:`gds_select` on a :class:`WeightedPool` (Fenwick tree,
  ``O(N + n log N)``),
* :func:`naive_select`, a linear rescan per draw (reference), and
* :func:`sweep_select`, one cumulative sum plus a short fix-point search per
  draw; fastest when ``n`` is small, which is what the experiments use.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import InsufficientMass, ZeroDenominator


def _as_weights(weights):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    return w


@dataclass(frozen=True)
class Subsample:
    """Ordered selected indices and, when the pool carries data, the points."""

    indices: tuple
    draws: np.ndarray | None = None

    @property
    def n(self):
        return len(self.indices)

    def to_list(self):
        return list(self.indices)


# rebuild sums once the remaining mass falls below this fraction of the start
_CANCEL = 1e-9


def _fenwick(weights):
    """Binary indexed tree (1-based list) over ``weights``."""
    n = len(weights)
    tree = np.zeros(n + 1)
    tree[1:] = weights
    # level-wise build: node i (lowest set bit 2^k) feeds i + 2^k
    step = 1
    while step < n:
        child = np.arange(step, n + 1, 2 * step)
        parent = child + step
        ok = parent <= n
        tree[parent[ok]] += tree[child[ok]]
        step *= 2
    return tree.tolist()


class WeightedPool:
    """Weights over a dataset with O(log N) draw-and-remove.

    Parameters
    ----------
    weights : array_like, shape (N,)
        Non-negative selection weights (``g_tilde / f_hat``).
    data : array_like, optional
        The points the weights belong to; returned in :attr:`Subsample.draws`.
    """

    def __init__(self, weights, data=None):
        self.weights = _as_weights(weights)
        self.data = None if data is None else np.asarray(data)
        if self.data is not None and len(self.data) != len(self.weights):
            raise ValueError("data and weights must have the same length")
        self.reset()

    def __len__(self):
        return len(self.weights)

    def _build(self):
        n = len(self.weights)
        self._fresh = _fenwick(self.weights)
        self._w = self.weights.tolist()
        self._fresh_total = math.fsum(self._w)
        self._fresh_positive = int(np.count_nonzero(self.weights))
        self._top = 1 << (n.bit_length() - 1) if n else 0

    def reset(self):
        """Reactivate every point."""
        if not hasattr(self, "_fresh"):
            self._build()
        self._tree = list(self._fresh)
        self._active = [True] * len(self._w)
        self._positive = self._fresh_positive
        self.total = self._fresh_total

    @property
    def active_count(self):
        return sum(self._active)

    def prefix(self, k):
        """Sum of active weights with index < k."""
        tree = self._tree
        s = 0.0
        while k > 0:
            s += tree[k]
            k &= k - 1
        return s

    def find(self, target):
        """First index whose active running sum strictly exceeds ``target``."""
        tree = self._tree
        n = len(self._w)
        pos = 0
        step = self._top
        while step:
            nxt = pos + step
            if nxt <= n and tree[nxt] <= target:
                pos = nxt
                target -= tree[nxt]
            step >>= 1
        if pos >= n or not self._active[pos] or self._w[pos] == 0.0:
            pos = self._nearest_selectable(min(pos, n - 1))
        return pos

    def _nearest_selectable(self, i):
        # only reached through rounding at the very top of the cumulative range
        for j in range(i, len(self._w)):
            if self._active[j] and self._w[j] > 0:
                return j
        for j in range(i - 1, -1, -1):
            if self._active[j] and self._w[j] > 0:
                return j
        raise InsufficientMass("no selectable point left in the pool")

    def remove(self, i):
        if not self._active[i]:
            raise ValueError(f"index {i} already removed")
        wi = self._w[i]
        self._active[i] = False
        if wi > 0:
            self._positive -= 1
            self.total -= wi
            tree = self._tree
            n = len(self._w)
            k = i + 1
            while k <= n:
                tree[k] -= wi
                k += k & -k
            if self._positive and not self.total > _CANCEL * self._fresh_total:
                self._rebuild_active()

    def _rebuild_active(self):
        # the running subtraction has cancelled most significant digits
        alive = np.where(self._active, self.weights, 0.0)
        self._tree = _fenwick(alive)
        self.total = math.fsum(alive.tolist())

    def draw(self, u):
        """Select with uniform ``u`` in [0, 1), remove, and return the index."""
        if self._positive == 0 or not self.total > 0:
            raise InsufficientMass("remaining pool mass is zero")
        i = self.find(u * self.total)
        self.remove(i)
        return i


def gds_select(pool, n, stream):
    """Draw ``n`` indices sequentially without replacement from ``pool``.

    Parameters
    ----------
    pool : WeightedPool
        Mutated in place; call :meth:`WeightedPool.reset` to reuse it.
    n : int
    stream : numpy.random.Generator
        Exactly ``n`` uniforms are consumed.

    Raises
    ------
    InsufficientMass
        If fewer than ``n`` positive-weight points remain.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > pool._positive:
        raise InsufficientMass(f"requested {n} draws but only {pool._positive} points have positive weight")
    us = stream.random(n)
    idx = tuple(pool.draw(float(u)) for u in us)
    draws = None if pool.data is None else pool.data[list(idx)]
    return Subsample(idx, draws)


def naive_select(weights, n, stream):
    """Linear-rescan reference for :func:`gds_select` (index tuple)."""
    w = _as_weights(weights).tolist()
    if n > sum(1 for x in w if x > 0):
        raise InsufficientMass(f"requested {n} draws but fewer points have positive weight")
    active = [x > 0 for x in w]
    out = []
    for u in stream.random(n):
        total = math.fsum(x for x, a in zip(w, active) if a)
        if not total > 0:
            raise InsufficientMass("remaining pool mass is zero")
        target = float(u) * total
        run = 0.0
        pick = None
        last = None
        for i, (x, a) in enumerate(zip(w, active)):
            if not a:
                continue
            run += x
            last = i
            if run > target:
                pick = i
                break
        pick = last if pick is None else pick
        active[pick] = False
        out.append(pick)
    return tuple(out)


def sweep_select(weights, n, stream, cumulative=None):
    """Cumulative-sum selector, equivalent to :func:`gds_select` for small ``n``.

    Each draw solves ``min j : C[j] - R(j) > t`` where ``C`` is the cumulative
    sum of all weights and ``R(j)`` the removed weight at indices ``<= j``, by
    iterating ``j <- searchsorted(C, t + R(j))`` to its fixed point.
    """
    w = weights if cumulative is not None else _as_weights(weights)
    c = np.cumsum(w) if cumulative is None else cumulative
    start_total = total = float(c[-1])
    size = len(c)
    removed = []
    removed_w = []
    picked = []
    for u in stream.random(n):
        remaining = total - math.fsum(removed_w)
        if removed and not remaining > _CANCEL * start_total:
            # cancellation: restart from the cumulative sum of what is left
            w = np.array(w, dtype=float)
            w[picked] = 0.0
            c = np.cumsum(w)
            total = remaining = float(c[-1])
            start_total = total
            removed, removed_w = [], []
        if not remaining > 0:
            raise InsufficientMass("remaining pool mass is zero")
        t = float(u) * remaining
        j = int(np.searchsorted(c, t, side="right"))
        while j < size:
            shift = sum(x for r, x in zip(removed, removed_w) if r <= j)
            nxt = int(np.searchsorted(c, t + shift, side="right"))
            if nxt == j:
                break
            j = nxt
        if j >= size or j in removed or w[j] == 0:
            j = _last_selectable(w, removed, min(j, size - 1))
        removed.append(j)
        removed_w.append(float(w[j]))
        picked.append(j)
    return tuple(picked)


def _last_selectable(w, removed, i):
    for j in range(i, -1, -1):
        if w[j] > 0 and j not in removed:
            return j
    raise InsufficientMass("no selectable point left")


def chain_prob_exact(weights, ordered_indices, exact=False):
    """Probability that sequential selection returns ``ordered_indices``.

    The product of ``w_{j_k} / (total - sum of earlier picks)`` evaluated in
    exact rational arithmetic (floats convert to fractions without rounding).

    Raises
    ------
    ZeroDenominator
        If the remaining mass reaches zero before the chain ends.
    """
    w = _as_weights(weights)
    idx = [int(i) for i in ordered_indices]
    if len(set(idx)) != len(idx):
        raise ValueError("indices must be distinct")
    if any(i < 0 or i >= len(w) for i in idx):
        raise ValueError("index out of range")
    fw = [Fraction(float(x)) for x in w]
    remaining = sum(fw, Fraction(0))
    prob = Fraction(1)
    for i in idx:
        if remaining == 0:
            raise ZeroDenominator("remaining mass is zero mid-chain")
        prob *= fw[i] / remaining
        remaining -= fw[i]
    return prob if exact else float(prob)
