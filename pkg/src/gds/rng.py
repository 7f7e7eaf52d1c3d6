"""Deterministic per-task random streams.

Every replication owns three independent streams (``data``, ``noise``,
``selection``) whose PCG64 state is a BLAKE2b hash of
``(master_seed, N, replication, purpose)``.  Streams therefore do not depend
on scheduling or on how replications are split across workers.
"""
from __future__ import annotations

import hashlib

import numpy as np

PURPOSES = ("data", "noise", "selection")
_U64 = 1 << 64


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    return seed


def stream_state(master_seed, N, replication, purpose):
    """The 128-bit ``(state, increment)`` pair for one stream."""
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    key = f"gds/{check_seed(master_seed)}/{int(N)}/{int(replication)}/{purpose}".encode()
    digest = hashlib.blake2b(key, digest_size=32).digest()
    state = int.from_bytes(digest[:16], "little")
    inc = int.from_bytes(digest[16:], "little") | 1
    return state, inc


def _pcg_state(state, inc):
    return {
        "bit_generator": "PCG64",
        "state": {"state": state, "inc": inc},
        "has_uint32": 0,
        "uinteger": 0,
    }


def derive_stream(master_seed, N, replication, purpose):
    """A fresh :class:`numpy.random.Generator` for one task."""
    bg = np.random.PCG64()
    bg.state = _pcg_state(*stream_state(master_seed, N, replication, purpose))
    return np.random.Generator(bg)


class StreamFactory:
    """Reseeds one generator per purpose in place, avoiding construction cost.

    The generator returned by :meth:`get` is reseeded by the next call with
    the same purpose, so consume it first.
    """

    def __init__(self, master_seed):
        self.master_seed = check_seed(master_seed)
        self._bits = {p: np.random.PCG64() for p in PURPOSES}
        self._gens = {p: np.random.Generator(b) for p, b in self._bits.items()}

    def get(self, N, replication, purpose):
        self._bits[purpose].state = _pcg_state(*stream_state(self.master_seed, N, replication, purpose))
        return self._gens[purpose]
