"""Constrained ("Fibonacci") Hilbert space of L qubits on a ring.

Configurations are bit-packed integers with site 1 in the least-significant
bit.  Sites are labelled 1..L in every public function of this package; the
bit holding site ``j`` is ``1 << (j - 1)``.  Strings such as ``"010010"``
list site 1 first.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

__all__ = [
    "FibBasis",
    "enumerate_basis",
    "is_valid",
    "index_of",
    "count_states",
    "sample_config",
    "config_from_string",
    "config_to_string",
    "MAX_ENUMERATE_L",
]

MAX_ENUMERATE_L = 36


def _check_size(L: int) -> None:
    if L < 4:
        raise ValueError(f"L={L}: need at least 4 sites")
    if L % 2:
        raise ValueError(f"L={L}: only even ring sizes are supported")


def is_valid(config: int, L: int) -> bool:
    """True iff ``config`` has no pair of cyclically adjacent 1s."""
    config = int(config)
    if config < 0 or config >> L:
        return False
    rotated = (config >> 1) | ((config & 1) << (L - 1))
    return config & rotated == 0


@dataclass(frozen=True, eq=False)
class FibBasis:
    """Sorted list of valid ring configurations for ``L`` sites."""

    L: int
    states: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, config):
        """Ordinal(s) of ``config``; accepts an int or an integer array."""
        arr = np.asarray(config, dtype=np.int64)
        idx = np.searchsorted(self.states, arr)
        idx_c = np.minimum(idx, self.dim - 1)
        if not np.all(self.states[idx_c] == arr):
            raise ValueError(f"configuration not in the L={self.L} basis: {config!r}")
        return int(idx_c) if idx_c.ndim == 0 else idx_c

    @cached_property
    def index_map(self) -> dict[int, int]:
        return {int(s): k for k, s in enumerate(self.states)}

    @cached_property
    def bits(self) -> np.ndarray:
        """``(dim, L)`` uint8 occupation table; column ``j - 1`` is site ``j``."""
        shifts = np.arange(self.L, dtype=np.int64)
        return ((self.states[:, None] >> shifts) & 1).astype(np.uint8)

    @cached_property
    def tables(self) -> dict:
        """Per-basis memo of derived lookup tables (gate pairs, partitions, regions)."""
        return {}

    def table(self, key, build):
        cache = self.tables
        if key not in cache:
            cache[key] = build()
        return cache[key]


def enumerate_basis(L: int) -> FibBasis:
    """Enumerate every valid configuration of an even ring of ``L`` sites."""
    _check_size(L)
    if L > MAX_ENUMERATE_L:
        raise ValueError(f"L={L} exceeds the enumeration cap {MAX_ENUMERATE_L}; use count_states")
    # open chains grouped by the value of the last bit
    end0 = np.zeros(1, dtype=np.int64)
    end1 = np.ones(1, dtype=np.int64)
    for n in range(1, L):
        end0, end1 = np.concatenate([end0, end1]), end0 | np.int64(1 << n)
    states = np.concatenate([end0, end1])
    wrap = np.int64(1 | (1 << (L - 1)))
    states = states[(states & wrap) != wrap]
    states.sort()
    states.setflags(write=False)
    return FibBasis(L=L, states=states)


def index_of(config: int, basis: FibBasis) -> int:
    return basis.index_of(config)


@lru_cache(maxsize=None)
def _chain_count(m: int) -> int:
    """Number of open chains of ``m`` sites with no adjacent 1s (m >= -1)."""
    if m <= 0:
        return 1
    a, b = 1, 2  # m = 0, m = 1
    for _ in range(m - 1):
        a, b = b, a + b
    return b


def count_states(L: int) -> int:
    """Dimension of the ring space for any ``L >= 3`` (a Lucas number)."""
    if L < 3:
        raise ValueError("count_states needs L >= 3")
    return _chain_count(L - 1) + _chain_count(L - 3)


def _sample_chain(m: int, rng: np.random.Generator) -> list[int]:
    out = []
    prev = 0
    for remaining in range(m, 0, -1):
        if prev:
            out.append(0)
            prev = 0
            continue
        p_one = _chain_count(remaining - 2) / _chain_count(remaining)
        prev = int(rng.random() < p_one)
        out.append(prev)
    return out


def sample_config(L: int, rng: np.random.Generator) -> int:
    """Draw a configuration uniformly from the ring space of ``L`` sites.

    Works for any ``L`` (no enumeration); consumes one double for site 1 and
    one per subsequent unforced site.
    """
    _check_size(L)
    p_first = _chain_count(L - 3) / count_states(L)
    if rng.random() < p_first:
        bits = [1, 0] + _sample_chain(L - 3, rng) + [0]
    else:
        bits = [0] + _sample_chain(L - 1, rng)
    return sum(b << k for k, b in enumerate(bits))


def config_from_string(s: str) -> int:
    """Parse a site-1-first bitstring such as ``"010010"``."""
    return sum(1 << k for k, ch in enumerate(s) if ch == "1")


def config_to_string(config: int, L: int) -> str:
    return "".join("1" if (int(config) >> k) & 1 else "0" for k in range(L))
