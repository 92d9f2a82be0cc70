"""Named per-trajectory random streams.

Every trajectory owns five independent Philox generators keyed by
``(master_seed, sample_index, stream_id)``.  All consumers draw uniform
doubles only, so a block draw ``rng.random(n)`` is interchangeable with ``n``
scalar draws.  The consumption contract, shared by the quantum and the
classical engines, is:

* ``coin``: one double per time step; the step is a control step iff ``u < p``.
* ``perm``: per chaotic step, ``L - 1`` doubles for the Fisher-Yates
  permutation, then one more for the perturbation site if enabled.
* ``site``: per control step, one double for the target tie-break followed
  by ``L`` doubles for the per-site Bernoulli(q) decisions.
* ``meas``: one double per measurement whose outcome is not certain.
* ``init``: initial-state preparation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAM_NAMES = ("coin", "perm", "site", "meas", "init")


def make_generator(master_seed: int, sample_index: int, stream_id: int) -> np.random.Generator:
    seq = np.random.SeedSequence([int(master_seed), int(sample_index), int(stream_id)])
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class Streams:
    coin: np.random.Generator
    perm: np.random.Generator
    site: np.random.Generator
    meas: np.random.Generator
    init: np.random.Generator

    @classmethod
    def for_sample(cls, master_seed: int, sample_index: int) -> "Streams":
        return cls(*(make_generator(master_seed, sample_index, k) for k in range(len(STREAM_NAMES))))
