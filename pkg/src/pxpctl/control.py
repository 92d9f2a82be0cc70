"""Two-stage adaptive control toward the period-3 vacuum orbit.

Stage 1 measures the even- and odd-sublattice magnetizations and picks the
closest orbit state.  Stage 2 sweeps the sites in ascending order; each site
is visited with probability ``q`` and, if a sublattice domain wall sits
between ``j`` and ``j + 2``, the mismatched one of the two is flipped with a
constrained PXP gate.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .hilbert import FibBasis
from .statevec import Partition, PureState, apply_pxp_gate, measure_diagonal, site_bit

__all__ = [
    "TargetPattern",
    "ControlOutcome",
    "sublattice_partition",
    "domain_wall_partition",
    "site_partition",
    "measure_sublattice_magnetizations",
    "target_scores",
    "select_target",
    "correction_site",
    "local_correction_at",
    "control_step",
]


class TargetPattern(enum.Enum):
    ALL_ZERO = 0  # |0000...>
    ONE_ON_ODD = 1  # |1010...>, 1s on odd sites
    ONE_ON_EVEN = 2  # |0101...>, 1s on even sites

    def target_bit(self, site: int) -> int:
        if self is TargetPattern.ALL_ZERO:
            return 0
        odd = site % 2 == 1
        return int(odd) if self is TargetPattern.ONE_ON_ODD else int(not odd)

    def config(self, L: int) -> int:
        return sum(self.target_bit(j) << (j - 1) for j in range(1, L + 1))


@dataclass(frozen=True)
class ControlOutcome:
    m_even: int
    m_odd: int
    target: TargetPattern
    corrections_applied: int


def _sublattice_bits(L: int, parity: str) -> list[int]:
    first = 2 if parity == "even" else 1
    return [j - 1 for j in range(first, L + 1, 2)]


def sublattice_partition(basis: FibBasis, parity: str) -> Partition:
    """Eigen-classes of ``M_even`` or ``M_odd``; class ``n`` = number of 1s, value ``2n - L/2``."""

    def build():
        cols = _sublattice_bits(basis.L, parity)
        n = basis.bits[:, cols].sum(axis=1).astype(np.intp)
        half = len(cols)
        return Partition(f"M_{parity}", n, tuple(2 * k - half for k in range(half + 1)))

    return basis.table(("msub", parity), build)


def domain_wall_partition(basis: FibBasis, j: int) -> Partition:
    """``Z_j Z_{j+2}``: class 0 (value +1) without a wall, class 1 (value -1) with one."""

    def build():
        a, b = site_bit(j, basis.L), site_bit(j + 2, basis.L)
        cls = (basis.bits[:, a] ^ basis.bits[:, b]).astype(np.intp)
        return Partition(f"Z{j}Z{j + 2}", cls, (1, -1))

    return basis.table(("dw", site_bit(j, basis.L)), build)


def site_partition(basis: FibBasis, j: int) -> Partition:
    """``Z_j`` with eigenvalue ``(-1)**(b + 1)``: class b."""

    def build():
        return Partition(f"Z{j}", basis.bits[:, site_bit(j, basis.L)].astype(np.intp), (-1, 1))

    return basis.table(("z", site_bit(j, basis.L)), build)


def measure_sublattice_magnetizations(
    state: PureState, rng: np.random.Generator, backend: str = "direct"
) -> tuple[int, int, PureState]:
    """Collective measurement of ``M_even`` and then ``M_odd``.

    ``backend="ancilla"`` routes both measurements through the ancilla-register
    circuit of :mod:`pxpctl.magmeter` instead of the direct projector.
    """
    if backend == "direct":
        rec_e, state = measure_diagonal(state, sublattice_partition(state.basis, "even"), rng)
        rec_o, state = measure_diagonal(state, sublattice_partition(state.basis, "odd"), rng)
        return rec_e.outcome, rec_o.outcome, state
    if backend == "ancilla":
        from .magmeter import measure_sublattice_via_ancilla

        m_even, state = measure_sublattice_via_ancilla(state, "even", rng)
        m_odd, state = measure_sublattice_via_ancilla(state, "odd", rng)
        return m_even, m_odd, state
    raise ValueError(f"unknown measurement backend {backend!r}")


def target_scores(m_even: int, m_odd: int) -> dict[TargetPattern, int]:
    return {
        TargetPattern.ALL_ZERO: m_even + m_odd,
        TargetPattern.ONE_ON_ODD: m_even - m_odd,
        TargetPattern.ONE_ON_EVEN: m_odd - m_even,
    }


def select_target_from_uniform(m_even: int, m_odd: int, u: float) -> TargetPattern:
    scores = target_scores(m_even, m_odd)
    best = min(scores.values())
    tied = [t for t, v in scores.items() if v == best]
    return tied[int(u * len(tied))]


def select_target(m_even: int, m_odd: int, rng: np.random.Generator) -> TargetPattern:
    """Orbit state minimising the sublattice score; ties broken uniformly.

    Always consumes exactly one double, tie or not.
    """
    return select_target_from_uniform(m_even, m_odd, rng.random())


def correction_site(j: int, bit_j: int, target: TargetPattern) -> int:
    """Site to flip once a wall between ``j`` and ``j + 2`` is known and ``b_j`` is read.

    Sites ``j`` and ``j + 2`` share a sublattice, so they share a target bit;
    with the wall present exactly one of them disagrees with it.
    """
    return j if bit_j != target.target_bit(j) else j + 2


def local_correction_at(
    state: PureState, j: int, target: TargetPattern, rng: np.random.Generator
) -> tuple[PureState, bool]:
    """Domain-wall check at ``(j, j + 2)`` with a corrective flip if needed.

    Returns the state and whether a correction gate was applied.  A flip that
    would violate the blockade acts as the identity.
    """
    L = state.L
    wall, state = measure_diagonal(state, domain_wall_partition(state.basis, j), rng)
    if wall.outcome == 1:
        return state, False
    z, state = measure_diagonal(state, site_partition(state.basis, j), rng)
    bit_j = (z.outcome + 1) // 2
    k = (correction_site(j, bit_j, target) - 1) % L + 1
    apply_pxp_gate(state, k)
    return state, True


def control_step(
    state: PureState,
    q: float,
    site_rng: np.random.Generator,
    meas_rng: np.random.Generator,
    backend: str = "direct",
) -> tuple[ControlOutcome, PureState]:
    """Full control circuit: collective measurement, target choice, local sweep."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    L = state.L
    m_even, m_odd, state = measure_sublattice_magnetizations(state, meas_rng, backend)
    target = select_target(m_even, m_odd, site_rng)
    visit = site_rng.random(L) < q
    applied = 0
    for j in range(1, L + 1):
        if visit[j - 1]:
            state, did = local_correction_at(state, j, target, meas_rng)
            applied += did
    return ControlOutcome(m_even, m_odd, target, applied), state
