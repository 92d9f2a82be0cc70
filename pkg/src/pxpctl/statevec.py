"""Pure states on the constrained space and the primitive operations on them.

Gates and measurements act in place and return the state they were given,
so trajectories never copy the amplitude vector.  A state may carry one
extra ancilla qubit; its amplitudes then have shape ``(2, dim)`` and every
system operation acts on the last axis only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import FibBasis

__all__ = [
    "NumericalCorruptionError",
    "PureState",
    "Partition",
    "MeasurementRecord",
    "basis_state",
    "apply_pxp_gate",
    "apply_hop_gate",
    "measure_diagonal",
    "random_fib_state",
    "site_bit",
    "CERTAIN",
    "NORM_TOL",
]

CERTAIN = 1e-12
NORM_TOL = 1e-8


class NumericalCorruptionError(RuntimeError):
    """Born probabilities no longer sum to one."""


@dataclass
class PureState:
    basis: FibBasis
    amps: np.ndarray

    @property
    def L(self) -> int:
        return self.basis.L

    @property
    def ancilla_attached(self) -> bool:
        return self.amps.ndim == 2

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def probabilities(self) -> np.ndarray:
        """Born weights per basis ordinal (ancilla summed out)."""
        w = np.abs(self.amps) ** 2
        return w.sum(axis=0) if w.ndim == 2 else w

    def copy(self) -> "PureState":
        return PureState(self.basis, self.amps.copy())

    def support(self, tol: float = 1e-12) -> np.ndarray:
        """Configurations carrying weight above ``tol``."""
        return self.basis.states[self.probabilities() > tol]


def site_bit(j: int, L: int) -> int:
    """Bit position of 1-based (cyclic) site ``j``."""
    return (j - 1) % L


def basis_state(basis: FibBasis, config: int) -> PureState:
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index_of(config)] = 1.0
    return PureState(basis, amps)


def _pxp_pairs(basis: FibBasis, k: int) -> tuple[np.ndarray, np.ndarray]:
    return basis.table(("pxp", k), lambda: _build_pxp_pairs(basis, k))


def _hop_pairs(basis: FibBasis, k: int) -> tuple[np.ndarray, np.ndarray]:
    return basis.table(("hop", k), lambda: _build_hop_pairs(basis, k))


def _build_pxp_pairs(basis: FibBasis, k: int):
    # k is the 0-based bit; pairs (b_k = 0, b_k = 1) with both neighbours empty
    L, s = basis.L, basis.states
    nb = (1 << ((k - 1) % L)) | (1 << ((k + 1) % L))
    lo = np.flatnonzero((s & (nb | (1 << k))) == 0)
    hi = basis.index_of(s[lo] | (1 << k))
    return lo, hi


def _build_hop_pairs(basis: FibBasis, k: int):
    # pairs (b_k, b_k+1) = (1, 0) <-> (0, 1) with sites k-1 and k+2 empty
    L, s = basis.L, basis.states
    left, a, b, right = ((k + d) % L for d in (-1, 0, 1, 2))
    guard = (1 << left) | (1 << right)
    one_zero = np.flatnonzero(((s & guard) == 0) & ((s >> a) & 1 == 1) & ((s >> b) & 1 == 0))
    swapped = basis.index_of(s[one_zero] ^ ((1 << a) | (1 << b)))
    return one_zero, swapped


def apply_pxp_gate(state: PureState, j: int) -> PureState:
    """Apply ``exp(-i pi/2 P_{j-1} X_j P_{j+1})`` at 1-based site ``j``."""
    lo, hi = _pxp_pairs(state.basis, site_bit(j, state.L))
    a = state.amps
    tmp = a[..., lo]
    a[..., lo] = -1j * a[..., hi]
    a[..., hi] = -1j * tmp
    return state


def _gate_trig(theta: float) -> tuple[float, float]:
    # cos(pi/2) evaluates to 6e-17; snap so the theta = pi/2 gate is an exact permutation
    c, s = np.cos(theta), np.sin(theta)
    snap = lambda v: float(np.round(v)) if abs(v - np.round(v)) < 1e-15 else float(v)  # noqa: E731
    return snap(c), snap(s)


def apply_hop_gate(state: PureState, j: int, theta: float) -> PureState:
    """Conditional flip-flop on sites (j, j+1), guarded by empty j-1 and j+2.

    On the guarded {10, 01} block the generator (XX + YY)/2 is sigma_x, so the
    gate is ``cos(theta) - i sin(theta) sigma_x``.
    """
    p, q = _hop_pairs(state.basis, site_bit(j, state.L))
    c, s = _gate_trig(theta)
    a = state.amps
    ap, aq = a[..., p], a[..., q]
    a[..., p] = c * ap - 1j * s * aq
    a[..., q] = c * aq - 1j * s * ap
    return state


@dataclass(frozen=True)
class Partition:
    """Outcome classes of a CB-diagonal observable.

    ``classes[k]`` is the class index (0..n-1) of basis ordinal ``k`` and
    ``values[c]`` the eigenvalue reported for class ``c``.
    """

    label: str
    classes: np.ndarray
    values: tuple


@dataclass(frozen=True)
class MeasurementRecord:
    observable: str
    outcome: int
    born_probability: float


def measure_diagonal(
    state: PureState, partition: Partition, rng: np.random.Generator
) -> tuple[MeasurementRecord, PureState]:
    """Projective measurement of a CB-diagonal observable.

    No random number is drawn when one class already carries probability
    ``>= 1 - 1e-12``.
    """
    weights = state.probabilities()
    probs = np.bincount(partition.classes, weights=weights, minlength=len(partition.values))
    total = probs.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise NumericalCorruptionError(f"{partition.label}: total probability {total!r}")
    best = int(np.argmax(probs))
    if probs[best] >= 1.0 - CERTAIN:
        cls = best
    else:
        u = rng.random() * total
        cls = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        cls = min(cls, len(probs) - 1)
        while probs[cls] <= 0.0:  # u landed on a rounding edge
            cls -= 1
    keep = partition.classes == cls
    state.amps[..., ~keep] = 0.0
    state.amps /= np.sqrt(probs[cls])
    record = MeasurementRecord(partition.label, int(partition.values[cls]), float(probs[cls] / total))
    return record, state


def random_fib_state(basis: FibBasis, rng: np.random.Generator) -> PureState:
    """Haar-random state on the constrained space (normalised complex Gaussians)."""
    z = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
    z /= np.linalg.norm(z)
    return PureState(basis, z)
