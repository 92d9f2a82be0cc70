"""The chaotic half of the circuit: Floquet PXP layers followed by a random
sequence of guarded flip-flops, with an optional single-site kick that
knocks the state off the vacuum orbit."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statevec import PureState, apply_hop_gate, apply_pxp_gate

__all__ = [
    "ChaoticStepSpec",
    "THETA_QUANTUM",
    "THETA_CLASSICAL",
    "apply_upxp",
    "apply_upxp_inverse",
    "sample_permutation",
    "apply_usigma",
    "chaotic_step",
]

THETA_QUANTUM = np.pi / 3
THETA_CLASSICAL = np.pi / 2


@dataclass(frozen=True)
class ChaoticStepSpec:
    theta: float = THETA_QUANTUM
    perturb: bool = False

    def __post_init__(self):
        if not 0.0 < self.theta <= np.pi:
            raise ValueError(f"theta must lie in (0, pi], got {self.theta}")


def apply_upxp(state: PureState) -> PureState:
    """Even-site PXP layer, then the odd-site layer."""
    L = state.L
    for j in range(2, L + 1, 2):
        apply_pxp_gate(state, j)
    for j in range(1, L + 1, 2):
        apply_pxp_gate(state, j)
    return state


def apply_upxp_inverse(state: PureState) -> PureState:
    # each PXP gate squares to the parity on its block; three more applications invert it
    L = state.L
    for j in range(1, L + 1, 2):
        for _ in range(3):
            apply_pxp_gate(state, j)
    for j in range(2, L + 1, 2):
        for _ in range(3):
            apply_pxp_gate(state, j)
    return state


def permutation_from_uniforms(u: np.ndarray, L: int) -> np.ndarray:
    """Fisher-Yates over ``0..L-1`` driven by ``L - 1`` uniforms, returned 1-based."""
    perm = np.arange(1, L + 1)
    for n, i in enumerate(range(L - 1, 0, -1)):
        k = int(u[n] * (i + 1))
        perm[i], perm[k] = perm[k], perm[i]
    return perm


def sample_permutation(L: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation of the sites ``1..L``; consumes ``L - 1`` doubles."""
    if L < 1:
        raise ValueError("L must be positive")
    return permutation_from_uniforms(rng.random(L - 1), L)


def apply_usigma(state: PureState, sigma, theta: float) -> PureState:
    """Flip-flop gates at sites ``sigma[0], sigma[1], ...`` in that order."""
    for j in sigma:
        apply_hop_gate(state, int(j), theta)
    return state


def chaotic_step(state: PureState, spec: ChaoticStepSpec, rng: np.random.Generator) -> PureState:
    """One chaotic time step; draws only from the permutation stream ``rng``."""
    L = state.L
    apply_upxp(state)
    apply_usigma(state, sample_permutation(L, rng), spec.theta)
    if spec.perturb:
        apply_pxp_gate(state, int(rng.random() * L) + 1)
    return state
