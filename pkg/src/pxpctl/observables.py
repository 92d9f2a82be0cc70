"""Order parameter, magnetization profiles and entanglement measures."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .automaton import BitState, ca_h_zz, ca_z_profile
from .hilbert import FibBasis
from .statevec import PureState, random_fib_state

__all__ = [
    "h_zz",
    "z_profile",
    "region_mask",
    "entanglement_entropy",
    "half_chain_entropy",
    "tmi_regions",
    "tripartite_mutual_information",
    "make_ancilla_joint",
    "ancilla_entropy",
    "EIGEN_FLOOR",
]

EIGEN_FLOOR = 1e-14


def _wall_counts(basis: FibBasis) -> np.ndarray:
    def build():
        b = basis.bits
        return (b != np.roll(b, -2, axis=1)).sum(axis=1).astype(float)

    return basis.table("walls", build)


def h_zz(state) -> float:
    """Sublattice domain-wall density ``<(1/L) sum_i (1 - Z_i Z_{i+2}) / 2>``."""
    if isinstance(state, BitState):
        return ca_h_zz(state)
    return float(state.probabilities() @ _wall_counts(state.basis)) / state.L


def z_profile(state) -> np.ndarray:
    """``<Z_j>`` for ``j = 1..L``, with ``Z|1> = +|1>``."""
    if isinstance(state, BitState):
        return ca_z_profile(state)
    occ = state.probabilities() @ state.basis.bits
    return 2.0 * occ - 1.0


def region_mask(sites: Iterable[int], L: int) -> int:
    mask = 0
    for j in sites:
        if not 1 <= j <= L:
            raise ValueError(f"site {j} outside 1..{L}")
        mask |= 1 << (j - 1)
    return mask


def _grouping(basis: FibBasis, mask: int):
    def build():
        s = basis.states
        _, rows = np.unique(s & mask, return_inverse=True)
        _, cols = np.unique(s & ~np.int64(mask), return_inverse=True)
        return rows.ravel(), int(rows.max()) + 1, cols.ravel(), int(cols.max()) + 1

    return basis.table(("region", mask), build)


def _entropy_from_eigs(lam: np.ndarray) -> float:
    lam = lam[lam > EIGEN_FLOOR]
    # eigenvalues of a pure state sit at 1 +- eps; keep the result nonnegative
    return max(0.0, float(-np.sum(lam * np.log(lam))))


def schmidt_matrix(state: PureState, sites: Iterable[int]) -> np.ndarray:
    """Amplitudes arranged as (region configuration) x (rest, including any ancilla)."""
    L = state.L
    mask = region_mask(sites, L)
    rows, nr, cols, nc = _grouping(state.basis, mask)
    amps = state.amps if state.ancilla_attached else state.amps[None, :]
    n_anc = amps.shape[0]
    M = np.zeros((nr, nc * n_anc), dtype=np.complex128)
    for a in range(n_anc):
        M[rows, cols + a * nc] = amps[a]
    return M


def entanglement_entropy(state: PureState, sites: Iterable[int]) -> float:
    """Von Neumann entropy (natural log) of the reduced state on ``sites``.

    Uses the eigenvalues of the smaller of ``M M^dagger`` and ``M^dagger M``.
    """
    sites = list(sites)
    if not sites or (len(set(sites)) >= state.L and not state.ancilla_attached):
        raise ValueError("region must be a nonempty proper subset of the sites")
    M = schmidt_matrix(state, sites)
    rho = M @ M.conj().T if M.shape[0] <= M.shape[1] else M.conj().T @ M
    return _entropy_from_eigs(np.linalg.eigvalsh(rho))


def half_chain_entropy(state: PureState) -> float:
    return entanglement_entropy(state, range(1, state.L // 2 + 1))


def tmi_regions(L: int) -> tuple[list[int], list[int], list[int]]:
    if L % 4:
        raise ValueError(f"tripartite mutual information needs L divisible by 4, got {L}")
    n = L // 4
    return [list(range(k * n + 1, (k + 1) * n + 1)) for k in range(3)]


def tripartite_mutual_information(state: PureState) -> float:
    """``S_A + S_B + S_C - S_AB - S_AC - S_BC + S_ABC`` over consecutive quarter arcs."""
    A, B, C = tmi_regions(state.L)
    S = lambda *parts: entanglement_entropy(state, [j for part in parts for j in part])  # noqa: E731
    return S(A) + S(B) + S(C) - S(A, B) - S(A, C) - S(B, C) + S(A, B, C)


def make_ancilla_joint(basis: FibBasis, rng: np.random.Generator, tol: float = 1e-10) -> PureState:
    """``(|0>|psi1> + |1>|psi2>)/sqrt(2)`` with Haar ``psi1`` and ``psi2`` orthogonalised against it."""
    psi1 = random_fib_state(basis, rng).amps
    while True:
        psi2 = random_fib_state(basis, rng).amps
        psi2 = psi2 - np.vdot(psi1, psi2) * psi1
        nrm = np.linalg.norm(psi2)
        if nrm >= tol:
            break
    psi2 /= nrm
    return PureState(basis, np.stack([psi1, psi2]) / np.sqrt(2.0))


def ancilla_entropy(joint: PureState) -> float:
    """Entropy of the ancilla qubit in units of ln 2."""
    if not joint.ancilla_attached:
        raise ValueError("state carries no ancilla")
    a = joint.amps
    rho = a @ a.conj().T
    return _entropy_from_eigs(np.linalg.eigvalsh(rho)) / np.log(2.0)
