"""Collective magnetization readout through an ancilla register.

The number of 1s on a set of system qubits is accumulated into ``N =
ceil(log2(n_sites + 1))`` ancillas prepared in ``|+>``.  Controlled phases
``R_k(i, k) = exp(2 pi i q_i a_k / 2**k)`` add ``q_i`` to the register's
Fourier label, an inverse QFT maps the label to the computational basis, and
each ancilla is read in Z.

Register convention: ancilla ``k`` (1-based) is bit ``N - k`` of the readout
integer ``r``, i.e. ancilla 1 is the most significant bit and is read first.
With this ordering the Fourier state ``|Q>`` has amplitude
``exp(2 pi i Q r / 2**N) / sqrt(2**N)`` on ``|r>``.

Gate lists can be exported as text, one gate per line::

    CP m i k     controlled phase 2 pi / 2**m between system site i and ancilla k
    IQFT         inverse QFT on the whole register, same convention as above
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .statevec import CERTAIN, NumericalCorruptionError, NORM_TOL, PureState

__all__ = [
    "MagCircuit",
    "build_magcircuit",
    "ancilla_count",
    "AncillaRegisterState",
    "attach_register",
    "apply_umag",
    "apply_iqft",
    "readout_distribution",
    "measure_via_ancilla",
    "measure_sublattice_via_ancilla",
    "count_distribution",
    "verify_equivalence",
    "EquivalenceReport",
]


def ancilla_count(n_sites: int) -> int:
    return max(1, math.ceil(math.log2(n_sites + 1)))


@dataclass(frozen=True)
class MagCircuit:
    """Gate list for counting 1s on ``sites`` (1-based system labels)."""

    sites: tuple[int, ...]
    n_ancilla: int
    gates: tuple[tuple[int, int, int], ...]  # (m, system site, ancilla)

    @property
    def L(self) -> int:
        return len(self.sites)

    def to_text(self) -> str:
        lines = [f"CP {m} {i} {k}" for m, i, k in self.gates]
        lines.append("IQFT")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MagCircuit":
        gates = []
        for line in text.splitlines():
            parts = line.split()
            if not parts or parts[0] == "IQFT":
                continue
            if parts[0] != "CP" or len(parts) != 4:
                raise ValueError(f"bad gate line: {line!r}")
            gates.append(tuple(int(x) for x in parts[1:]))
        sites = tuple(sorted({g[1] for g in gates}))
        return cls(sites, max(g[2] for g in gates), tuple(gates))


def build_magcircuit(L: int, sites=None) -> MagCircuit:
    """``U_mag = prod_i prod_k R_k(i, k)`` for sites ``1..L`` (or the given subset)."""
    if L < 1:
        raise ValueError("L must be positive")
    sites = tuple(range(1, L + 1)) if sites is None else tuple(sites)
    N = ancilla_count(len(sites))
    gates = tuple((k, i, k) for i in sites for k in range(1, N + 1))
    return MagCircuit(sites, N, gates)


@dataclass
class AncillaRegisterState:
    """Amplitudes indexed by (system configuration, register value ``r``)."""

    configs: np.ndarray
    amps: np.ndarray
    n_ancilla: int = field(default=1)


def attach_register(amps: np.ndarray, configs: np.ndarray, circuit: MagCircuit) -> AncillaRegisterState:
    d = 2**circuit.n_ancilla
    joint = np.repeat(np.asarray(amps, dtype=np.complex128)[:, None], d, axis=1) / np.sqrt(d)
    return AncillaRegisterState(np.asarray(configs, dtype=np.int64), joint, circuit.n_ancilla)


def apply_umag(reg: AncillaRegisterState, circuit: MagCircuit) -> AncillaRegisterState:
    N = reg.n_ancilla
    r = np.arange(2**N)
    for m, i, k in circuit.gates:
        q_i = (reg.configs >> (i - 1)) & 1
        a_k = (r >> (N - k)) & 1
        reg.amps *= np.exp(2j * np.pi * np.outer(q_i, a_k) / 2**m)
    return reg


def iqft_matrix(N: int) -> np.ndarray:
    d = 2**N
    r = np.arange(d)
    return np.exp(-2j * np.pi * np.outer(r, r) / d) / np.sqrt(d)


def apply_iqft(reg: AncillaRegisterState) -> AncillaRegisterState:
    reg.amps = reg.amps @ iqft_matrix(reg.n_ancilla).T
    return reg


def readout_distribution(amps: np.ndarray, configs: np.ndarray, circuit: MagCircuit) -> np.ndarray:
    """Exact Born distribution of the register value after U_mag and the IQFT."""
    reg = apply_iqft(apply_umag(attach_register(amps, configs, circuit), circuit))
    return np.sum(np.abs(reg.amps) ** 2, axis=0)


def _read_qubit(reg: AncillaRegisterState, k: int, rng: np.random.Generator) -> int:
    N = reg.n_ancilla
    bit = (np.arange(2**N) >> (N - k)) & 1
    w = np.sum(np.abs(reg.amps) ** 2, axis=0)
    p1 = float(w[bit == 1].sum())
    total = float(w.sum())
    if abs(total - 1.0) > NORM_TOL:
        raise NumericalCorruptionError(f"ancilla {k}: total probability {total!r}")
    if p1 >= 1.0 - CERTAIN:
        out = 1
    elif p1 <= CERTAIN:
        out = 0
    else:
        out = int(rng.random() * total < p1)
    reg.amps[:, bit != out] = 0.0
    reg.amps /= np.sqrt(p1 if out else total - p1)
    return out


def measure_via_ancilla(
    amps: np.ndarray, configs: np.ndarray, circuit: MagCircuit, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Count 1s on ``circuit.sites`` by reading the register qubit by qubit.

    Returns the count ``n`` and the normalised post-measurement system
    amplitudes (register discarded).
    """
    reg = apply_iqft(apply_umag(attach_register(amps, configs, circuit), circuit))
    n = 0
    for k in range(1, reg.n_ancilla + 1):
        n = (n << 1) | _read_qubit(reg, k, rng)
    system = reg.amps[:, n].copy()
    system /= np.linalg.norm(system)
    return n, system


def measure_sublattice_via_ancilla(state: PureState, parity: str, rng: np.random.Generator):
    """``M_even`` / ``M_odd`` readout for a constrained state; returns ``(m, state)``."""
    L = state.L
    first = 2 if parity == "even" else 1
    sites = list(range(first, L + 1, 2))
    circuit = state.basis.table(("magcircuit", parity), lambda: build_magcircuit(L, sites))
    amps = state.amps if state.ancilla_attached else state.amps[None, :]
    # an attached purification ancilla is folded into the system amplitudes
    n_anc, dim = amps.shape
    configs = np.tile(state.basis.states, n_anc)
    n, post = measure_via_ancilla(amps.reshape(-1), configs, circuit, rng)
    state.amps = post.reshape(amps.shape) if state.ancilla_attached else post
    return 2 * n - len(sites), state


def count_distribution(amps: np.ndarray, configs: np.ndarray, sites) -> np.ndarray:
    """Direct Born distribution of the number of 1s on ``sites`` (length ``len(sites) + 1``)."""
    mask = sum(1 << (i - 1) for i in sites)
    counts = np.array([bin(int(c) & mask).count("1") for c in configs], dtype=np.intp)
    return np.bincount(counts, weights=np.abs(amps) ** 2, minlength=len(sites) + 1)


@dataclass
class EquivalenceReport:
    L: int
    n_trials: int
    max_prob_diff: float
    min_fidelity: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} L={self.L} trials={self.n_trials} "
            f"max|dP|={self.max_prob_diff:.3e} min fidelity={self.min_fidelity:.15f}"
        )


def _post_state_ancilla(amps, configs, circuit, n):
    reg = apply_iqft(apply_umag(attach_register(amps, configs, circuit), circuit))
    out = reg.amps[:, n]
    return out / np.linalg.norm(out)


def verify_equivalence(
    L: int, n_trials: int, seed: int, prob_tol: float = 1e-10, fid_tol: float = 1e-10
) -> EquivalenceReport:
    """Compare ancilla readout with the direct count projector on random states.

    States are Haar-random over all ``2**L`` configurations.  Distributions are
    compared exactly, and for every outcome with nonzero weight the two
    post-measurement states are compared up to a global phase.
    """
    if not 1 <= L <= 10:
        raise ValueError("verify_equivalence supports 1 <= L <= 10")
    rng = np.random.default_rng(seed)
    configs = np.arange(2**L, dtype=np.int64)
    circuit = build_magcircuit(L)
    sites = circuit.sites
    d = 2**circuit.n_ancilla
    report = EquivalenceReport(L, n_trials, 0.0, 1.0)
    mask = sum(1 << (i - 1) for i in sites)
    counts = np.array([bin(int(c) & mask).count("1") for c in configs])
    for trial in range(n_trials):
        amps = rng.standard_normal(2**L) + 1j * rng.standard_normal(2**L)
        amps /= np.linalg.norm(amps)
        direct = np.zeros(d)
        direct[: L + 1] = count_distribution(amps, configs, sites)
        via = readout_distribution(amps, configs, circuit)
        diff = float(np.max(np.abs(direct - via)))
        report.max_prob_diff = max(report.max_prob_diff, diff)
        if diff >= prob_tol:
            report.failures.append((trial, "distribution", diff, amps))
        for n in np.flatnonzero(direct > 1e-14):
            proj = np.where(counts == n, amps, 0.0)
            proj /= np.linalg.norm(proj)
            fid = float(abs(np.vdot(proj, _post_state_ancilla(amps, configs, circuit, n))) ** 2)
            report.min_fidelity = min(report.min_fidelity, fid)
            if fid < 1.0 - fid_tol:
                report.failures.append((trial, f"state n={n}", fid, amps))
    return report
