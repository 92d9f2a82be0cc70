"""Bit-packed cellular automaton for the classical limit.

At ``theta = pi/2`` and with computational-basis inputs every gate permutes
bitstrings and every measurement is a backaction-free read, so a trajectory
is a sequence of bit operations.  Configurations are stored in ``uint64``
words (site 1 = bit 0 of word 0); the PXP layers work a whole word at a time
with explicit carries across word boundaries, the sequential gates address
single bits.

The engine draws from the same named streams, in the same amounts, as the
statevector engine, so both produce identical trajectories from the same
seeds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .control import ControlOutcome, TargetPattern
from .hilbert import _check_size, is_valid

__all__ = [
    "BitState",
    "ca_upxp",
    "ca_usigma",
    "ca_pxp_flip",
    "ca_chaotic_step",
    "ca_control_step",
    "ca_h_zz",
    "ca_z_profile",
    "run_ca_trajectory",
]

_TARGETS = (TargetPattern.ALL_ZERO, TargetPattern.ONE_ON_ODD, TargetPattern.ONE_ON_EVEN)


def _n_words(L: int) -> int:
    return (L + 63) // 64


def _mask_words(L: int, bits) -> np.ndarray:
    out = np.zeros(_n_words(L), dtype=np.uint64)
    for k in bits:
        out[k >> 6] |= np.uint64(1) << np.uint64(k & 63)
    return out


@dataclass
class BitState:
    L: int
    words: np.ndarray

    @classmethod
    def from_config(cls, config: int, L: int) -> "BitState":
        _check_size(L)
        if not is_valid(config, L):
            raise ValueError("configuration violates the blockade constraint")
        config = int(config)
        words = np.array(
            [(config >> (64 * w)) & 0xFFFFFFFFFFFFFFFF for w in range(_n_words(L))], dtype=np.uint64
        )
        return cls(L, words)

    def to_config(self) -> int:
        return sum(int(w) << (64 * k) for k, w in enumerate(self.words))

    def copy(self) -> "BitState":
        return BitState(self.L, self.words.copy())

    def bits(self) -> np.ndarray:
        return np.array([(self.to_config() >> k) & 1 for k in range(self.L)], dtype=np.uint8)


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _get(words, k):
    return (words[k >> 6] >> np.uint64(k & 63)) & np.uint64(1)


@njit(cache=True)
def _flip(words, k):
    words[k >> 6] ^= np.uint64(1) << np.uint64(k & 63)


@njit(cache=True)
def _rot_up(src, dst, L):
    # dst bit k <- src bit k-1 (cyclic)
    W = src.shape[0]
    for w in range(W):
        v = src[w] << np.uint64(1)
        if w > 0:
            v |= src[w - 1] >> np.uint64(63)
        dst[w] = v
    r = L & 63
    if r:
        dst[W - 1] &= (np.uint64(1) << np.uint64(r)) - np.uint64(1)
    dst[0] |= _get(src, L - 1)


@njit(cache=True)
def _rot_down(src, dst, L):
    # dst bit k <- src bit k+1 (cyclic)
    W = src.shape[0]
    for w in range(W):
        v = src[w] >> np.uint64(1)
        if w + 1 < W:
            v |= src[w + 1] << np.uint64(63)
        dst[w] = v
    k = L - 1
    dst[k >> 6] |= _get(src, 0) << np.uint64(k & 63)


@njit(cache=True)
def _upxp(words, L, even_mask, odd_mask):
    left = np.empty_like(words)
    right = np.empty_like(words)
    for layer in range(2):
        mask = even_mask if layer == 0 else odd_mask
        _rot_up(words, left, L)
        _rot_down(words, right, L)
        for w in range(words.shape[0]):
            words[w] ^= ~left[w] & ~right[w] & mask[w]


@njit(cache=True)
def _pxp_flip(words, L, k):
    if _get(words, (k - 1) % L) == 0 and _get(words, (k + 1) % L) == 0:
        _flip(words, k)


@njit(cache=True)
def _hop(words, L, k):
    a = k
    b = (k + 1) % L
    if _get(words, (k - 1) % L) == 0 and _get(words, (k + 2) % L) == 0:
        if _get(words, a) != _get(words, b):
            _flip(words, a)
            _flip(words, b)


@njit(cache=True)
def _perm_from_uniforms(u, off, L, perm):
    for i in range(L):
        perm[i] = i
    n = 0
    for i in range(L - 1, 0, -1):
        k = int(u[off + n] * (i + 1))
        tmp = perm[i]
        perm[i] = perm[k]
        perm[k] = tmp
        n += 1


@njit(cache=True)
def _usigma(words, L, perm):
    for n in range(perm.shape[0]):
        _hop(words, L, perm[n])


@njit(cache=True)
def _target_bit(target, k):
    # k is 0-based; 1-based site k+1 is odd iff k is even
    if target == 0:
        return 0
    if target == 1:
        return 1 if k % 2 == 0 else 0
    return 1 if k % 2 == 1 else 0


@njit(cache=True)
def _control(words, L, q, u, off):
    # returns m_even, m_odd, target index, corrections applied
    n_even = 0
    n_odd = 0
    for k in range(L):
        if _get(words, k):
            if k % 2 == 1:
                n_even += 1
            else:
                n_odd += 1
    half = L // 2
    m_even = 2 * n_even - half
    m_odd = 2 * n_odd - half
    scores = np.array([m_even + m_odd, m_even - m_odd, m_odd - m_even])
    best = scores.min()
    n_tied = 0
    for t in range(3):
        if scores[t] == best:
            n_tied += 1
    pick = int(u[off] * n_tied)
    target = 0
    seen = 0
    for t in range(3):
        if scores[t] == best:
            if seen == pick:
                target = t
            seen += 1
    applied = 0
    for j in range(L):
        if u[off + 1 + j] < q:
            j2 = (j + 2) % L
            bj = _get(words, j)
            if bj != _get(words, j2):
                k = j if int(bj) != _target_bit(target, j) else j2
                _pxp_flip(words, L, k)
                applied += 1
    return m_even, m_odd, target, applied


@njit(cache=True)
def _h_zz(words, L):
    walls = 0
    for k in range(L):
        if _get(words, k) != _get(words, (k + 2) % L):
            walls += 1
    return walls / L


@njit(cache=True)
def _trajectory(
    words, L, p, q, perturb, coins, perm_u, site_u, record_every,
    even_mask, odd_mask, hzz_out, z_out, record_z, choices,
):
    perm = np.empty(L, dtype=np.int64)
    pp = 0
    sp = 0
    r = 0
    hzz_out[r] = _h_zz(words, L)
    if record_z:
        for k in range(L):
            z_out[r, k] = 2.0 * float(_get(words, k)) - 1.0
    r += 1
    for t in range(1, coins.shape[0] + 1):
        if coins[t - 1] < p:
            _control(words, L, q, site_u, sp)
            sp += L + 1
            choices[t - 1] = 1
        else:
            _upxp(words, L, even_mask, odd_mask)
            _perm_from_uniforms(perm_u, pp, L, perm)
            pp += L - 1
            _usigma(words, L, perm)
            if perturb:
                _pxp_flip(words, L, int(perm_u[pp] * L))
                pp += 1
            choices[t - 1] = 0
        if t % record_every == 0:
            hzz_out[r] = _h_zz(words, L)
            if record_z:
                for k in range(L):
                    z_out[r, k] = 2.0 * float(_get(words, k)) - 1.0
            r += 1


# ---------------------------------------------------------------- public API


def _layer_masks(L: int) -> tuple[np.ndarray, np.ndarray]:
    # 1-based even sites live on odd bits
    return _mask_words(L, range(1, L, 2)), _mask_words(L, range(0, L, 2))


def ca_upxp(bits: BitState) -> BitState:
    """Toffoli layers: even sites, then odd sites, each flipped iff both neighbours are 0."""
    out = bits.copy()
    even, odd = _layer_masks(bits.L)
    _upxp(out.words, bits.L, even, odd)
    return out


def ca_usigma(bits: BitState, sigma) -> BitState:
    """Conditional swaps at 1-based positions ``sigma`` in order."""
    out = bits.copy()
    _usigma(out.words, bits.L, np.asarray(sigma, dtype=np.int64) - 1)
    return out


def ca_pxp_flip(bits: BitState, j: int) -> BitState:
    out = bits.copy()
    _pxp_flip(out.words, bits.L, (j - 1) % bits.L)
    return out


def ca_chaotic_step(bits: BitState, rng: np.random.Generator, perturb: bool = False) -> BitState:
    """Chaotic step drawing from the permutation stream exactly as the statevector engine does."""
    from .dynamics import sample_permutation

    out = ca_usigma(ca_upxp(bits), sample_permutation(bits.L, rng))
    if perturb:
        out = ca_pxp_flip(out, int(rng.random() * bits.L) + 1)
    return out


def ca_control_step(bits: BitState, q: float, rng: np.random.Generator) -> tuple[ControlOutcome, BitState]:
    """Classical control step; draws ``L + 1`` doubles from the site stream ``rng``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    out = bits.copy()
    u = rng.random(bits.L + 1)
    m_even, m_odd, target, applied = _control(out.words, bits.L, q, u, 0)
    return ControlOutcome(int(m_even), int(m_odd), _TARGETS[target], int(applied)), out


def ca_h_zz(bits: BitState) -> float:
    return float(_h_zz(bits.words, bits.L))


def ca_z_profile(bits: BitState) -> np.ndarray:
    return 2.0 * bits.bits().astype(float) - 1.0


def run_ca_trajectory(
    bits: BitState,
    p: float,
    q: float,
    t_max: int,
    coin_rng: np.random.Generator,
    perm_rng: np.random.Generator,
    site_rng: np.random.Generator,
    perturb: bool = False,
    record_every: int = 1,
    record_z: bool = False,
):
    """Run ``t_max`` steps in one compiled call.

    Random numbers are drawn up front in per-stream blocks whose sizes follow
    from the coin flips, which is equivalent to drawing them step by step.

    Returns ``(h_zz, z, choices, final)``: the recorded order parameter (t = 0
    first), the recorded ``<Z_j>`` rows (or ``None``), the per-step circuit
    choice (1 = control) and the final state.
    """
    L = bits.L
    coins = coin_rng.random(t_max)
    n_control = int(np.count_nonzero(coins < p))
    n_chaotic = t_max - n_control
    perm_u = perm_rng.random(n_chaotic * (L - 1 + int(perturb)))
    site_u = site_rng.random(n_control * (L + 1))
    n_rec = t_max // record_every + 1
    hzz = np.empty(n_rec)
    z = np.empty((n_rec, L) if record_z else (1, 1))
    choices = np.empty(t_max, dtype=np.uint8)
    even, odd = _layer_masks(L)
    out = bits.copy()
    _trajectory(
        out.words, L, float(p), float(q), bool(perturb), coins, perm_u, site_u, int(record_every),
        even, odd, hzz, z, bool(record_z), choices,
    )
    return hzz, (z if record_z else None), choices, out
