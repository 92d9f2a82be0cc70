"""Independent reference implementations used only by the tests.

Everything here works on the full 2**L qubit space with dense matrices and
string manipulation, sharing no code with the package.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
P0 = np.diag([1.0, 0.0]).astype(complex)  # projector on |0>


def brute_force_states(L):
    """All length-L site-1-first strings with no cyclically adjacent 1s."""
    out = []
    for bits in itertools.product("01", repeat=L):
        s = "".join(bits)
        if "11" in s or (s[0] == "1" and s[-1] == "1"):
            continue
        out.append(s)
    return out


def str_to_int(s):
    return int(s[::-1], 2)


def op_on(L, ops):
    """Dense operator with single-site ``ops = {site: 2x2}`` (1-based, cyclic), qubit j = bit j-1."""
    mats = [I2.astype(complex)] * L
    for site, m in ops.items():
        mats[(site - 1) % L] = m
    # bit j-1 of the index is site j, so the last kron factor is site 1
    out = np.array([[1.0 + 0j]])
    for m in reversed(mats):
        out = np.kron(out, m)
    return out


def pxp_gate(L, j):
    return expm(-1j * np.pi / 2 * op_on(L, {j - 1: P0, j: X, j + 1: P0}))


def hop_gate(L, j, theta):
    gen = 0.5 * (op_on(L, {j - 1: P0, j: X, j + 1: X, j + 2: P0}) + op_on(L, {j - 1: P0, j: Y, j + 1: Y, j + 2: P0}))
    return expm(-1j * theta * gen)


def embed(basis_states, amps, L):
    v = np.zeros(2**L, dtype=complex)
    v[np.asarray(basis_states)] = amps
    return v


def entropy_svd(full_vec, L, sites):
    """Entanglement entropy by reshaping the full 2**L vector and taking an SVD."""
    sites = sorted({(s - 1) % L for s in sites})
    rest = [k for k in range(L) if k not in sites]
    t = full_vec.reshape([2] * L)  # axis a is bit L-1-a
    axes = [L - 1 - k for k in sites] + [L - 1 - k for k in rest]
    m = np.transpose(t, axes).reshape(2 ** len(sites), -1)
    s = np.linalg.svd(m, compute_uv=False) ** 2
    s = s[s > 1e-14]
    return float(-np.sum(s * np.log(s)))
