"""Spin-1/2 operators and Kronecker embedding into the joint space.

Slot 0 is always the NV electron (restricted to the m_S = 0 / m_S = -1 pair),
slots 1..K are the nuclei.  Basis index 0 of the electron is |alpha> (m_S = 0),
index 1 is |beta> (m_S = -1).
"""

from functools import reduce

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
ID2 = np.eye(2, dtype=complex)

# electron manifold projectors
P_ALPHA = np.array([[1, 0], [0, 0]], dtype=complex)
P_BETA = np.array([[0, 0], [0, 1]], dtype=complex)


def embed(op, slot, n_nuclei):
    """Place a single-spin operator at ``slot`` of a (K+1)-spin register.

    Returns ``1 x ... x op x ... x 1`` with dimension ``2**(n_nuclei + 1)``.
    """
    if not 0 <= slot <= n_nuclei:
        raise IndexError(f"slot {slot} outside [0, {n_nuclei}]")
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError("embed expects a 2x2 single-spin operator")
    factors = [ID2] * (n_nuclei + 1)
    factors[slot] = op
    return reduce(np.kron, factors)


def nuclear_embed(op, index, n_nuclei):
    """Embed a single-nucleus operator into the 2**K nuclear register (no electron)."""
    if not 0 <= index < n_nuclei:
        raise IndexError(f"nucleus index {index} outside [0, {n_nuclei})")
    factors = [ID2] * n_nuclei
    factors[index] = np.asarray(op, dtype=complex)
    return reduce(np.kron, factors)


def joint_from_manifolds(h_alpha, h_beta):
    """Assemble |a><a| x H_a + |b><b| x H_b."""
    return np.kron(P_ALPHA, h_alpha) + np.kron(P_BETA, h_beta)


def electron_op(op, n_nuclei):
    return embed(op, 0, n_nuclei)
