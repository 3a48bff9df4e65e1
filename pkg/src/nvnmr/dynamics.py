"""Dense propagators for the joint electron-nuclear register.

Sequences are products of element unitaries applied right to left (the first
element acts first).  Delays evolve under the full joint free Hamiltonian;
pulses are either ideal delta rotations of the electron or rectangular pulses
during which the free Hamiltonian keeps acting.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constants import (
    HERMITIAN_INPUT_ATOL,
    POSITIVITY_ATOL,
    TRACE_ATOL,
    TWO_PI,
    UNITARY_ATOL,
)
from .operators import P_ALPHA, SX, SY, SZ, embed
from .spinsys import free_hamiltonian

__all__ = [
    "Adjoint",
    "Delay",
    "Flip",
    "Pulse",
    "PulseSequence",
    "Repeat",
    "check_density",
    "check_unitary",
    "delay_unitary",
    "embed",
    "evolve",
    "expm_hermitian",
    "initial_state",
    "pulse_unitary",
    "sequence_unitary",
]


@dataclass(frozen=True)
class Pulse:
    angle: float  # rad
    phase: float = 0.0  # rad, 0 = x
    duration: float = 0.0  # s, 0 = ideal
    detuning: float = 0.0  # Hz

    def __post_init__(self):
        if not 0 < self.angle <= TWO_PI + 1e-12:
            raise ValueError(f"pulse angle {self.angle} outside (0, 2pi]")
        if self.duration < 0:
            raise ValueError("pulse duration must be >= 0")


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"negative delay {self.duration}")


@dataclass(frozen=True)
class Flip:
    """Ideal electron pi flip used inside free-precession periods."""


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        if not isinstance(self.count, numbers.Integral) or self.count < 1:
            raise ValueError(f"repeat count must be a positive integer, got {self.count!r}")


@dataclass(frozen=True)
class Adjoint:
    """The inverse propagator of ``body``.

    Not a forward-time pulse program: it models the ideal time-reversed
    readout block ``U^dag`` used by the correlation protocols.
    """

    body: tuple

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def __add__(self, other):
        return PulseSequence(self.elements + tuple(other.elements))

    def expanded(self):
        """Flatten all Repeat blocks."""
        out = []

        def walk(elems):
            for e in elems:
                if isinstance(e, Repeat):
                    for _ in range(e.count):
                        walk(e.body)
                elif isinstance(e, Adjoint):
                    out.append(Adjoint(PulseSequence(e.body).expanded().elements))
                else:
                    out.append(e)

        walk(self.elements)
        return PulseSequence(out)

    @property
    def duration(self):
        def dur(elems):
            total = 0.0
            for e in elems:
                if isinstance(e, Repeat):
                    total += e.count * dur(e.body)
                elif isinstance(e, Adjoint):
                    total += dur(e.body)
                elif isinstance(e, (Pulse, Delay)):
                    total += e.duration
            return total

        return dur(self.elements)


def check_unitary(u, atol=UNITARY_ATOL):
    dev = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
    if dev > atol:
        raise ValueError(f"matrix is not unitary (max |U^dag U - 1| = {dev:.2e})")
    return u


def check_density(rho, atol=TRACE_ATOL):
    if np.abs(rho - rho.conj().T).max() > atol:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > atol:
        raise ValueError(f"density matrix trace {tr} != 1")
    if np.linalg.eigvalsh(rho).min() < -POSITIVITY_ATOL:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def expm_hermitian(h, t):
    """exp(-i h t) for Hermitian ``h`` (rad/s) via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - h.conj().T).max() > HERMITIAN_INPUT_ATOL * scale:
        raise ValueError("expm_hermitian requires a Hermitian matrix")
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@lru_cache(maxsize=64)
def _free_eig(system):
    h = free_hamiltonian(system)
    w, v = np.linalg.eigh(h)
    return w, v


def delay_unitary(duration, system):
    w, v = _free_eig(system)
    return (v * np.exp(-1j * w * duration)) @ v.conj().T


def _rotation_generator(phase, n_nuclei):
    s_phi = math.cos(phase) * SX + math.sin(phase) * SY
    return embed(s_phi, 0, n_nuclei)


def pulse_unitary(p, system):
    """Propagator of one electron pulse.

    Ideal pulses (duration 0) are rotations of the electron alone.  Finite
    pulses use ``Omega = angle / duration`` plus the detuning and the joint free
    Hamiltonian, so nuclear phase keeps accumulating during the pulse.
    """
    k = system.n_nuclei
    gen = _rotation_generator(p.phase, k)
    if p.duration == 0:
        return expm_hermitian(gen, p.angle)
    # exponent scaled by the duration so very short pulses never divide by ~0
    h = free_hamiltonian(system) + TWO_PI * p.detuning * embed(SZ, 0, k)
    return expm_hermitian(p.angle * gen + p.duration * h, 1.0)


def _element_unitary(e, system, cache):
    key = e
    if key in cache:
        return cache[key]
    if isinstance(e, Pulse):
        u = pulse_unitary(e, system)
    elif isinstance(e, Delay):
        u = delay_unitary(e.duration, system)
    elif isinstance(e, Flip):
        u = pulse_unitary(Pulse(math.pi), system)
    elif isinstance(e, Repeat):
        body = _product(e.body, system, cache)
        u = np.linalg.matrix_power(body, e.count)
    elif isinstance(e, Adjoint):
        u = _product(e.body, system, cache).conj().T
    else:
        raise TypeError(f"unresolved sequence element {e!r}")
    cache[key] = u
    return u


def _product(elements, system, cache):
    u = np.eye(system.dim, dtype=complex)
    for e in elements:
        u = _element_unitary(e, system, cache) @ u
    return u


def sequence_unitary(seq, system):
    """Total propagator of ``seq``; the first element acts first.

    Repeat blocks are evaluated by binary powering of the body propagator.
    """
    if isinstance(seq, PulseSequence):
        elements = seq.elements
    else:
        elements = tuple(seq)
    for e in _iter_leaves(elements):
        for name in ("angle", "phase", "duration", "detuning"):
            val = getattr(e, name, 0.0)
            if not isinstance(val, numbers.Real):
                raise TypeError(f"unresolved parameter {name}={val!r} in {e!r}")
    return _product(elements, system, {})


def _iter_leaves(elements):
    for e in elements:
        if isinstance(e, (Repeat, Adjoint)):
            yield from _iter_leaves(e.body)
        else:
            yield e


def evolve(rho, u):
    """Return U rho U^dagger."""
    if rho.shape != u.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs U {u.shape}")
    return u @ rho @ u.conj().T


def initial_state(system):
    """|alpha><alpha| x (identity / 2**K): electron polarised, nuclei unpolarised."""
    k = system.n_nuclei
    return np.kron(P_ALPHA, np.eye(2**k, dtype=complex) / 2**k)
