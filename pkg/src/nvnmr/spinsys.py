"""Physical model: isotopes, hyperfine-coupled nuclei and the spin Hamiltonians.

Convention
----------
The electron is restricted to the m_S = 0 (|alpha>) and m_S = -1 (|beta>)
manifolds.  Hyperfine terms act only in |beta>::

    H = |a><a| x sum_j w_j Iz_j
      + |b><b| x sum_j [(w_j + a_par_j) Iz_j + a_perp_j Ix_j]

so the two nuclear lines sit at ``w`` and ``w + a_par``.  This differs from the
symmetric ``w Iz + a_par Sz Iz + a_perp Sz Ix`` form only by the frame shift
``w -> w + a_par / 2``; the multipulse resonance ``tau = pi / (w + a_par / 2)``
uses that centre frequency.

Frequencies on the public surface are in Hz; matrices are in rad/s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .constants import MAX_NUCLEI, MHZ, TWO_PI
from .operators import SX, SZ, joint_from_manifolds, nuclear_embed

NV15_HYPERFINE_HZ = 3.05 * MHZ


@dataclass(frozen=True)
class Isotope:
    name: str
    gamma: float  # MHz / T, signed
    spin: float = 0.5

    def __post_init__(self):
        if self.gamma == 0:
            raise ValueError(f"isotope {self.name!r}: gamma must be nonzero")
        if self.spin != 0.5:
            raise ValueError("only spin-1/2 nuclei are supported")


ISOTOPES = {
    iso.name: iso
    for iso in (
        Isotope("1H", 42.57748),
        Isotope("13C", 10.70840),
        Isotope("15N", -4.31727),
        Isotope("19F", 40.07758),
        Isotope("29Si", -8.46550),
        Isotope("31P", 17.23513),
    )
}


def get_isotope(name):
    try:
        return ISOTOPES[name]
    except KeyError:
        raise KeyError(f"unknown isotope {name!r}; known: {sorted(ISOTOPES)}") from None


@dataclass(frozen=True)
class Nucleus:
    """A spin-1/2 nucleus with hyperfine couplings in Hz."""

    isotope: Isotope
    a_par: float = 0.0
    a_perp: float = 0.0

    def __post_init__(self):
        if self.a_perp < 0:
            raise ValueError("a_perp must be non-negative")


@dataclass(frozen=True)
class SpinSystem:
    b0: float  # tesla
    nuclei: tuple = ()
    t1_electron: float = math.inf
    t2_electron: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if not self.b0 > 0:
            raise ValueError("b0 must be positive")
        if len(self.nuclei) > MAX_NUCLEI:
            raise ValueError(f"at most {MAX_NUCLEI} nuclei supported (got {len(self.nuclei)})")
        if not self.t2_electron > 0:
            raise ValueError("t2_electron must be positive")
        if self.t1_electron < self.t2_electron:
            raise ValueError("t1_electron must be >= t2_electron")

    @property
    def n_nuclei(self):
        return len(self.nuclei)

    @property
    def dim(self):
        return 2 ** (self.n_nuclei + 1)

    def larmor_hz(self, index):
        return larmor_frequency(self.nuclei[index].isotope, self.b0) * MHZ

    def center_frequency_hz(self, index):
        """Nuclear precession frequency averaged over both electron manifolds."""
        return self.larmor_hz(index) + self.nuclei[index].a_par / 2

    def resonant_tau(self, index=0, harmonic=1):
        """Interpulse delay that puts the CP filter on nucleus ``index``."""
        return harmonic / (2 * self.center_frequency_hz(index))


class FreeKind(enum.Enum):
    H1 = "H1"  # single electron flip at t/2
    H2 = "H2"  # no flip
    H3 = "H3"  # electron flips every tau


@dataclass(frozen=True)
class FreeHamiltonianKind:
    kind: FreeKind
    tau: float | None = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", FreeKind(self.kind.upper()))
        if self.kind is FreeKind.H3 and not (self.tau is not None and self.tau > 0):
            raise ValueError("H3 requires a positive flip spacing tau")

    @classmethod
    def h1(cls):
        return cls(FreeKind.H1)

    @classmethod
    def h2(cls):
        return cls(FreeKind.H2)

    @classmethod
    def h3(cls, tau):
        return cls(FreeKind.H3, tau)


def larmor_frequency(isotope, b0):
    """Bare Zeeman frequency |gamma| * b0 in MHz."""
    if not b0 > 0:
        raise ValueError("b0 must be positive")
    return abs(isotope.gamma) * b0


def nv15_lines(b0):
    """The two 15N lines of the intrinsic NV nitrogen, MHz, ascending."""
    f = larmor_frequency(ISOTOPES["15N"], b0)
    return tuple(sorted((f, abs(f - NV15_HYPERFINE_HZ / MHZ))))


def manifold_hamiltonian(system, electron_state):
    """Nuclear Hamiltonian (rad/s, dim 2**K) for a fixed electron manifold.

    ``electron_state`` is ``"alpha"`` (m_S = 0, no hyperfine field) or
    ``"beta"`` (m_S = -1).
    """
    if electron_state not in ("alpha", "beta"):
        raise ValueError("electron_state must be 'alpha' or 'beta'")
    k = system.n_nuclei
    h = np.zeros((2**k, 2**k), dtype=complex)
    for j, nuc in enumerate(system.nuclei):
        w = TWO_PI * system.larmor_hz(j)
        if electron_state == "alpha":
            h += w * nuclear_embed(SZ, j, k)
        else:
            h += TWO_PI * (
                (system.larmor_hz(j) + nuc.a_par) * nuclear_embed(SZ, j, k)
                + nuc.a_perp * nuclear_embed(SX, j, k)
            )
    return h


def free_hamiltonian(system, electron_state=None):
    """Free-precession Hamiltonian.

    With ``electron_state`` set, returns the conditional nuclear-sector block;
    otherwise the full joint operator ``|a><a| x H_a + |b><b| x H_b`` of
    dimension ``2**(K+1)``.  For K = 0 the joint result is the 2x2 zero matrix.
    """
    if electron_state is not None:
        return manifold_hamiltonian(system, electron_state)
    return joint_from_manifolds(
        manifold_hamiltonian(system, "alpha"), manifold_hamiltonian(system, "beta")
    )


def effective_cp_hamiltonian(nucleus):
    """Effective on-resonance CP Hamiltonian ``(a_perp / pi) * 2 Sz x Ix`` (rad/s).

    Each electron manifold drives the nucleus at angular rate a_perp / pi in
    opposite senses, so the entangling angle after time t is a_perp t / pi.
    """
    a_perp = TWO_PI * nucleus.a_perp
    return (a_perp / math.pi) * 2 * np.kron(SZ, SX)


def rabi_angular_frequency(nucleus):
    """Weak-coupling nuclear Rabi rate a_perp / pi in rad/s."""
    return TWO_PI * nucleus.a_perp / math.pi


def hyperfine_from_lines(f_alpha, f_beta, a_perp=0.0):
    """Recover (larmor, a_par) in Hz from the two free-precession lines.

    The m_S = -1 line precesses about a tilted axis at
    ``sqrt((w + a_par)**2 + a_perp**2)``; pass a known ``a_perp`` to undo the tilt.
    """
    shifted = math.sqrt(max(f_beta**2 - a_perp**2, 0.0))
    return f_alpha, shifted - f_alpha


__all__ = [
    "ISOTOPES",
    "FreeHamiltonianKind",
    "FreeKind",
    "Isotope",
    "Nucleus",
    "SpinSystem",
    "effective_cp_hamiltonian",
    "free_hamiltonian",
    "get_isotope",
    "hyperfine_from_lines",
    "larmor_frequency",
    "manifold_hamiltonian",
    "nv15_lines",
    "rabi_angular_frequency",
]
