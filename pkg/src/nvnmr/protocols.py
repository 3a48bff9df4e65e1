"""Measurement protocols: multipulse sweeps, free-precession FIDs and 2D maps.

Every free-precession acquisition is simulated twice, with the last pi/2 of the
entangling block at phase +y and -y, while the readout block is fixed at +y.
With ``p_pm`` the two outcomes::

    electronic = (p_+ + p_-) / 2 - 1/2      (cos^2 phi term)
    nuclear    = (p_+ - p_-) / 2            (sin^2 phi term)

A phase-cycled signal reports ``nuclear``; a plain one reports ``p_+``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    Delay,
    Pulse,
    PulseSequence,
    Repeat,
    delay_unitary,
    initial_state,
    pulse_unitary,
    sequence_unitary,
)
from .operators import P_ALPHA, SX, SZ
from .spinsys import FreeHamiltonianKind, FreeKind, SpinSystem

XY8_PHASES = (0.0, math.pi / 2, 0.0, math.pi / 2, math.pi / 2, 0.0, math.pi / 2, 0.0)

# relative tolerance for the "on resonance" precondition of the closed form
RESONANCE_RTOL = 1e-6


@dataclass(frozen=True)
class CpParams:
    n_pulses: int
    tau: float
    phase_pattern: str = "CP"
    pulse_duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phase_pattern", self.phase_pattern.upper())
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if self.phase_pattern not in ("CP", "XY8"):
            raise ValueError(f"unknown phase pattern {self.phase_pattern!r}")
        if self.phase_pattern == "XY8" and self.n_pulses % 8:
            raise ValueError("XY8 needs a multiple of 8 pulses")
        if not self.tau > self.pulse_duration:
            raise ValueError("tau must exceed the pulse duration")

    @property
    def total_time(self):
        return self.n_pulses * self.tau

    @property
    def filter_frequency(self):
        """Demodulation frequency 1 / (2 tau) in Hz."""
        return 1 / (2 * self.tau)


@dataclass(frozen=True)
class AcquisitionGrid:
    start: float
    dwell: float
    count: int

    def __post_init__(self):
        if not self.dwell > 0:
            raise ValueError("dwell must be positive")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @property
    def times(self):
        return self.start + self.dwell * np.arange(self.count)

    @property
    def nyquist(self):
        return 1 / (2 * self.dwell)


@dataclass(frozen=True, eq=False)
class Signal:
    grid: AcquisitionGrid
    values: np.ndarray
    electronic: np.ndarray | None = None
    nuclear: np.ndarray | None = None
    phase_cycled: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.values) != self.grid.count:
            raise ValueError("signal length does not match grid")

    @property
    def t(self):
        return self.grid.times

    def with_components(self, electronic, nuclear, baseline=0.5):
        values = nuclear if self.phase_cycled else baseline + electronic + nuclear
        return replace(self, values=np.asarray(values), electronic=electronic, nuclear=nuclear)


@dataclass(frozen=True, eq=False)
class Signal2D:
    grid1: AcquisitionGrid
    grid2: AcquisitionGrid
    values: np.ndarray
    electronic: np.ndarray | None = None
    nuclear: np.ndarray | None = None
    phase_cycled: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.grid1.count, self.grid2.count):
            raise ValueError("2D signal shape does not match grids")


# --------------------------------------------------------------------------
# sequence builders


def pi_train(cp):
    """The N pi pulses with tau/2 padding, as a Repeat block."""
    d = cp.pulse_duration
    half = Delay(cp.tau / 2 - d / 2)
    if cp.phase_pattern == "CP":
        body = (half, Pulse(math.pi, 0.0, d), half)
        return Repeat(cp.n_pulses, body)
    body = []
    for ph in XY8_PHASES:
        body += [half, Pulse(math.pi, ph, d), half]
    return Repeat(cp.n_pulses // 8, tuple(body))


def ucp_sequence(cp, last_phase=math.pi / 2):
    """pi/2_x - (tau/2 - pi - tau/2)^N - pi/2_(last_phase)."""
    d = cp.pulse_duration / 2
    return PulseSequence(
        (Pulse(math.pi / 2, 0.0, d), pi_train(cp), Pulse(math.pi / 2, last_phase, d))
    )


def multipulse_sequence(cp):
    """pi/2_x - train - pi/2_-x: returns the electron to |alpha> off resonance."""
    return ucp_sequence(cp, last_phase=math.pi)


def _p_alpha(system):
    k = system.n_nuclei
    return np.kron(P_ALPHA, np.eye(2**k, dtype=complex))


def _prob_alpha(u, rho0, proj):
    return float(np.real(np.trace(proj @ u @ rho0 @ u.conj().T)))


# --------------------------------------------------------------------------
# multipulse


def multipulse_sweep(system, taus, n_pulses, phase_pattern="CP", pulse_duration=0.0):
    """Conventional multipulse signal p(tau) over a uniform tau grid."""
    grid = taus if isinstance(taus, AcquisitionGrid) else _grid_from_array(taus)
    rho0 = initial_state(system)
    proj = _p_alpha(system)
    p = np.empty(grid.count)
    for i, tau in enumerate(grid.times):
        cp = CpParams(n_pulses, tau, phase_pattern, pulse_duration)
        p[i] = _prob_alpha(sequence_unitary(multipulse_sequence(cp), system), rho0, proj)
    meta = {
        "protocol": "multipulse",
        "axis": "tau",
        "n_pulses": n_pulses,
        "phase_pattern": phase_pattern,
        "pulse_duration": pulse_duration,
    }
    return Signal(grid, p, electronic=p - 0.5, nuclear=np.zeros_like(p), metadata=meta)


def multipulse_decay(system, cp, grid):
    """Multipulse signal versus total time N * tau (pulse number incremented).

    Grid times must be even multiples of ``cp.tau``.
    """
    rho0 = initial_state(system)
    proj = _p_alpha(system)
    p = np.empty(grid.count)
    for i, t in enumerate(grid.times):
        n = _whole_periods(t, 2 * cp.tau) * 2
        if n == 0:
            p[i] = 1.0
            continue
        c = replace(cp, n_pulses=n, phase_pattern="CP")
        p[i] = _prob_alpha(sequence_unitary(multipulse_sequence(c), system), rho0, proj)
    meta = {"protocol": "multipulse_decay", "axis": "t", "tau": cp.tau}
    return Signal(grid, p, electronic=p - 0.5, nuclear=np.zeros_like(p), metadata=meta)


def _whole_periods(t, period):
    n = round(t / period)
    if abs(n * period - t) > 1e-6 * period:
        raise ValueError(f"time {t} is not a multiple of {period}")
    return n


def _grid_from_array(taus):
    taus = np.asarray(taus, dtype=float)
    if taus.size == 1:
        return AcquisitionGrid(float(taus[0]), 1.0, 1)
    d = np.diff(taus)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("tau values must form a uniform grid")
    return AcquisitionGrid(float(taus[0]), float(d[0]), len(taus))


# --------------------------------------------------------------------------
# free precession


class _FreeEvolution:
    """Builds U_free(t) for the three free-precession Hamiltonians."""

    def __init__(self, system, kind):
        self.system = system
        self.kind = kind
        self.flip = pulse_unitary(Pulse(math.pi), system)
        if kind.kind is FreeKind.H3:
            self.cycle = delay_unitary(kind.tau, system) @ self.flip
            self._powers = {0: np.eye(system.dim, dtype=complex)}

    def __call__(self, t):
        if t < 0:
            raise ValueError("evolution time must be non-negative")
        k = self.kind.kind
        if k is FreeKind.H2:
            return delay_unitary(t, self.system)
        if k is FreeKind.H1:
            half = delay_unitary(t / 2, self.system)
            return half @ self.flip @ half
        n = int(math.floor(t / self.kind.tau + 1e-9))
        rest = max(t - n * self.kind.tau, 0.0)
        return delay_unitary(rest, self.system) @ self._power(n)

    def _power(self, n):
        if n not in self._powers:
            self._powers[n] = np.linalg.matrix_power(self.cycle, n)
        return self._powers[n]


def _blocks(system, cp):
    rho0 = initial_state(system)
    u_plus = sequence_unitary(ucp_sequence(cp, math.pi / 2), system)
    u_minus = sequence_unitary(ucp_sequence(cp, -math.pi / 2), system)
    sig_plus = u_plus @ rho0 @ u_plus.conj().T
    sig_minus = u_minus @ rho0 @ u_minus.conj().T
    # readout operator U_read (P_alpha x 1) U_read^dag with U_read = U_plus
    readout = u_plus @ _p_alpha(system) @ u_plus.conj().T
    return sig_plus, sig_minus, readout


def _overlap(readout, uf, sigma):
    return float(np.real(np.einsum("ij,ji->", readout, uf @ sigma @ uf.conj().T)))


def fid_protocol(system, cp, kind, grid, phase_cycle=True):
    """Free-precession signal p(t1) for U_cp^dag U_free(t1) U_cp."""
    if not isinstance(kind, FreeHamiltonianKind):
        kind = FreeHamiltonianKind(kind)
    sig_plus, sig_minus, readout = _blocks(system, cp)
    free = _FreeEvolution(system, kind)
    pp = np.empty(grid.count)
    pm = np.empty(grid.count)
    for i, t in enumerate(grid.times):
        uf = free(t)
        pp[i] = _overlap(readout, uf, sig_plus)
        pm[i] = _overlap(readout, uf, sig_minus)
    meta = {
        "protocol": "fid",
        "kind": kind.kind.value,
        "kind_tau": kind.tau,
        "n_pulses": cp.n_pulses,
        "tau": cp.tau,
        "phase_pattern": cp.phase_pattern,
    }
    elec, nuc = (pp + pm) / 2 - 0.5, (pp - pm) / 2
    values = nuc if phase_cycle else pp
    return Signal(grid, values, elec, nuc, phase_cycle, meta)


def protocol_2d(system, cp, grid1, grid2, tau3, phase_cycle=True):
    """Two-dimensional acquisition: H1 for t1, then H3 (flip spacing tau3) for t2."""
    sig_plus, sig_minus, readout = _blocks(system, cp)
    h1 = _FreeEvolution(system, FreeHamiltonianKind.h1())
    h3 = _FreeEvolution(system, FreeHamiltonianKind.h3(tau3))
    shape = (grid1.count, grid2.count)
    pp = np.empty(shape)
    pm = np.empty(shape)
    u2 = [h3(t2) for t2 in grid2.times]
    for i, t1 in enumerate(grid1.times):
        u1 = h1(t1)
        for j in range(grid2.count):
            uf = u2[j] @ u1
            pp[i, j] = _overlap(readout, uf, sig_plus)
            pm[i, j] = _overlap(readout, uf, sig_minus)
    elec, nuc = (pp + pm) / 2 - 0.5, (pp - pm) / 2
    meta = {"protocol": "2d", "n_pulses": cp.n_pulses, "tau": cp.tau, "tau3": tau3}
    return Signal2D(grid1, grid2, nuc if phase_cycle else pp, elec, nuc, phase_cycle, meta)


# --------------------------------------------------------------------------
# closed-form single-nucleus oracle


def _su2(theta, nx, ny, nz):
    """exp(-i theta (n . I)) for a unit vector n, I = sigma / 2."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c - 1j * s * nz, -1j * s * (nx - 1j * ny)], [-1j * s * (nx + 1j * ny), c + 1j * s * nz]]
    )


def _precession(wz, wx, t):
    norm = math.hypot(wz, wx)
    if norm == 0:
        return np.eye(2, dtype=complex)
    return _su2(norm * t, wx / norm, 0.0, wz / norm)


def _su2_power(m, n):
    """m**n for m in SU(2) via its rotation angle."""
    if n == 0:
        return np.eye(2, dtype=complex)
    c = max(-1.0, min(1.0, (m[0, 0] + m[1, 1]).real / 2))
    half = math.acos(c)
    s = math.sin(half)
    if abs(s) < 1e-15:
        return np.linalg.matrix_power(m, n)
    # m = cos(h) - i sin(h) (n . sigma)
    a = (m - c * np.eye(2)) / (-1j * s)
    return math.cos(n * half) * np.eye(2) - 1j * math.sin(n * half) * a


def analytic_signal(system, cp, kind, t1, phase_cycle=True):
    """Closed-form p(t1) for one nucleus, ideal pulses, on-resonance tau.

    The post-U_cp state is taken as ``1/4 + cos(phi) e + sin(phi) n`` with
    ``phi = a_perp N tau / pi``, ``e`` an electron coherence and ``n = Sz Ix``.
    The free evolution enters through the electronic and nuclear overlap
    terms, computed branch by branch from 2x2 nuclear rotations.
    """
    if system.n_nuclei != 1:
        raise ValueError("analytic_signal handles exactly one nucleus")
    if cp.pulse_duration != 0:
        raise ValueError("analytic_signal requires ideal delta pulses")
    if cp.n_pulses % 2:
        raise ValueError("analytic_signal requires an even number of pulses")
    tau0 = system.resonant_tau(0)
    if abs(cp.tau - tau0) > RESONANCE_RTOL * tau0:
        raise ValueError(f"tau={cp.tau} is off resonance (expected {tau0}); closed form invalid")
    if not isinstance(kind, FreeHamiltonianKind):
        kind = FreeHamiltonianKind(kind)

    nuc = system.nuclei[0]
    w = 2 * math.pi * system.larmor_hz(0)
    a = 2 * math.pi * nuc.a_par
    b = 2 * math.pi * nuc.a_perp
    phi = b * cp.n_pulses * cp.tau / math.pi

    def v(manifold, t):
        return _precession(w, 0.0, t) if manifold == 0 else _precession(w + a, b, t)

    if kind.kind is FreeKind.H2:
        wa, wb, flips = v(0, t1), v(1, t1), 0
    elif kind.kind is FreeKind.H1:
        wa = v(1, t1 / 2) @ v(0, t1 / 2)
        wb = v(0, t1 / 2) @ v(1, t1 / 2)
        flips = 1
    else:
        tau3 = kind.tau
        n = int(math.floor(t1 / tau3 + 1e-9))
        rest = max(t1 - n * tau3, 0.0)
        wa = _h3_branch(v, 1, n, tau3, rest)
        wb = _h3_branch(v, 0, n, tau3, rest)
        flips = n

    sign = -1.0 if flips % 2 else 1.0
    ix = SX
    t_a = np.trace(ix @ wa @ ix @ wa.conj().T).real
    t_b = np.trace(ix @ wb @ ix @ wb.conj().T).real
    nuclear_term = sign * (t_a + t_b)
    electronic_term = sign * 0.5 * np.trace(wa @ wb.conj().T).real

    elec = math.cos(phi) ** 2 * electronic_term / 2
    nucl = math.sin(phi) ** 2 * nuclear_term / 2
    return nucl if phase_cycle else 0.5 + elec + nucl


def _h3_branch(v, first, n, tau3, rest):
    # manifolds alternate first, 1-first, ... for n periods, then rest in the last one
    pair = v(1 - first, tau3) @ v(first, tau3)
    u = _su2_power(pair, n // 2)
    if n % 2:
        u = v(first, tau3) @ u
    last = first if n % 2 else 1 - first
    if n == 0:
        last = 1 - first  # no flip happened: branch still in its starting manifold
    return v(last, rest) @ u


# --------------------------------------------------------------------------
# envelopes and noise


def apply_envelopes(signal, system, kind=None, times=None):
    """Damp the electronic part with T2 and the nuclear part with T1.

    ``times`` overrides the decay clock, e.g. ``N * tau`` for a tau sweep.
    """
    if signal.electronic is None or signal.nuclear is None:
        raise ValueError("signal carries no component decomposition")
    if times is not None:
        t = np.asarray(times, dtype=float)
    elif isinstance(signal, Signal2D):
        t = signal.grid1.times[:, None] + signal.grid2.times[None, :]
    else:
        t = signal.t
    e2 = _decay(t, system.t2_electron)
    e1 = _decay(t, system.t1_electron)
    elec = signal.electronic * e2
    nuc = signal.nuclear * e1
    values = nuc if signal.phase_cycled else 0.5 + elec + nuc
    meta = dict(signal.metadata, envelopes=True)
    return replace(signal, values=values, electronic=elec, nuclear=nuc, metadata=meta)


def _decay(t, T):
    if math.isinf(T):
        return np.ones_like(t, dtype=float)
    return np.exp(-np.asarray(t) / T)


def add_shot_noise(signal, photons_per_readout, contrast, averages, seed):
    """Photon-counting noise on each acquisition, reproducible per point.

    Each point draws from its own generator seeded with (seed, index), so the
    result does not depend on evaluation order.
    """
    if not photons_per_readout > 0:
        raise ValueError("photons_per_readout must be positive")
    if not 0 < contrast <= 1:
        raise ValueError("contrast must lie in (0, 1]")
    if averages < 1:
        raise ValueError("averages must be >= 1")
    if signal.electronic is None:
        raise ValueError("signal carries no component decomposition")
    elec = np.asarray(signal.electronic, dtype=float)
    nuc = np.asarray(signal.nuclear, dtype=float)
    p_plus = (0.5 + elec + nuc).ravel()
    p_minus = (0.5 + elec - nuc).ravel()
    n0 = photons_per_readout * averages
    noisy_plus = np.empty_like(p_plus)
    noisy_minus = np.empty_like(p_minus)
    for i in range(p_plus.size):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        for src, dst in ((p_plus, noisy_plus), (p_minus, noisy_minus)):
            p = min(max(src[i], 0.0), 1.0)
            k = rng.poisson(n0 * (1 - contrast * (1 - p)))
            dst[i] = 1 - (1 - k / n0) / contrast
    shape = elec.shape
    noisy_plus = noisy_plus.reshape(shape)
    noisy_minus = noisy_minus.reshape(shape)
    new_elec = (noisy_plus + noisy_minus) / 2 - 0.5
    new_nuc = (noisy_plus - noisy_minus) / 2
    values = new_nuc if signal.phase_cycled else noisy_plus
    meta = dict(signal.metadata, noise_seed=int(seed), photons=photons_per_readout,
                contrast=contrast, averages=averages)
    return replace(signal, values=values, electronic=new_elec, nuclear=new_nuc, metadata=meta)


def shot_noise_sigma(p, photons_per_readout, contrast, averages):
    """Standard deviation of the estimated p for one acquisition."""
    n0 = photons_per_readout * averages
    return math.sqrt((1 - contrast * (1 - p)) / n0) / contrast


def phi_for_quarter_turn(system, index=0):
    """Even pulse count whose weak-coupling entangling angle is closest to pi/2."""
    nuc = system.nuclei[index]
    if nuc.a_perp <= 0:
        raise ValueError("a_perp must be positive to entangle")
    tau = system.resonant_tau(index)
    n = (math.pi / 2) * math.pi / (2 * math.pi * nuc.a_perp * tau)
    return max(2, 2 * round(n / 2))


__all__ = [
    "AcquisitionGrid",
    "CpParams",
    "Signal",
    "Signal2D",
    "SpinSystem",
    "XY8_PHASES",
    "add_shot_noise",
    "analytic_signal",
    "apply_envelopes",
    "fid_protocol",
    "multipulse_decay",
    "multipulse_sequence",
    "multipulse_sweep",
    "phi_for_quarter_turn",
    "pi_train",
    "protocol_2d",
    "shot_noise_sigma",
    "ucp_sequence",
]
