import math

import numpy as np
import pytest

from nvnmr.operators import SX, SZ
from nvnmr.spinsys import (
    ISOTOPES,
    FreeHamiltonianKind,
    FreeKind,
    Isotope,
    Nucleus,
    SpinSystem,
    effective_cp_hamiltonian,
    free_hamiltonian,
    get_isotope,
    hyperfine_from_lines,
    larmor_frequency,
    manifold_hamiltonian,
    nv15_lines,
    rabi_angular_frequency,
)


def test_larmor_table_values():
    assert larmor_frequency(ISOTOPES["1H"], 0.174) == pytest.approx(7.4085, abs=1e-3)
    assert larmor_frequency(ISOTOPES["13C"], 0.174) == pytest.approx(1.8633, abs=1e-3)
    assert larmor_frequency(ISOTOPES["15N"], 0.174) == pytest.approx(0.7512, abs=1e-3)


def test_larmor_uses_magnitude_of_negative_gamma():
    assert larmor_frequency(ISOTOPES["15N"], 1.0) > 0


@pytest.mark.parametrize("b0", [0.0, -0.1])
def test_larmor_rejects_nonpositive_field(b0):
    with pytest.raises(ValueError):
        larmor_frequency(ISOTOPES["1H"], b0)


def test_nv15_lines_sorted_and_split_by_hyperfine():
    lo, hi = nv15_lines(0.174)
    assert lo < hi
    assert lo == pytest.approx(0.75, abs=0.01)
    assert hi == pytest.approx(2.30, abs=0.01)
    lo2, hi2 = nv15_lines(0.348)
    assert (lo2, hi2) == pytest.approx((1.5024, 1.5476), abs=1e-3)


def test_isotope_validation():
    with pytest.raises(ValueError):
        Isotope("X", 0.0)
    with pytest.raises(ValueError):
        Isotope("X", 1.0, spin=1.0)
    with pytest.raises(KeyError):
        get_isotope("2H")


def test_system_validation(c13):
    with pytest.raises(ValueError):
        SpinSystem(0.0)
    with pytest.raises(ValueError):
        SpinSystem(0.1, tuple(Nucleus(c13) for _ in range(7)))
    with pytest.raises(ValueError):
        Nucleus(c13, 0.0, -1.0)
    with pytest.raises(ValueError):
        SpinSystem(0.1, (), t1_electron=1e-6, t2_electron=1e-3)


def test_resonant_tau_fig4(ref_system):
    # center frequency 2.09321 + 4.02350 / 2 = 4.10496 MHz
    assert ref_system.center_frequency_hz(0) == pytest.approx(4.10496e6, rel=1e-6)
    assert ref_system.resonant_tau(0) == pytest.approx(121.8e-9, rel=1e-3)
    assert ref_system.resonant_tau(0, harmonic=3) == pytest.approx(3 * ref_system.resonant_tau(0))


def test_free_hamiltonian_empty_system():
    h = free_hamiltonian(SpinSystem(0.2))
    assert h.shape == (2, 2)
    assert np.all(h == 0)


def test_free_hamiltonian_is_block_diagonal(ref_system):
    h = free_hamiltonian(ref_system)
    assert h.shape == (4, 4)
    assert np.allclose(h[:2, 2:], 0)
    assert np.allclose(h, h.conj().T)
    ha = manifold_hamiltonian(ref_system, "alpha")
    hb = manifold_hamiltonian(ref_system, "beta")
    assert np.allclose(h[:2, :2], ha)
    assert np.allclose(h[2:, 2:], hb)


def test_manifold_eigenfrequencies(ref_system):
    fl = ref_system.larmor_hz(0)
    nuc = ref_system.nuclei[0]
    wa = np.linalg.eigvalsh(manifold_hamiltonian(ref_system, "alpha"))
    wb = np.linalg.eigvalsh(manifold_hamiltonian(ref_system, "beta"))
    assert (wa[1] - wa[0]) / (2 * math.pi) == pytest.approx(fl, rel=1e-12)
    expected_b = math.hypot(fl + nuc.a_par, nuc.a_perp)
    assert (wb[1] - wb[0]) / (2 * math.pi) == pytest.approx(expected_b, rel=1e-12)


def test_manifold_rejects_bad_state(ref_system):
    with pytest.raises(ValueError):
        manifold_hamiltonian(ref_system, "gamma")


def test_effective_cp_hamiltonian_norm(c13):
    # spectral norm (a_perp / pi) * 2 * |Sz x Ix| = a_perp / (2 pi) in rad/s
    nuc = Nucleus(c13, 0.0, 1000.0)
    h = effective_cp_hamiltonian(nuc)
    a_perp = 2 * math.pi * 1000.0
    assert np.linalg.norm(h, 2) == pytest.approx(a_perp / (2 * math.pi))
    assert np.allclose(h, (a_perp / math.pi) * 2 * np.kron(SZ, SX))
    assert rabi_angular_frequency(nuc) == pytest.approx(a_perp / math.pi)


def test_free_kind_parsing():
    assert FreeHamiltonianKind("h2").kind is FreeKind.H2
    assert FreeHamiltonianKind.h3(1e-7).tau == 1e-7
    with pytest.raises(ValueError):
        FreeHamiltonianKind.h3(0)
    with pytest.raises(ValueError):
        FreeHamiltonianKind("H4")


def test_hyperfine_from_lines_inverts_tilted_line():
    fl, apar, aperp = 2.09321e6, 4.0235e6, 251.35e3
    fb = math.hypot(fl + apar, aperp)
    assert hyperfine_from_lines(fl, fb, aperp) == pytest.approx((fl, apar), rel=1e-12)
    assert hyperfine_from_lines(fl, fl + apar) == pytest.approx((fl, apar))
