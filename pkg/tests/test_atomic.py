import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import simpson

from rydberg_ati.atomic import (
    FineState,
    HyperfineState,
    angular_dipole,
    effective_n,
    forster_defect,
    hydrogen_like,
    hyperfine_dipole,
    hyperfine_to_fine,
    load_species,
    radial_matrix_element,
    state_energy,
)
from rydberg_ati.textio import ConfigError

TWO_PI = 2 * math.pi
SPEED_OF_LIGHT_CM_PER_US = 2.99792458e4


def test_hydrogen_levels_follow_rydberg_formula():
    h = hydrogen_like()
    for n in (2, 5, 30, 60):
        for l in (0, 1, 2):
            if l >= n:
                continue
            for j in (l - 0.5, l + 0.5):
                if j < 0:
                    continue
                expect = -TWO_PI * SPEED_OF_LIGHT_CM_PER_US * h.rydberg_constant / n**2
                assert state_energy((n, l, j), h) == pytest.approx(expect, rel=1e-12)


def test_hydrogen_1s_2p_radial_element():
    # closed form 128 sqrt(6) / 243 a0
    h = hydrogen_like()
    assert abs(radial_matrix_element((1, 0, 0.5), (2, 1, 0.5), h)) == pytest.approx(128 * math.sqrt(6) / 243, rel=1e-3)


def _coulomb_element(a, b, species):
    """Coulomb approximation: Whittaker functions at the effective n."""
    na, nb = effective_n(*a, species), effective_n(*b, species)
    r = np.linspace(1.0, 3 * max(na, nb) ** 2, 3000)
    ua = np.array([float(mpmath.whitw(na, a[1] + 0.5, 2 * x / na)) for x in r])
    ub = np.array([float(mpmath.whitw(nb, b[1] + 0.5, 2 * x / nb)) for x in r])
    ua /= math.sqrt(simpson(ua**2, x=r))
    ub /= math.sqrt(simpson(ub**2, x=r))
    return abs(simpson(ua * ub * r, x=r))


def test_rydberg_radial_element_against_coulomb_approximation(species):
    a, b = (38, 0, 0.5), (38, 1, 1.5)
    oracle = _coulomb_element(a, b, species)
    assert abs(radial_matrix_element(a, b, species)) == pytest.approx(oracle, rel=0.05)


def test_radial_element_symmetric_and_selection_rule(species):
    a, b = (38, 0, 0.5), (39, 1, 0.5)
    assert radial_matrix_element(a, b, species) == radial_matrix_element(b, a, species)
    with pytest.raises(ValueError):
        radial_matrix_element((38, 0, 0.5), (39, 0, 0.5), species)


def test_radial_element_scales_with_effective_n(species):
    # nearest-neighbour elements grow as n*^2
    r37 = abs(radial_matrix_element((37, 0, 0.5), (37, 1, 1.5), species))
    r39 = abs(radial_matrix_element((39, 0, 0.5), (39, 1, 1.5), species))
    ratio = (effective_n(39, 0, 0.5, species) / effective_n(37, 0, 0.5, species)) ** 2
    assert r39 / r37 == pytest.approx(ratio, rel=0.02)


def test_forster_defect_near_resonant_channel(species):
    d = forster_defect([(38, 0, 0.5), (39, 0, 0.5)], [(38, 1, 1.5), (38, 1, 1.5)], species) / TWO_PI
    assert 2.8 <= d <= 5.8


def test_forster_defect_antisymmetric(species):
    a = [(38, 0, 0.5), (39, 0, 0.5)]
    b = [(38, 1, 0.5), (38, 1, 1.5)]
    assert forster_defect(a, b, species) == pytest.approx(-forster_defect(b, a, species))


def test_angular_dipole_sum_rule():
    # sum over m_b and q of |<b|C_q|a>|^2 = |<b||C||a>|^2 / (2 j_a + 1), independent of m_a
    from rydberg_ati.atomic import reduced_angular_lj

    ja, jb = 0.5, 1.5
    red = reduced_angular_lj(1, jb, 0, ja) ** 2 / (2 * ja + 1)
    for ma in (-0.5, 0.5):
        a = FineState(38, 0, ja, ma)
        tot = sum(
            angular_dipole(a, FineState(38, 1, jb, ma + q), q) ** 2
            for q in (-1, 0, 1)
            if abs(ma + q) <= jb
        )
        assert tot == pytest.approx(red, rel=1e-12)


def test_hyperfine_dipole_matches_fine_expansion():
    # coupled-basis element equals the CG-weighted sum of fine elements
    I = 1.5
    g = HyperfineState(5, 0, 0.5, 1.0, 0.0, I)
    e = HyperfineState(6, 1, 1.5, 2.0, 1.0, I)
    direct = hyperfine_dipole(g, e, 1)
    expanded = 0.0
    for mjg, mIg, cg in hyperfine_to_fine(0.5, I, 1.0, 0.0):
        for mje, mIe, ce in hyperfine_to_fine(1.5, I, 2.0, 1.0):
            if mIe == mIg:
                expanded += cg * ce * angular_dipole(FineState(5, 0, 0.5, mjg), FineState(6, 1, 1.5, mje), 1)
    assert direct == pytest.approx(expanded, abs=1e-12)


def test_species_file_errors(tmp_path):
    p = tmp_path / "bad.dat"
    p.write_text("[atom]\nname = X\n")
    with pytest.raises(ConfigError):
        load_species(p)
    with pytest.raises(ConfigError):
        load_species(tmp_path / "missing.dat")


def test_invalid_state_rejected(species):
    with pytest.raises(ValueError):
        FineState(5, 1, 2.5, 0.5)
    with pytest.raises(ValueError):
        state_energy((1, 1, 0.5), species)
