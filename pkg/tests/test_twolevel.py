import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_ati.atomic import default_species
from rydberg_ati.probing import ProbeField, scattering_rate
from rydberg_ati.twolevel import (
    FitError,
    InteractionFit,
    ShiftTrace,
    at_shift,
    extract_shift_trace,
    fit_c3c6,
    rydberg_only_hamiltonian,
    two_level_rates,
    two_level_transfer_ratio,
)

TWO_PI = 2 * math.pi


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 500.0), st.floats(-500.0, 500.0))
def test_at_shift_matches_dressed_eigenvalues(omega_c, delta_c):
    # |e> at 0 coupled to |r> at -delta_c with strength omega_c / 2
    h = np.array([[0.0, omega_c / 2], [omega_c / 2, -delta_c]])
    lo, hi = np.linalg.eigvalsh(h)
    minus, plus = at_shift(omega_c, delta_c)
    assert minus == pytest.approx(lo, abs=1e-9 * (1 + abs(delta_c) + omega_c))
    assert plus == pytest.approx(hi, abs=1e-9 * (1 + abs(delta_c) + omega_c))


def test_at_shift_limits():
    assert set(np.round(at_shift(0.0, 3.0), 12)) == {0.0, -3.0}
    minus, plus = at_shift(10.0, 0.0)
    assert (minus, plus) == pytest.approx((-5.0, 5.0))


def _synthetic_trace(c3, c6):
    R = np.linspace(0.6, 5.0, 120)
    e = np.where(R >= 3.0, c3 / R**3, c6 / R**6)
    return ShiftTrace(R, TWO_PI * e, np.ones_like(R))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 10.0), st.floats(10.0, 500.0))
def test_fit_recovers_synthetic_coefficients(c3, c6):
    fit = fit_c3c6(_synthetic_trace(c3, c6))
    assert fit.c3 == pytest.approx(c3, rel=1e-10)
    assert fit.c6 == pytest.approx(c6, rel=1e-10)
    assert fit.residual3 < 1e-10 and fit.residual6 < 1e-10


def test_fit_needs_points_in_window():
    with pytest.raises(FitError):
        fit_c3c6(_synthetic_trace(1.0, 1.0), window3=(20.0, 30.0))


def test_two_level_rates_far_detuned_branch():
    omega_p, gamma = TWO_PI * 0.5, TWO_PI * 1.0
    det = TWO_PI * np.linspace(-5, 5, 11)
    # a huge Rydberg shift leaves |e> bare
    r = two_level_rates(TWO_PI * 1e9, TWO_PI * 31, det, omega_p, gamma)
    assert np.allclose(r, scattering_rate(omega_p, det, gamma), rtol=1e-4)


def test_no_interaction_gives_unit_ratio():
    sp = default_species()
    fit = InteractionFit(0.0, 0.0)
    det = TWO_PI * np.array([-15.0, 0.0, 10.0])
    p, base, ratio = two_level_transfer_ratio(fit, TWO_PI * 31, det, ProbeField(), sp, (0.3, 0.3, 0.3))
    assert np.allclose(p, base, rtol=1e-6)
    assert np.allclose(ratio, 1.0, rtol=1e-6)


def test_shift_trace_decays_with_distance():
    sp = default_species()
    ham = rydberg_only_hamiltonian(sp, [(38, 0, 0.5), (39, 0, 0.5), (38, 1, 0.5), (38, 1, 1.5)])
    tr = extract_shift_trace(ham, [1.0, 3.0, 8.0])
    e = np.abs(tr.energy)
    assert e[0] > e[1] > e[2]
    assert np.all(tr.admixture > 0.5)
