import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_ati.geometry import idpd, idpd_cdf_isotropic, idpd_peak
from rydberg_ati.pair import CouplingField, PairHamiltonian
from rydberg_ati.probing import (
    GroundPopulation,
    ProbeField,
    SampleTransfer,
    block_channels,
    ground_rate,
    ground_states,
    probe_couplings,
    reduce_control,
    sample_only_channels,
    sample_transfer,
    sample_transform,
    scattering_rate,
    to_hyperfine,
    transfer_probability,
    weak_probe_check,
    weighted_transfer,
)
from rydberg_ati.spectrum import EigenDecomposition, diagonalize_blocks
from rydberg_ati.textio import ConfigError

TWO_PI = 2 * math.pi


def bloch_steady_state_rate(omega, delta, gamma):
    """Gamma * rho_ee from the two-level optical Bloch equations, solved as a linear system."""
    # variables: u = Re rho_eg, v = Im rho_eg, w = rho_ee; rho_gg = 1 - w
    # H = -delta |e><e| + omega/2 (|e><g| + |g><e|)
    A = np.array(
        [
            [-gamma / 2, -delta, 0.0],
            [delta, -gamma / 2, -omega],
            [0.0, omega, -gamma],
        ]
    )
    b = -np.array([0.0, omega / 2, 0.0])  # d/dt x = A x - b = 0
    u, v, w = np.linalg.solve(A, b)
    return gamma * w


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=0.01, max_value=30.0),
    st.floats(min_value=-100.0, max_value=100.0),
    st.floats(min_value=0.1, max_value=10.0),
)
def test_rate_matches_bloch_steady_state(omega, delta, gamma):
    assert scattering_rate(omega, delta, gamma) == pytest.approx(bloch_steady_state_rate(omega, delta, gamma), rel=1e-9)


def test_rate_saturation_point():
    gamma = 3.0
    assert scattering_rate(gamma / math.sqrt(2), 0.0, gamma) == pytest.approx(gamma / 4)


def test_transfer_probability_counts_scatters():
    assert transfer_probability(0.0, 15.0, 0.5) == 0.0
    assert transfer_probability(1.0 / 15.0, 15.0, 0.5) == pytest.approx(0.5)
    assert transfer_probability(3.0 / 15.0, 15.0, 0.5) == pytest.approx(1 - 0.125)


def test_reduced_density_is_a_state(small_ham, small_basis):
    dec = diagonalize_blocks(small_ham.blocks(0.9), small_basis)
    for phi in range(0, dec.n_states, 37):
        red = reduce_control(dec, phi)
        assert abs(np.trace(red.rho) - 1) < 1e-10
        assert np.linalg.eigvalsh(red.rho).min() > -1e-10


def test_product_state_reduces_to_pure_state(small_basis):
    nc, ns = small_basis.n_control, small_basis.n_sample
    rng = np.random.default_rng(0)
    a, s = rng.normal(size=nc), rng.normal(size=ns)
    a /= np.linalg.norm(a)
    s /= np.linalg.norm(s)
    dec = EigenDecomposition(np.zeros(1), np.outer(a, s)[:, :, None], small_basis)
    red = reduce_control(dec, 0)
    assert red.eigenvalues[0] == pytest.approx(1.0)
    assert abs(red.vectors[:, 0] @ s) == pytest.approx(1.0)


def test_hyperfine_transform_is_orthogonal(small_ham, small_basis):
    T, labels = sample_transform(small_basis)
    assert np.max(np.abs(T @ T.T - np.eye(T.shape[0]))) < 1e-12
    dec = diagonalize_blocks(small_ham.blocks(1.2), small_basis)
    hf, _ = to_hyperfine(dec)
    back = np.einsum("ilp,lk->ikp", hf.coefficients, T)
    assert np.max(np.abs(back - dec.coefficients)) < 1e-12
    assert np.array_equal(hf.energies, dec.energies)
    assert all(lab is not None for lab in labels)


def test_probe_calibration_weakest_cycle(species, small_basis):
    probe = ProbeField()
    c = probe_couplings(small_basis, species, probe)
    assert c.shape == (3, small_basis.n_sample)
    assert np.all(c[:, ~small_basis.is_intermediate] == 0)


def test_fast_channels_match_direct_sum(small_ham, small_basis, species):
    probe = ProbeField()
    c = probe_couplings(small_basis, species, probe)
    R = 1.1
    ch = block_channels(small_ham.blocks(R), small_basis, c, "squared")
    dec = diagonalize_blocks(small_ham.blocks(R), small_basis)
    dets = [-TWO_PI * 10.0, 0.0, TWO_PI * 7.0]
    fast = ch.rates(dets, species.linewidth)
    for g in range(3):
        for d_i, d in enumerate(dets):
            slow = ground_rate(g, dec, ProbeField(detuning=d), species, c, "squared")
            assert fast[g, d_i] == pytest.approx(slow, rel=1e-8)


def test_rates_invariant_under_degenerate_remixing(small_basis, species):
    """Weak-probe rates do not depend on the basis chosen inside degenerate subspaces."""
    ham = PairHamiltonian(small_basis, CouplingField(TWO_PI * 31), species)
    dec = diagonalize_blocks(ham.blocks(40.0), small_basis)
    probe = ProbeField(omega=TWO_PI * 1e-3)
    c = probe_couplings(small_basis, species, probe)
    E = dec.energies
    tol = 1e-7 * np.abs(E).max()
    coeff = dec.coefficients.copy()
    rng = np.random.default_rng(5)
    start = 0
    mixed_any = False
    while start < len(E):
        stop = start + 1
        while stop < len(E) and E[stop] - E[start] < tol:
            stop += 1
        if stop - start > 1:
            q, _ = np.linalg.qr(rng.normal(size=(stop - start, stop - start)))
            coeff[:, :, start:stop] = coeff[:, :, start:stop] @ q
            mixed_any = True
        start = stop
    assert mixed_any
    mixed = EigenDecomposition(E, coeff, small_basis)
    for g in range(3):
        a = ground_rate(g, dec, probe, species, c, "population")
        b = ground_rate(g, mixed, probe, species, c, "population")
        assert a == pytest.approx(b, rel=1e-6)


def test_sample_only_reference_is_large_distance_limit(small_basis, species):
    fld = CouplingField(TWO_PI * 31)
    ham = PairHamiltonian(small_basis, fld, species)
    c = probe_couplings(small_basis, species, ProbeField())
    dets = TWO_PI * np.linspace(-30, 30, 13)
    far = block_channels(ham.blocks(500.0), small_basis, c, "population").rates(dets, species.linewidth)
    ref = sample_only_channels(small_basis, fld, species, c).rates(dets, species.linewidth)
    # each 39S sublevel of the control atom carries one copy of the sample-only
    # spectrum; other control levels sit GHz away from the scanned window
    copies = sum(s.level == (39, 0, 0.5) for s in small_basis.control)
    assert copies == 2
    ratio = far / copies / ref
    off_line = np.abs(dets) > TWO_PI * 1.0
    assert np.allclose(ratio[:, off_line], 1.0, rtol=1e-4)
    # at the dark resonance the exchange pair (control 38S, sample 39S), degenerate
    # in this frame, adds a weak extra line
    assert np.allclose(ratio[:, ~off_line], 1.0, rtol=2e-2)


def test_distance_average_of_constant_curve():
    sig = (0.3, 0.3, 0.3)
    val = sample_transfer(lambda r: 0.37, lambda r: idpd(sig, r), idpd_peak(sig), r0=0.0)
    assert val == pytest.approx(0.37, rel=1e-8)


def test_distance_average_of_step_curve_equals_cdf():
    sig = (0.4, 0.4, 0.4)
    a = 0.9
    val = sample_transfer(lambda r: 1.0 if r < a else 0.0, lambda r: idpd(sig, r), idpd_peak(sig), r0=0.0, breakpoints=[a])
    assert val == pytest.approx(float(idpd_cdf_isotropic(0.4, a)), rel=1e-7)


def test_grid_curve_held_constant_outside():
    sig = (0.3, 0.3, 0.3)
    grid = np.array([0.5, 1.0, 2.0])
    vals = np.array([[0.2, 0.4], [0.2, 0.4], [0.2, 0.4]])
    out = sample_transfer((grid, vals), lambda r: idpd(sig, r), idpd_peak(sig), r0=0.2)
    assert np.allclose(out, [0.2, 0.4], rtol=1e-8)


def test_weighted_transfer_fixed_point(species):
    pops = GroundPopulation.uniform(species)
    curve = np.linspace(0, 1, 7)
    assert np.allclose(weighted_transfer(pops, [curve, curve, curve]), curve)
    with pytest.raises(ValueError):
        GroundPopulation(pops.states, (0.5, 0.5, 0.5))


def test_ground_states(species):
    gs = ground_states(species, 1.0)
    assert [g.mF for g in gs] == [-1.0, 0.0, 1.0]


def test_weak_probe_warning():
    with pytest.warns(RuntimeWarning):
        assert not weak_probe_check(ProbeField(omega=TWO_PI * 5), TWO_PI * 18)
    assert weak_probe_check(ProbeField(), TWO_PI * 31)


def test_probe_field_validation():
    with pytest.raises(ConfigError):
        ProbeField(omega=0.0)
    with pytest.raises(ConfigError):
        ProbeField(q=3)


def test_sample_transfer_ratio():
    s = SampleTransfer(np.zeros(2), np.array([0.4, 0.1]), np.array([0.02, 0.0]))
    r = s.ratio
    assert r[0] == pytest.approx(20.0) and np.isinf(r[1])
