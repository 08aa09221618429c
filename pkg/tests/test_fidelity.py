import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_ati.fidelity import (
    HISTOGRAM_MODES,
    FidelityConfig,
    PhotonHistogram,
    atom_transfer_distribution,
    decay_grid,
    effective_rate,
    fidelity_row,
    ground_histogram,
    infidelity_vs_time,
    ks_distance,
    optimal_threshold,
    photon_histogram,
    transfer_from_scatters,
    weighted_histogram,
)
from rydberg_ati.textio import ConfigError

CFG = FidelityConfig()


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.95), st.floats(0.5, 60.0), st.floats(0.05, 0.95))
def test_rate_round_trip(transfer, duration, branching):
    rate = effective_rate(transfer, duration, branching)
    assert float(transfer_from_scatters(rate * duration, branching)) == pytest.approx(transfer, rel=1e-12)


def test_rate_rejects_certain_transfer():
    with pytest.raises(ValueError):
        effective_rate(1.0, 15.0, 0.5)
    with pytest.raises(ValueError):
        effective_rate(-0.1, 15.0, 0.5)


@pytest.mark.parametrize("atoms,transfer", [(1, 0.3), (10, 0.58), (100, 0.03)])
def test_atom_distribution_is_poisson(atoms, transfer):
    k, pmf = atom_transfer_distribution(transfer, atoms)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.dot(k, pmf) == pytest.approx(atoms * transfer, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(HISTOGRAM_MODES), st.floats(0.0, 0.9), st.sampled_from([1, 10, 100]))
def test_histograms_normalized(mode, transfer, atoms):
    cfg = replace(CFG, histogram=mode, probe_time=5.0)
    assert photon_histogram(transfer, atoms, cfg).pmf.sum() == pytest.approx(1.0, abs=1e-8)
    assert weighted_histogram(cfg, max(transfer, 0.01), 0.01, atoms).pmf.sum() == pytest.approx(1.0, abs=1e-8)


def test_histogram_means():
    p, n = 0.4, 10
    conv = photon_histogram(p, n, replace(CFG, histogram="convolution"))
    assert conv.mean() == pytest.approx(n * p * CFG.photons_per_atom + CFG.background, rel=1e-8)
    # background only enters the zero-transfer outcome
    plain = photon_histogram(p, n, CFG)
    assert plain.mean() == pytest.approx(n * p * CFG.photons_per_atom + math.exp(-n * p) * CFG.background, rel=1e-8)


def test_decay_grid_weights():
    t, w = decay_grid(15.0, 32.27, 0.025)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert w[-1] == pytest.approx(math.exp(-15.0 / 32.27))
    assert np.all(np.diff(t[:-1]) > 0) and t[-1] == 15.0


def test_long_lifetime_limit():
    cfg = replace(CFG, lifetime=math.inf)
    he = weighted_histogram(cfg, 0.5, 0.03, 10)
    direct = photon_histogram(0.5, 10, cfg)
    n = min(he.pmf.size, direct.pmf.size)
    assert np.allclose(he.pmf[:n], direct.pmf[:n], atol=1e-12)


def test_short_lifetime_limit():
    cfg = replace(CFG, lifetime=0.0)
    he = weighted_histogram(cfg, 0.5, 0.03, 10)
    hg = ground_histogram(cfg, 0.03, 10)
    n = min(he.pmf.size, hg.pmf.size)
    assert np.allclose(he.pmf[:n], hg.pmf[:n], atol=1e-12)
    assert fidelity_row(cfg, 0.5, 0.03, 10).fidelity == pytest.approx(0.5, abs=1e-9)


def _sample_counts(cfg, p_e, p_g, atoms, trials, rng):
    """Independent sampler of the detection chain for the default mode."""
    ln_b = math.log1p(-cfg.branching)
    r_e = math.log(1 - p_e) / (cfg.transfer_time * ln_b)
    r_g = math.log(1 - p_g) / (cfg.transfer_time * ln_b)
    td = np.minimum(rng.exponential(cfg.lifetime, trials), cfg.probe_time)
    scatters = r_e * td + r_g * (cfg.probe_time - td)
    p = 1 - (1 - cfg.branching) ** scatters
    k = rng.poisson(atoms * p)
    return np.where(k > 0, rng.poisson(k * cfg.photons_per_atom), rng.poisson(cfg.background, trials))


@pytest.mark.parametrize("atoms", [1, 10])
def test_histogram_against_sampled_counts(atoms):
    rng = np.random.default_rng(11)
    counts = _sample_counts(CFG, 0.57, 0.028, atoms, 400_000, rng)
    assert ks_distance(counts, weighted_histogram(CFG, 0.57, 0.028, atoms)) < 0.005


def test_threshold_ties_go_low():
    a = PhotonHistogram(np.array([0.0, 0.0, 0.0, 0.0, 0.5, 0.5]), "excited")
    b = PhotonHistogram(np.array([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]), "ground")
    # thresholds 2 and 3 both separate perfectly
    res = optimal_threshold(a, b)
    assert res.error_sum == pytest.approx(0.0)
    assert res.threshold == 2 and res.fidelity == pytest.approx(1.0)
    flat = PhotonHistogram(np.full(4, 0.25), "x")
    assert optimal_threshold(flat, flat).threshold == 0


def test_identical_histograms_give_half():
    h = photon_histogram(0.3, 10, CFG)
    res = optimal_threshold(h, h)
    assert res.fidelity == pytest.approx(0.5, abs=1e-12)


def test_reported_probabilities_consistent():
    row = fidelity_row(CFG, 0.57, 0.028, 10)
    d = row.detection
    assert d.p_rr + d.p_rg == pytest.approx(1.0)
    assert d.p_gg + d.p_gr == pytest.approx(1.0)
    assert row.fidelity == pytest.approx(0.5 * (d.p_rr + d.p_gg), abs=1e-12)
    assert 0 <= row.overlap <= 1


def test_infidelity_vs_time_shape():
    out = infidelity_vs_time(CFG, 0.57, 0.028, 100, [1.0, 3.0, 30.0])
    assert out.shape == (3,) and np.all((out >= 0) & (out <= 0.5 + 1e-12))
    assert out[1] < out[0] and out[1] < out[2]


def test_config_validation():
    with pytest.raises(ConfigError):
        FidelityConfig(histogram="bogus")
    with pytest.raises(ConfigError):
        FidelityConfig(probe_time=0.0)
    with pytest.raises(ConfigError):
        FidelityConfig(branching=1.0)
