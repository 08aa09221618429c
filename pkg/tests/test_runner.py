import math
from dataclasses import replace

import numpy as np
import pytest

from rydberg_ati.atomic import default_species
from rydberg_ati.config import RunConfig
from rydberg_ati.runner import CouplingScan, line_half_widths, operating_point, scan_coupling

TWO_PI = 2 * math.pi

FAR = RunConfig(
    rydberg_n=(38, 39),
    r_min=40.0,
    r_max=80.0,
    r_points=2,
    detunings=tuple(TWO_PI * x for x in (-30.0, -15.0, -6.0, 6.0, 15.0)),
    control_states="average",
)


def test_averaged_control_matches_sample_only_at_large_distance():
    s = scan_coupling(FAR, TWO_PI * 31, spectrum=False)
    assert np.allclose(s.curve[-1], s.ground, rtol=1e-4)


def test_summed_control_states_double_the_scatters():
    # per ground sublevel two copies square the survival 1 - P; the mean over
    # sublevels then sits between the square of the mean survival and the mean
    avg = scan_coupling(FAR, TWO_PI * 31, spectrum=False)
    tot = scan_coupling(replace(FAR, control_states="sum"), TWO_PI * 31, spectrum=False)
    s_avg, s_tot = 1 - avg.curve[-1], 1 - tot.curve[-1]
    assert np.all(s_tot >= s_avg**2 * (1 - 1e-9))
    assert np.all(s_tot < s_avg)


def test_close_control_restores_resonant_scattering():
    # a nearby Rydberg control shifts the sample Rydberg level out of resonance,
    # removing the Autler-Townes suppression on the bare probe line
    cfg = replace(FAR, r_min=0.5, r_max=1.0, detunings=(0.0,))
    s = scan_coupling(cfg, TWO_PI * 31, spectrum=False)
    assert s.curve[0, 0] > 0.9
    assert s.ground[0] < 0.05


def _scan(det, excited, ground):
    det = TWO_PI * np.asarray(det, float)
    z = np.zeros(1)
    return CouplingScan(TWO_PI * 31, z, det, z[:, None], np.asarray(excited, float), np.asarray(ground, float), np.zeros((0, 4)), z, z)


def test_operating_point_takes_best_crossing():
    s = _scan([-3, -2, -1, 0, 1], [0.10, 0.30, 0.50, 0.20, 0.05], [0.01, 0.01, 0.02, 0.02, 0.01])
    # ratio 10, 30, 25, 10, 5: crossings of 20 between -3/-2 and 0/-1
    op = operating_point(s, 20.0)
    assert op.rule == "ratio crossing"
    assert op.detuning / TWO_PI == pytest.approx(-1 + (25 - 20) / (25 - 10))
    assert op.transfer == pytest.approx(0.5 + (0.2 - 0.5) * (5 / 15))


def test_operating_point_falls_back_to_maximum():
    s = _scan([-1, 0, 1], [0.1, 0.2, 0.1], [0.1, 0.1, 0.1])
    op = operating_point(s, 20.0)
    assert op.detuning == pytest.approx(0.0) and op.rule != "ratio crossing"


def test_half_widths_of_lorentzian():
    d = np.linspace(-40, 20, 6001)
    gamma = 3.0
    v = 1 / (1 + (2 * (d + 5) / gamma) ** 2)
    neg, pos, clipped = line_half_widths(d, v)
    assert neg == pytest.approx(gamma / 2, abs=1e-3) and pos == pytest.approx(gamma / 2, abs=1e-3)
    assert clipped == (False, False)
    neg, pos, clipped = line_half_widths(d, np.where(d < -5, 0.9, v))
    assert clipped == (True, False) and neg == pytest.approx(35.0)


def test_config_switch_validated():
    from rydberg_ati.config import config_from_text
    from rydberg_ati.textio import ConfigError

    assert config_from_text("[probe]\ncontrol_states = sum\n").control_states == "sum"
    with pytest.raises(ConfigError):
        config_from_text("[probe]\ncontrol_states = both\n")
    assert default_species().branching_ratio == 0.5
