"""Acceptance criteria on the default configuration.

One shared full run (about six minutes on one core) feeds all nine checks.
Each test prints a PASS/FAIL line and then asserts the same criterion with
its own reading of the bundle, so the verifier and the test cross-check.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from rydberg_ati.atomic import forster_defect
from rydberg_ati.config import RunConfig
from rydberg_ati.fidelity import fidelity_row, infidelity_vs_time
from rydberg_ati.runner import line_half_widths
from rydberg_ati.verify import Verifier

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def verifier():
    v = Verifier(RunConfig())
    v.bundle  # the heavy scan, computed once
    return v


def _report(verifier, number, capsys):
    (verdict,) = verifier.run({number})
    with capsys.disabled():
        print("\n" + verdict.line())
    return verdict


def _scans(v):
    return [v.bundle.scan_for(om) for om in sorted(v.cfg.couplings)]


def test_criterion_1_forster_defect(verifier, capsys):
    verdict = _report(verifier, 1, capsys)
    d = forster_defect([(38, 0, 0.5), (39, 0, 0.5)], [(38, 1, 1.5), (38, 1, 1.5)], verifier.cfg.species()) / TWO_PI
    assert abs(d - 4.3) <= 1.5
    assert verdict.passed


def test_criterion_2_interaction_coefficients(verifier, capsys):
    verdict = _report(verifier, 2, capsys)
    fit = verifier._fit
    assert 3.0 <= fit.c3 <= 4.6
    assert 108 <= fit.c6 <= 162
    assert verdict.passed


def test_criterion_3_peak_transfer(verifier, capsys):
    verdict = _report(verifier, 3, capsys)
    peaks = [float(s.excited.max()) for s in _scans(verifier)]
    assert all(b < a for a, b in zip(peaks, peaks[1:]))
    assert 0.35 <= peaks[0] <= 0.60
    assert verdict.passed


def test_criterion_4_line_asymmetry(verifier, capsys):
    verdict = _report(verifier, 4, capsys)
    s = verifier.bundle.scan_for(verifier.cfg.fidelity_coupling)
    neg, pos, clipped = line_half_widths(s.detunings / TWO_PI, s.excited)
    assert not clipped[1]
    assert neg / pos >= 1.5
    assert verdict.passed


def test_criterion_5_transfer_ratio(verifier, capsys):
    verdict = _report(verifier, 5, capsys)
    for s in _scans(verifier):
        r = s.excited / s.ground
        assert np.max(r[np.isfinite(r)]) >= 10
    assert verdict.passed


def _fidelity_cfg(v, **changes):
    return replace(v.cfg.fidelity_for(v.cfg.species()), **changes)


def test_criterion_6_fidelity_table(verifier, capsys):
    verdict = _report(verifier, 6, capsys)
    op = verifier.bundle.operating
    cfg = _fidelity_cfg(verifier, probe_time=15.0)
    for atoms, target in {1: 0.609, 10: 0.914, 100: 0.984}.items():
        assert abs(fidelity_row(cfg, op.transfer, op.baseline, atoms).fidelity - target) <= 0.05
    assert verdict.passed


def test_criterion_7_optimal_probe_time(verifier, capsys):
    verdict = _report(verifier, 7, capsys)
    op = verifier.bundle.operating
    times = np.asarray(verifier.cfg.probe_times)
    best = {n: int(np.argmin(infidelity_vs_time(_fidelity_cfg(verifier), op.transfer, op.baseline, n, times))) for n in (10, 100)}
    assert 0 < best[100] < times.size - 1
    assert times[best[100]] <= times[best[10]]
    assert verdict.passed


def test_criterion_8_two_level_oracle(verifier, capsys):
    verdict = _report(verifier, 8, capsys)
    for om in verifier.cfg.couplings:
        two = verifier.bundle.two_level[om][2]
        full = verifier.bundle.scan_for(om).ratio
        q = np.max(two[np.isfinite(two)]) / np.max(full[np.isfinite(full)])
        assert 0.3 <= q <= 0.7
    assert verdict.passed


def test_criterion_9_property_suites(verifier, capsys):
    verdict = _report(verifier, 9, capsys)
    assert verdict.passed
