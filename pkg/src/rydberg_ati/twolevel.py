"""Two-level Autler-Townes picture: Rydberg shift fit and simplified transfer.

Used as an independent cross-check of the full pair model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pair import CouplingField, FrameReference, PairHamiltonian, build_basis
from .probing import sample_transfer, scattering_rate, transfer_probability

TWO_PI = 2 * math.pi


class FitError(ValueError):
    pass


class TraceError(RuntimeError):
    pass


def at_shift(omega_c, delta_c):
    """Dressed-state shifts (minus, plus) of |e> for coupling omega_c, detuning delta_c."""
    omega_c = np.asarray(omega_c, dtype=float)
    delta_c = np.asarray(delta_c, dtype=float)
    root = np.sqrt(omega_c**2 + delta_c**2)
    return -0.5 * delta_c - 0.5 * root, -0.5 * delta_c + 0.5 * root


def rydberg_only_hamiltonian(species, rydberg=None, control_level=(39, 0, 0.5), target=(38, 0, 0.5)) -> PairHamiltonian:
    """Pair Hamiltonian without coupling laser, hyperfine term or |e>."""
    basis = build_basis(rydberg, intermediate=species.intermediate, nuclear_spin=0.0, include_intermediate=False)
    return PairHamiltonian(basis, CouplingField(0.0, target=target), species, FrameReference(control_level))


@dataclass
class ShiftTrace:
    R: np.ndarray
    energy: np.ndarray  # rad/us
    admixture: np.ndarray


def extract_shift_trace(ham: PairHamiltonian, R, target_levels=((38, 0, 0.5), (39, 0, 0.5))) -> ShiftTrace:
    """Energy of the eigenstate with the largest target-pair admixture at each R.

    The target admixture sums every pair state made of the two target
    levels, in either order and with any projections.
    """
    basis = ham.basis
    want = set(tuple(t) for t in target_levels)
    mask = np.array(
        [{c.level, s.level} == want for c in basis.control for s in basis.sample], dtype=float
    )
    R = np.asarray(R, dtype=float)
    energies, adm = np.empty(R.size), np.empty(R.size)
    for a, r in enumerate(R):
        best = (-1.0, 0.0)
        for ix, hb in ham.blocks(r):
            w, v = np.linalg.eigh(hb)
            weight = (v**2 * mask[ix, None]).sum(axis=0)
            j = int(np.argmax(weight))
            if weight[j] > best[0]:
                best = (weight[j], w[j])
        adm[a], energies[a] = best
    far = int(np.argmax(R))
    if adm[far] < 0.5:
        raise TraceError(
            f"largest target admixture at R = {R[far]:g} um is {adm[far]:.3f} < 0.5; basis too small?"
        )
    return ShiftTrace(R, energies, adm)


@dataclass
class InteractionFit:
    c3: float  # MHz um^3 (cyclic)
    c6: float  # MHz um^6
    window3: tuple = (3.0, 5.0)
    window6: tuple = (0.6, 3.0)
    residual3: float = 0.0
    residual6: float = 0.0
    points: tuple = (0, 0)
    trace: ShiftTrace | None = field(default=None, repr=False)

    def shift(self, R):
        """C3/R^3 + C6/R^6 in rad/us."""
        R = np.asarray(R, dtype=float)
        return TWO_PI * (self.c3 / R**3 + self.c6 / R**6)


def _single_term_fit(R, E, power):
    x = R ** (-float(power))
    if x.size < 2:
        raise FitError(f"need at least two points for the 1/R^{power} fit, got {x.size}")
    norm = float(np.dot(x, x))
    if not norm > 0 or not np.isfinite(norm):
        raise FitError(f"degenerate design for the 1/R^{power} fit (norm {norm})")
    coef = float(np.dot(x, E) / norm)
    resid = E - coef * x
    rel = float(np.linalg.norm(resid) / max(np.linalg.norm(E), 1e-300))
    return coef, rel


def fit_c3c6(trace: ShiftTrace, window3=(3.0, 5.0), window6=(0.6, 3.0)) -> InteractionFit:
    """Unweighted least squares of C3 on [a, b] and of C6 on [c, d), separately."""
    R = trace.R
    e = trace.energy / TWO_PI
    m3 = (R >= window3[0]) & (R <= window3[1])
    m6 = (R >= window6[0]) & (R < window6[1])
    c3, r3 = _single_term_fit(R[m3], e[m3], 3)
    c6, r6 = _single_term_fit(R[m6], e[m6], 6)
    return InteractionFit(c3, c6, tuple(window3), tuple(window6), r3, r6, (int(m3.sum()), int(m6.sum())), trace)


def default_trace_grid(window3=(3.0, 5.0), window6=(0.6, 3.0), points: int = 200) -> np.ndarray:
    lo = min(window3[0], window6[0])
    hi = max(window3[1], window6[1])
    return np.linspace(lo, hi, points)


def two_level_rates(shift, omega_c, detunings, omega_p, gamma):
    """Scattering rate summed over both dressed branches, shape (..., n_det).

    ``shift`` is the Rydberg level shift acting as coupling detuning.
    """
    minus, plus = at_shift(omega_c, np.asarray(shift)[..., None])
    det = np.asarray(detunings)
    return scattering_rate(omega_p, det + minus, gamma) + scattering_rate(omega_p, det + plus, gamma)


def two_level_transfer_ratio(fit: InteractionFit, omega_c, detunings, probe, species, sigmas, r0: float = 0.2, rtol: float = 1e-6):
    """(P, P_baseline, ratio) over probe detunings in the two-level model."""
    from .geometry import idpd, idpd_peak

    det = np.atleast_1d(np.asarray(detunings, dtype=float))
    b = species.branching_ratio
    gamma = species.linewidth

    def p_tr(R):
        rate = two_level_rates(fit.shift(max(R, r0)), omega_c, det, probe.omega, gamma)
        return transfer_probability(rate, probe.duration, b)

    excited = sample_transfer(p_tr, lambda r: idpd(sigmas, r), idpd_peak(sigmas), r0=r0, rtol=rtol)
    base = transfer_probability(two_level_rates(0.0, omega_c, det, probe.omega, gamma), probe.duration, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(base > 0, excited / base, np.inf)
    return excited, base, ratio
