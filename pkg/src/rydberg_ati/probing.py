"""Probe chain: hyperfine transform, partial trace, scattering and transfer.

The probe drives ground states |5S, F=1, m_F> to the intermediate manifold.
Only the intermediate components of a sample state couple to the probe.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import PchipInterpolator

from .angular import clebsch_gordan
from .atomic import FineState, HyperfineState, SpeciesData, angular_dipole, hyperfine_dipole
from .pair import PairBasis, PairHamiltonian, sample_hamiltonian
from .spectrum import EigenDecomposition
from .textio import ConfigError


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbeField:
    omega: float = 2 * math.pi * 1.0  # rad/us
    q: int = 1
    detuning: float = 0.0  # rad/us
    duration: float = 15.0  # us
    ground_f: float = 1.0
    excited_f: float = 2.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError("probe Rabi frequency must be positive")
        if not self.duration > 0:
            raise ConfigError("probe duration must be positive")
        if self.q not in (-1, 0, 1):
            raise ConfigError(f"probe polarization must be -1, 0 or +1, got {self.q}")


def ground_states(species: SpeciesData, F: float = 1.0) -> list[HyperfineState]:
    n, l, j = species.ground
    return [HyperfineState(n, l, j, F, -F + k, species.nuclear_spin) for k in range(int(round(2 * F)) + 1)]


@dataclass(frozen=True)
class GroundPopulation:
    states: tuple
    probabilities: tuple

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if len(p) != len(self.states):
            raise ValueError("one probability per ground state required")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ValueError(f"ground populations must be non-negative and sum to 1, got {p.sum()}")

    @classmethod
    def uniform(cls, species: SpeciesData, F: float = 1.0):
        gs = ground_states(species, F)
        return cls(tuple(gs), tuple([1.0 / len(gs)] * len(gs)))


# --- hyperfine transform -----------------------------------------------------


def sample_transform(basis: PairBasis) -> tuple[np.ndarray, list]:
    """Orthogonal T with rows = new sample basis, columns = fine basis.

    Intermediate states map to |F, m_F>; Rydberg states pass through.
    """
    ns = basis.n_sample
    n, l, j = basis.intermediate
    spin = basis.nuclear_spin
    e_idx = {(s.state.mj, s.mI): k for k, s in enumerate(basis.sample) if basis.is_intermediate[k]}
    expected = int(round((2 * j + 1) * (2 * spin + 1)))
    if e_idx and len(e_idx) != expected:
        raise ConfigError("intermediate multiplet incomplete; cannot change to the F basis")
    T = np.zeros((ns, ns))
    labels: list = [None] * ns
    hf = []
    F = abs(j - spin)
    while F <= j + spin + 1e-9:
        for k in range(int(round(2 * F)) + 1):
            hf.append(HyperfineState(n, l, j, F, -F + k, spin))
        F += 1
    slots = sorted(e_idx.values())
    for row, hs in zip(slots, hf if e_idx else []):
        labels[row] = hs
        for (mj, mI), col in e_idx.items():
            T[row, col] = clebsch_gordan(j, mj, spin, mI, hs.F, hs.mF)
    for k, s in enumerate(basis.sample):
        if not basis.is_intermediate[k]:
            T[k, k] = 1.0
            labels[k] = s
    return T, labels


def to_hyperfine(dec: EigenDecomposition) -> tuple[EigenDecomposition, list]:
    """Rewrite the sample factor of every eigenvector in the F, m_F basis."""
    T, labels = sample_transform(dec.basis)
    # A'(phi) = A(phi) T^T
    coeffs = np.einsum("ikp,lk->ilp", dec.coefficients, T)
    return EigenDecomposition(dec.energies.copy(), coeffs, dec.basis), labels


# --- reduced density matrix --------------------------------------------------


@dataclass
class ReducedState:
    vectors: np.ndarray  # columns Theta_v over the sample space
    eigenvalues: np.ndarray
    rho: np.ndarray = field(repr=False)


def reduce_control(dec: EigenDecomposition, phi: int) -> ReducedState:
    """Trace out the control atom of eigenstate ``phi``: rho_S = A^T conj(A)."""
    a = dec.coefficients[:, :, phi]
    rho = a.T @ a.conj()
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    order = np.argsort(w)[::-1]
    return ReducedState(v[:, order], np.clip(w[order], 0.0, None), rho)


def component_weights(theta: np.ndarray, convention: str = "squared") -> np.ndarray:
    """Weight of each density-matrix eigencomponent in the rate sum.

    ``squared`` squares the eigenvalues; ``population`` uses them directly.
    """
    if convention == "squared":
        return theta**2
    if convention == "population":
        return theta
    raise ValueError(f"unknown weighting convention {convention!r}")


# --- rates --------------------------------------------------------------------


def scattering_rate(coupling, detuning, gamma: float):
    """Steady-state two-level scattering rate (1/us)."""
    s = 2 * (np.asarray(coupling) / gamma) ** 2
    return 0.5 * gamma * s / (1 + s + (2 * np.asarray(detuning) / gamma) ** 2)


def probe_couplings(basis: PairBasis, species: SpeciesData, probe: ProbeField, grounds=None) -> np.ndarray:
    """Matrix c[g, k] with Omega(g, Theta) = |c[g] . Theta| in rad/us.

    The field amplitude is fixed so the weakest non-zero F -> F' coupling
    of the probe equals ``probe.omega``.
    """
    grounds = grounds or ground_states(species, probe.ground_f)
    n, l, j = species.ground
    spin = species.nuclear_spin
    j_e = basis.intermediate[2]
    strengths = []
    for g in grounds:
        mF = g.mF + probe.q
        if abs(mF) <= probe.excited_f:
            e = HyperfineState(*basis.intermediate, probe.excited_f, mF, spin)
            strengths.append(abs(hyperfine_dipole(g, e, probe.q)))
    strengths = [s for s in strengths if s > 1e-12]
    if not strengths:
        raise ConfigError("probe polarization does not couple the chosen hyperfine levels")
    scale = probe.omega / min(strengths)
    c = np.zeros((len(grounds), basis.n_sample))
    for a, g in enumerate(grounds):
        for k, s in enumerate(basis.sample):
            if not basis.is_intermediate[k]:
                continue
            mjg = s.state.mj - probe.q
            if abs(mjg) > j:
                continue
            cg = clebsch_gordan(j, mjg, spin, s.mI, g.F, g.mF)
            if cg != 0.0:
                c[a, k] = scale * cg * angular_dipole(FineState(n, l, j, mjg), s.state, probe.q)
    return c


def ground_rate(g: int, dec: EigenDecomposition, probe: ProbeField, species: SpeciesData, couplings=None, convention: str = "squared") -> float:
    """Effective rate of ground state ``g`` summed over every eigenstate and
    density-matrix component (direct, one eigenstate at a time)."""
    c = probe_couplings(dec.basis, species, probe) if couplings is None else couplings
    total = 0.0
    for phi in range(dec.n_states):
        red = reduce_control(dec, phi)
        om = np.abs(c[g] @ red.vectors)
        w = component_weights(red.eigenvalues, convention)
        det = probe.detuning - dec.energies[phi]
        total += float(np.sum(w * scattering_rate(om, det, species.linewidth)))
    return total


def transfer_probability(rate, duration: float, branching: float):
    """1 - (1 - b)^N for N = rate * duration scattered photons."""
    n = np.asarray(rate) * duration
    return -np.expm1(n * math.log1p(-branching)) if branching < 1 else np.where(n > 0, 1.0, 0.0)


def weighted_transfer(populations: GroundPopulation, curves):
    """Population-weighted mean of per-ground-state transfer curves."""
    curves = np.asarray(curves, dtype=float)
    p = np.asarray(populations.probabilities)
    if curves.shape[0] != len(p):
        raise ValueError("one curve per ground state required")
    return np.tensordot(p, curves, axes=(0, 0))


# --- fast channel evaluation -------------------------------------------------


@dataclass
class Channels:
    """Flattened (eigenstate, component) pairs that the probe can drive.

    ``omega2[g, c]`` is the squared coupling, ``weight[c]`` the rate weight
    and ``energy[c]`` the eigenenergy of the parent eigenstate.
    """

    energy: np.ndarray
    weight: np.ndarray
    omega2: np.ndarray

    def rates(self, detunings, gamma: float, chunk: int = 4096) -> np.ndarray:
        """Effective rate per ground state and detuning, shape (n_g, n_det)."""
        det = np.atleast_1d(np.asarray(detunings, dtype=float))
        out = np.zeros((self.omega2.shape[0], det.size))
        for start in range(0, self.energy.size, chunk):
            sl = slice(start, start + chunk)
            s = 2 * self.omega2[:, sl] / gamma**2  # (g, c)
            lor = (2 * (det[None, :] - self.energy[sl, None]) / gamma) ** 2  # (c, d)
            wt = self.weight[sl]
            # sum_c w_c * G/2 * s/(1 + s + lor)
            out += 0.5 * gamma * np.einsum("gc,gcd->gd", wt[None, :] * s, 1.0 / (1 + s[:, :, None] + lor[None, :, :]))
        return out


def block_channels(blocks, basis: PairBasis, couplings: np.ndarray, convention: str = "squared", cutoff: float = 1e-13) -> Channels:
    """Probe channels of every eigenstate from M-blocks of the Hamiltonian.

    Uses the singular-value route: with A the coefficient matrix of one
    eigenstate, rho_S = A^T A has eigenvalues s^2 and eigenvectors
    A^T u / s where A A^T u = s^2 u, so only n_C x n_C problems are solved.
    """
    return channels_from_eigenpairs(((ix, *np.linalg.eigh(hb)) for ix, hb in blocks), basis, couplings, convention, cutoff)


def channels_from_eigenpairs(eigenpairs, basis: PairBasis, couplings: np.ndarray, convention: str = "squared", cutoff: float = 1e-13) -> Channels:
    """As ``block_channels`` but from already diagonalized blocks ``(ix, w, v)``."""
    nc, ns = basis.n_control, basis.n_sample
    e_mask = basis.is_intermediate
    omega_scale = np.max(np.abs(couplings)) ** 2 if couplings.size else 1.0
    energies, weights, om2 = [], [], []
    for ix, w, v in eigenpairs:
        ci, ki = np.divmod(ix, ns)
        on_e = e_mask[ki]
        if not on_e.any():
            continue
        keep = (v[on_e] ** 2).sum(axis=0) > 1e-15
        if not keep.any():
            continue
        v = v[:, keep]
        w = w[keep]
        m = v.shape[1]
        a = np.zeros((m, nc, ns))
        a[:, ci, ki] = v.T
        gram = a @ a.transpose(0, 2, 1)
        s2, u = np.linalg.eigh(gram)  # (m, nc), (m, nc, nc)
        s2 = np.clip(s2, 0.0, None)
        acg = a @ couplings.T  # (m, nc, n_g)
        proj = np.einsum("mcv,mcg->mvg", u, acg)  # (m, v, g)
        with np.errstate(divide="ignore", invalid="ignore"):
            o2 = np.where(s2[:, :, None] > 1e-14, proj**2 / s2[:, :, None], 0.0)
        wt = component_weights(s2, convention)
        strength = wt[:, :, None] * o2
        sel = strength.max(axis=2) > cutoff * omega_scale
        mi, vi = np.nonzero(sel)
        energies.append(w[mi])
        weights.append(wt[mi, vi])
        om2.append(o2[mi, vi, :].T)
    if not energies:
        ng = couplings.shape[0]
        return Channels(np.zeros(0), np.zeros(0), np.zeros((ng, 0)))
    return Channels(np.concatenate(energies), np.concatenate(weights), np.concatenate(om2, axis=1))


def sample_only_channels(basis: PairBasis, field, species, couplings, ref=None) -> Channels:
    """Channels of a lone sample atom (control atom in its ground state)."""
    from .pair import FrameReference

    h = sample_hamiltonian(basis, field, species, ref or FrameReference())
    w, v = np.linalg.eigh(h)
    o2 = (couplings @ v) ** 2
    keep = o2.max(axis=0) > 0
    return Channels(w[keep], np.ones(int(keep.sum())), o2[:, keep])


def weak_probe_check(probe: ProbeField, coupling_omega: float) -> bool:
    """Warn when the probe is not weak against the coupling; True if fine."""
    if coupling_omega > 0 and probe.omega > 0.1 * coupling_omega:
        warnings.warn(
            f"probe Rabi frequency {probe.omega / (2 * math.pi):.3g} MHz exceeds 10% of the "
            f"coupling {coupling_omega / (2 * math.pi):.3g} MHz; rates assume a weak probe",
            RuntimeWarning,
            stacklevel=2,
        )
        return False
    return True


# --- distance averaging -------------------------------------------------------


@dataclass
class TransferCurve:
    """P_tr(R) per probe detuning, for one coupling strength."""

    R: np.ndarray
    detunings: np.ndarray
    values: np.ndarray  # (n_R, n_det)
    ground: np.ndarray  # (n_det,) control in its ground state
    meta: dict = field(default_factory=dict)


@dataclass
class SampleTransfer:
    detunings: np.ndarray
    excited: np.ndarray
    ground: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.ground > 0, self.excited / self.ground, np.inf)


def idpd_cutoff(idpd, r_peak: float, rel: float = 1e-12) -> float:
    """Distance beyond the peak where the density drops below rel * peak."""
    peak = idpd(r_peak)
    r = r_peak
    while idpd(r) >= rel * peak:
        r *= 1.25
    lo, hi = r / 1.25, r
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if idpd(mid) >= rel * peak:
            lo = mid
        else:
            hi = mid
    return hi


def sample_transfer(curve, idpd, r_peak: float, r0: float = 0.2, rtol: float = 1e-6, breakpoints=None):
    """Integral of idpd(R) * P_tr(R) over R by adaptive quadrature.

    ``curve`` is either a callable P_tr(R) (scalar or vector valued) or a
    tuple (R_grid, values) which is interpolated monotonically and held
    constant below r0 and beyond the last grid point.
    """
    if callable(curve):
        f = curve
        pts = list(breakpoints or [])
    else:
        grid, vals = curve
        grid = np.asarray(grid, float)
        vals = np.asarray(vals, float)
        sel = grid >= r0
        if not sel.any():
            raise ValueError("transfer curve has no points at or beyond r0")
        g2, v2 = grid[sel], vals[sel]
        if g2[0] > r0:
            g2 = np.r_[r0, g2]
            v2 = np.concatenate([vals[~sel][-1:] if (~sel).any() else v2[:1], v2])
        if len(g2) == 1:
            f = lambda r, v=v2[0]: v
        else:
            interp = PchipInterpolator(g2, v2, axis=0, extrapolate=False)
            lo, hi = v2[0], v2[-1]

            def f(r):
                if r <= g2[0]:
                    return lo
                if r >= g2[-1]:
                    return hi
                return interp(r)

        pts = list(g2)
    r_max = idpd_cutoff(idpd, r_peak)
    pts = sorted(p for p in pts if 0 < p < r_max)
    result, err = quad_vec(lambda r: idpd(r) * np.asarray(f(r)), 0.0, r_max, epsrel=rtol, epsabs=1e-13, points=pts or None, limit=20000)
    bad = np.max(np.abs(err)) if np.ndim(err) else err
    if not np.isfinite(bad) or bad > max(10 * rtol * np.max(np.abs(result)), 1e-10):
        raise QuadratureError(f"quadrature did not converge: estimated error {bad:.3g}")
    return result
