"""Two-atom product basis and the terms of the ATI pair Hamiltonian.

The control atom lives in a set of Rydberg fine-structure states. The sample
atom additionally carries the nuclear projection m_I and the intermediate
manifold |e>. Pair index p = i * n_S + k for control index i and sample
index k, so a state vector reshapes to an (n_C, n_S) coefficient matrix.

All matrix elements are real for an internuclear axis in the x-z plane, so
terms are stored as real symmetric matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .angular import clebsch_gordan
from .atomic import (
    DIPOLE_DIPOLE_MHZ_UM3,
    FineState,
    SpeciesData,
    angular_dipole,
    hyperfine_to_fine,
    radial_matrix_element,
    state_energy,
)
from .textio import ConfigError

TWO_PI = 2 * math.pi
# E_h a0^3 for two unit dipoles at 1 um, in rad/us um^3
DIPOLE_DIPOLE_UNIT = TWO_PI * DIPOLE_DIPOLE_MHZ_UM3


class BasisMismatchError(ValueError):
    """Terms built on different bases were combined."""


@dataclass(frozen=True, order=True)
class SampleState:
    """Sample-atom state: fine-structure state times nuclear projection."""

    state: FineState
    mI: float

    @property
    def level(self):
        return self.state.level

    def label(self) -> str:
        return f"{self.state.label()},mI={self.mI:+g}"


def rydberg_levels(n_values, l_max: int = 1) -> list[tuple[int, int, float]]:
    """All (n, l, j) with n in ``n_values`` and l <= l_max."""
    out = []
    for n in n_values:
        for l in range(min(l_max, n - 1) + 1):
            for j in (l - 0.5, l + 0.5):
                if j > 0:
                    out.append((int(n), l, j))
    return sorted(set(out))


def _fine_states(levels) -> list[FineState]:
    out = []
    for n, l, j in levels:
        for k in range(int(round(2 * j)) + 1):
            out.append(FineState(n, l, j, -j + k))
    return out


def _projections(spin: float) -> list[float]:
    return [-spin + k for k in range(int(round(2 * spin)) + 1)]


@dataclass(frozen=True, eq=False)
class PairBasis:
    """Ordered control x sample product basis."""

    control: tuple[FineState, ...]
    sample: tuple[SampleState, ...]
    intermediate: tuple[int, int, float] = (6, 1, 1.5)
    nuclear_spin: float = 1.5

    def __post_init__(self):
        if not self.control or not self.sample:
            raise ConfigError("basis selection is empty")
        if len(set(self.control)) != len(self.control):
            raise ConfigError("duplicate control state")
        if len(set(self.sample)) != len(self.sample):
            raise ConfigError("duplicate sample state")
        if any(s.level == self.intermediate for s in self.control):
            raise ConfigError("the intermediate manifold belongs to the sample atom only")

    @classmethod
    def from_states(cls, control, sample, intermediate=(6, 1, 1.5), nuclear_spin=1.5):
        sample = tuple(s if isinstance(s, SampleState) else SampleState(s, 0.0) for s in sample)
        return cls(tuple(control), sample, tuple(intermediate), nuclear_spin)

    @property
    def n_control(self) -> int:
        return len(self.control)

    @property
    def n_sample(self) -> int:
        return len(self.sample)

    @property
    def dim(self) -> int:
        return self.n_control * self.n_sample

    def index(self, i: int, k: int) -> int:
        return i * self.n_sample + k

    def split(self, p: int) -> tuple[int, int]:
        return divmod(p, self.n_sample)

    @cached_property
    def control_index(self) -> dict:
        return {s: i for i, s in enumerate(self.control)}

    @cached_property
    def sample_index(self) -> dict:
        return {s: k for k, s in enumerate(self.sample)}

    @cached_property
    def is_intermediate(self) -> np.ndarray:
        return np.array([s.level == self.intermediate for s in self.sample])

    def total_m(self, q_c: int = -1) -> np.ndarray:
        """Conserved projection per pair state.

        Intermediate sample states count as if they had absorbed a coupling
        photon, m -> m + q_c, which is what makes the Rabi term diagonal in M.
        """
        mc = np.array([s.mj for s in self.control])
        ms = np.array([s.state.mj + s.mI for s in self.sample]) + q_c * self.is_intermediate
        return (mc[:, None] + ms[None, :]).ravel()

    def labels(self) -> list[str]:
        return [f"{c.label()} | {s.label()}" for c in self.control for s in self.sample]

    def same_as(self, other: "PairBasis") -> bool:
        return self is other or (
            self.control == other.control
            and self.sample == other.sample
            and self.intermediate == other.intermediate
        )


def build_basis(
    rydberg=None,
    intermediate=(6, 1, 1.5),
    nuclear_spin: float = 1.5,
    control=None,
    include_intermediate: bool = True,
) -> PairBasis:
    """Product basis from manifold lists.

    ``rydberg`` is a list of (n, l, j) Rydberg levels, default n in
    {37, 38, 39} with l <= 1. The control atom gets ``control`` (default the
    same Rydberg levels). The sample atom gets every Rydberg level plus the
    intermediate level, each with all m_j and m_I projections.
    """
    if rydberg is None:
        rydberg = rydberg_levels((37, 38, 39), 1)
    rydberg = sorted(set(tuple(x) for x in rydberg))
    control = rydberg if control is None else sorted(set(tuple(x) for x in control))
    if not rydberg or not control:
        raise ConfigError("empty manifold selection")
    intermediate = tuple(intermediate)
    if intermediate in rydberg:
        raise ConfigError("intermediate level listed among the Rydberg manifolds")
    sample_levels = list(rydberg) + ([intermediate] if include_intermediate else [])
    mis = _projections(nuclear_spin)
    sample = sorted(SampleState(s, mi) for s in _fine_states(sample_levels) for mi in mis)
    return PairBasis(tuple(sorted(_fine_states(control))), tuple(sample), intermediate, nuclear_spin)


@dataclass(frozen=True)
class CouplingField:
    """Coupling laser e -> r*.

    ``omega_ref`` is the weakest non-zero effective Rabi frequency of the
    |e, F=F_ref, m_F> states into the target manifold; the field amplitude is
    calibrated from it. ``detuning`` is omega_c - omega_0, so r* sits at
    -detuning in the rotating frame.
    """

    omega_ref: float
    q: int = -1
    detuning: float = 0.0
    target: tuple[int, int, float] = (38, 0, 0.5)
    f_ref: float = 2.0

    def __post_init__(self):
        if not self.omega_ref >= 0:
            raise ConfigError("coupling Rabi frequency must be non-negative")
        if self.q not in (-1, 0, 1):
            raise ConfigError(f"polarization must be -1, 0 or +1, got {self.q}")


def hyperfine_couplings(field: CouplingField, intermediate, nuclear_spin) -> dict:
    """Angular factors <target, m_j', m_I| C_q |e, F_ref, m_F>.

    Keyed by (m_F, m_j', m_I); each m_F component of |e> reaches its own
    target state because m_I is a spectator.
    """
    j_e = intermediate[2]
    n, l, j = field.target
    out = {}
    for k in range(int(round(2 * field.f_ref)) + 1):
        mF = -field.f_ref + k
        for mj, mI, cg in hyperfine_to_fine(j_e, nuclear_spin, field.f_ref, mF):
            mr = mj + field.q
            if abs(mr) > j:
                continue
            a = angular_dipole(FineState(*intermediate, mj), FineState(n, l, j, mr), field.q)
            out[(mF, mr, mI)] = out.get((mF, mr, mI), 0.0) + cg * a
    return out


def field_amplitude(field: CouplingField, species: SpeciesData, intermediate=None, nuclear_spin=None) -> float:
    """Field scale s (rad/us per e a0) such that the weakest non-zero
    |F_ref, m_F> -> |target, m_j> coupling equals ``omega_ref``."""
    intermediate = tuple(intermediate or species.intermediate)
    spin = species.nuclear_spin if nuclear_spin is None else nuclear_spin
    if field.omega_ref == 0:
        return 0.0
    strengths = [abs(v) for v in hyperfine_couplings(field, intermediate, spin).values() if abs(v) > 1e-12]
    if not strengths:
        raise ConfigError(f"polarization q={field.q} does not couple F={field.f_ref} to {field.target}")
    radial = abs(radial_matrix_element(intermediate, field.target, species))
    return field.omega_ref / (radial * min(strengths))


@dataclass
class HamiltonianTerm:
    matrix: np.ndarray
    tag: str
    basis: PairBasis = field(repr=False)

    def __post_init__(self):
        n = self.basis.dim
        if self.matrix.shape != (n, n):
            raise BasisMismatchError(f"{self.tag}: matrix shape {self.matrix.shape} vs basis dim {n}")

    def hermiticity_defect(self) -> float:
        scale = max(np.abs(self.matrix).max(), 1e-300)
        return float(np.abs(self.matrix - self.matrix.conj().T).max() / scale)

    def __add__(self, other: "HamiltonianTerm") -> "HamiltonianTerm":
        if not self.basis.same_as(other.basis):
            raise BasisMismatchError(f"cannot add {self.tag} and {other.tag}: different bases")
        return HamiltonianTerm(self.matrix + other.matrix, f"{self.tag}+{other.tag}", self.basis)

    def dump(self, path) -> None:
        """Row-major matrix plus index maps, readable with ``numpy.load``."""
        b = self.basis
        np.savez(
            path,
            matrix=np.ascontiguousarray(self.matrix),
            tag=self.tag,
            control=np.array([c.label() for c in b.control]),
            sample=np.array([s.label() for s in b.sample]),
            pair_index=np.array([[p, *b.split(p)] for p in range(b.dim)]),
        )


# --- single-atom operators ----------------------------------------------------


def _dipole_operator(states, species, q, mI=None):
    """D[b, a] = <b| r_q |a> over ``states``; optional m_I spectator list."""
    n = len(states)
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if mI is not None and mI[a] != mI[b]:
                continue
            sa, sb = states[a], states[b]
            ang = angular_dipole(sa, sb, q)
            if ang != 0.0:
                out[b, a] = ang * radial_matrix_element(sa, sb, species)
    return out


def control_dipole(basis: PairBasis, species: SpeciesData, q: int) -> np.ndarray:
    return _dipole_operator(basis.control, species, q)


def sample_dipole(basis: PairBasis, species: SpeciesData, q: int) -> np.ndarray:
    """Rydberg-Rydberg dipole operator of the sample atom; zero on |e>."""
    states = [s.state for s in basis.sample]
    out = _dipole_operator(states, species, q, [s.mI for s in basis.sample])
    e = basis.is_intermediate
    out[e, :] = 0.0
    out[:, e] = 0.0
    return out


def _ryry_unit(basis: PairBasis, species: SpeciesData, theta: float) -> np.ndarray:
    """Dipole-dipole operator at R = 1 um (rad/us), axis at polar angle theta.

    V = [d1.d2 - 3 (d1.n)(d2.n)] / R^3 with n = (sin theta, 0, cos theta).
    """
    dc = {q: control_dipole(basis, species, q) for q in (-1, 0, 1)}
    ds = {q: sample_dipole(basis, species, q) for q in (-1, 0, 1)}
    # spherical components of n: n_0 = cos, n_{+-1} = -+ sin / sqrt 2
    s, c = math.sin(theta), math.cos(theta)
    n = {0: c, 1: -s / math.sqrt(2), -1: s / math.sqrt(2)}
    v = np.zeros((basis.dim, basis.dim))
    for q in (-1, 0, 1):
        v += (-1) ** q * np.kron(dc[q], ds[-q])
    # (d.n) = sum_q (-1)^q n_{-q} d_q
    for q1 in (-1, 0, 1):
        for q2 in (-1, 0, 1):
            w = (-1) ** (q1 + q2) * n[-q1] * n[-q2]
            if w != 0.0:
                v -= 3 * w * np.kron(dc[q1], ds[q2])
    return DIPOLE_DIPOLE_UNIT * v


def h_ryry(basis: PairBasis, R: float, species: SpeciesData, theta: float = 0.0) -> HamiltonianTerm:
    """Dipole-dipole interaction between the two Rydberg atoms at distance R (um)."""
    if not R > 0:
        raise ValueError(f"internuclear distance must be positive, got {R}")
    return HamiltonianTerm(_ryry_unit(basis, species, theta) / R**3, "RyRy", basis)


def sample_rabi(basis: PairBasis, field: CouplingField, species: SpeciesData) -> np.ndarray:
    """Coupling-laser operator on the sample atom, e <-> Rydberg, m_I spectator."""
    scale = field_amplitude(field, species, basis.intermediate, basis.nuclear_spin)
    ns = basis.n_sample
    w = np.zeros((ns, ns))
    if scale == 0.0:
        return w
    e_idx = np.flatnonzero(basis.is_intermediate)
    for a in e_idx:
        sa = basis.sample[a]
        for b, sb in enumerate(basis.sample):
            if basis.is_intermediate[b] or sb.mI != sa.mI:
                continue
            ang = angular_dipole(sa.state, sb.state, field.q)
            if ang == 0.0:
                continue
            val = -0.5 * scale * ang * radial_matrix_element(sa.state, sb.state, species)
            w[b, a] = val
            w[a, b] = val
    return w


def h_rabi(basis: PairBasis, field: CouplingField, species: SpeciesData) -> HamiltonianTerm:
    return HamiltonianTerm(np.kron(np.eye(basis.n_control), sample_rabi(basis, field, species)), "Rabi", basis)


def hfs_level(F: float, j: float, spin: float, a_hfs: float) -> float:
    return 0.5 * a_hfs * (F * (F + 1) - j * (j + 1) - spin * (spin + 1))


def sample_hfs(basis: PairBasis, species: SpeciesData) -> np.ndarray:
    """A I.J on the intermediate block: Iz Jz + (I+ J- + I- J+)/2."""
    a = species.hfs_a
    j = basis.intermediate[2]
    spin = basis.nuclear_spin
    ns = basis.n_sample
    h = np.zeros((ns, ns))
    idx = {(s.state.mj, s.mI): k for k, s in enumerate(basis.sample) if basis.is_intermediate[k]}
    for (mj, mI), k in idx.items():
        h[k, k] += a * mj * mI
        # I+ J-: (mj, mI) -> (mj - 1, mI + 1)
        t = idx.get((mj - 1, mI + 1))
        if t is not None:
            amp = 0.5 * a * math.sqrt((j + mj) * (j - mj + 1) * (spin - mI) * (spin + mI + 1))
            h[t, k] += amp
            h[k, t] += amp
    return h


def h_hfs(basis: PairBasis, species: SpeciesData) -> HamiltonianTerm:
    return HamiltonianTerm(np.kron(np.eye(basis.n_control), sample_hfs(basis, species)), "HFS", basis)


@dataclass(frozen=True)
class FrameReference:
    """Which bare states sit at zero in the rotating frame."""

    control: tuple[int, int, float] = (39, 0, 0.5)
    f_ref: float = 2.0


def control_energies(basis: PairBasis, species: SpeciesData, ref: FrameReference = FrameReference()) -> np.ndarray:
    e0 = state_energy(ref.control, species)
    return np.array([state_energy(s, species) - e0 for s in basis.control])


def sample_energies(basis: PairBasis, field: CouplingField, species: SpeciesData, ref: FrameReference = FrameReference()) -> np.ndarray:
    """Bare rotating-frame energies of the sample states.

    Rydberg states are measured from the coupling target minus the detuning;
    intermediate states get the offset that puts F = f_ref at zero once the
    hyperfine term is added.
    """
    e_target = state_energy(field.target, species)
    j = basis.intermediate[2]
    offset = -hfs_level(ref.f_ref, j, basis.nuclear_spin, species.hfs_a)
    out = np.empty(basis.n_sample)
    for k, s in enumerate(basis.sample):
        if basis.is_intermediate[k]:
            out[k] = offset
        else:
            out[k] = state_energy(s.state, species) - e_target - field.detuning
    return out


def h_diagonal(basis, field, species, ref: FrameReference = FrameReference()) -> HamiltonianTerm:
    d = (control_energies(basis, species, ref)[:, None] + sample_energies(basis, field, species, ref)[None, :]).ravel()
    return HamiltonianTerm(np.diag(d), "diagonal-detuning", basis)


def sample_hamiltonian(basis, field, species, ref: FrameReference = FrameReference()) -> np.ndarray:
    """Single sample atom with the control atom in its ground state."""
    return np.diag(sample_energies(basis, field, species, ref)) + sample_rabi(basis, field, species) + sample_hfs(basis, species)


def assemble(basis, R, field, species, ref: FrameReference = FrameReference(), theta: float = 0.0) -> HamiltonianTerm:
    """Full rotating-frame pair Hamiltonian at distance R."""
    total = h_ryry(basis, R, species, theta) + h_rabi(basis, field, species) + h_hfs(basis, species)
    total = total + h_diagonal(basis, field, species, ref)
    total.tag = "total"
    return total


class PairHamiltonian:
    """Caches the R-independent part and the unit dipole-dipole operator.

    ``blocks(R)`` returns the Hamiltonian split by the conserved projection,
    which is exact for theta = 0.
    """

    def __init__(self, basis, field, species, ref: FrameReference = FrameReference(), theta: float = 0.0):
        self.basis = basis
        self.field = field
        self.species = species
        self.ref = ref
        self.theta = theta
        ns = basis.n_sample
        sample_part = sample_hamiltonian(basis, field, species, ref)
        self.static = np.kron(np.eye(basis.n_control), sample_part)
        self.static[np.diag_indices(basis.dim)] += np.repeat(control_energies(basis, species, ref), ns)
        self.unit = _ryry_unit(basis, species, theta)
        if theta == 0.0:
            m = basis.total_m(field.q)
            keys = np.unique(np.round(2 * m).astype(int))
            self.block_indices = [np.flatnonzero(np.round(2 * m).astype(int) == k) for k in keys]
        else:
            self.block_indices = [np.arange(basis.dim)]
        self._static_blocks = [self.static[np.ix_(ix, ix)] for ix in self.block_indices]
        self._unit_blocks = [self.unit[np.ix_(ix, ix)] for ix in self.block_indices]

    def matrix(self, R: float) -> np.ndarray:
        if not R > 0:
            raise ValueError(f"internuclear distance must be positive, got {R}")
        return self.static + self.unit / R**3

    def term(self, R: float) -> HamiltonianTerm:
        return HamiltonianTerm(self.matrix(R), "total", self.basis)

    def blocks(self, R: float):
        if not R > 0:
            raise ValueError(f"internuclear distance must be positive, got {R}")
        inv = 1.0 / R**3
        return [(ix, s + inv * u) for ix, s, u in zip(self.block_indices, self._static_blocks, self._unit_blocks)]
