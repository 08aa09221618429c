"""Single-atom data for alkali Rydberg physics.

Energies are angular frequencies in rad/us (2 pi x MHz) measured from the
ionization threshold. Radial matrix elements are in Bohr radii.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .angular import clebsch_gordan, wigner_3j, wigner_6j
from .textio import ConfigError, parse_floats, parse_quantity, read_sections, parse_sections

# CODATA 2018
SPEED_OF_LIGHT_CM_PER_US = 2.99792458e4  # cm/us -> MHz per cm^-1
FINE_STRUCTURE = 7.2973525693e-3
ELECTRON_MASS_U = 5.48579909065e-4
ATOMIC_MASS_UNIT = 1.66053906660e-27
RYDBERG_INF_CM = 109737.31568160
KB = 1.380649e-23
HBAR = 1.054571817e-34
# E_h * a0^3 / h for two unit dipoles (e a0) at 1 um, in MHz um^3
DIPOLE_DIPOLE_MHZ_UM3 = 6.579683920502e9 * (5.29177210903e-5) ** 3


class MissingDataError(KeyError):
    """No quantum-defect or level data for the requested channel."""


class RadialIntegrationError(RuntimeError):
    """Numerov integration produced an unusable wavefunction."""


def _is_half_integer(x: float) -> bool:
    return abs(2 * x - round(2 * x)) < 1e-9 and round(2 * x) % 2 == 1


@dataclass(frozen=True, order=True)
class FineState:
    """|n, l, j, m_j> of a single alkali valence electron (s = 1/2)."""

    n: int
    l: int
    j: float
    mj: float

    def __post_init__(self):
        if self.l < 0 or self.l >= self.n:
            raise ValueError(f"need 0 <= l < n, got n={self.n}, l={self.l}")
        if not _is_half_integer(self.j) or not _is_half_integer(self.mj):
            raise ValueError(f"j and m_j must be half-integers: {self}")
        if not abs(self.l - 0.5) - 1e-9 <= self.j <= self.l + 0.5 + 1e-9:
            raise ValueError(f"j={self.j} incompatible with l={self.l}")
        if abs(self.mj) > self.j + 1e-9:
            raise ValueError(f"|m_j| > j in {self}")

    @property
    def level(self) -> tuple[int, int, float]:
        return (self.n, self.l, self.j)

    def label(self) -> str:
        return f"{self.n}{'SPDFGH'[self.l]}{int(2 * self.j)}/2,mj={self.mj:+g}"


@dataclass(frozen=True, order=True)
class HyperfineState:
    """|n, l, j, F, m_F> with nuclear spin I."""

    n: int
    l: int
    j: float
    F: float
    mF: float
    I: float = 1.5

    def __post_init__(self):
        if not abs(self.j - self.I) - 1e-9 <= self.F <= self.j + self.I + 1e-9:
            raise ValueError(f"F={self.F} outside |j-I|..j+I")
        if abs(self.mF) > self.F + 1e-9:
            raise ValueError(f"|m_F| > F in {self}")
        if abs((self.F - self.j - self.I) - round(self.F - self.j - self.I)) > 1e-9:
            raise ValueError(f"F={self.F} not reachable from j={self.j}, I={self.I}")


def channel_name(l: int, j: float) -> str:
    return f"{'SPDFGH'[l]}{int(round(2 * j))}/2"


@dataclass(frozen=True)
class SpeciesData:
    """Immutable atomic constants for one species.

    ``quantum_defects`` maps a channel name such as ``"S1/2"`` to its
    Rydberg-Ritz coefficients; ``levels`` maps ``(n, l, j)`` to a measured
    term energy (cm^-1 above the ground state) and takes precedence.
    """

    name: str
    mass: float  # kg
    nuclear_spin: float
    rydberg_constant: float  # cm^-1, mass corrected
    ionization_energy: float  # cm^-1
    quantum_defects: tuple = ()
    levels: tuple = ()
    hfs_a: float = 0.0  # rad/us
    linewidth: float = 1.0  # rad/us
    branching_ratio: float = 0.5
    rydberg_lifetime: float = 32.27  # us
    probe_wavelength: float = 0.42  # um
    intermediate: tuple = (6, 1, 1.5)
    ground: tuple = (5, 0, 0.5)
    core_charge: int = 37
    alpha_c: float = 0.0
    model_potential: tuple = ()  # ((l, (a1, a2, a3, a4, rc)), ...)
    source: str = field(default="<builtin>", compare=False)

    def __post_init__(self):
        if not 0.0 <= self.branching_ratio <= 1.0:
            raise ConfigError(f"branching ratio {self.branching_ratio} outside [0, 1]")
        if self.linewidth <= 0:
            raise ConfigError("linewidth must be positive")
        if self.rydberg_lifetime <= 0:
            raise ConfigError("Rydberg lifetime must be positive")
        if not math.isfinite(self.hfs_a):
            raise ConfigError("A_HFS must be finite")

    def quantum_defect_coefficients(self, l: int, j: float) -> tuple[float, ...]:
        name = channel_name(l, j)
        for key, coeffs in self.quantum_defects:
            if key == name:
                return coeffs
        raise MissingDataError(f"{self.name}: no quantum defects for channel {name}")

    def term_energy(self, n: int, l: int, j: float):
        for key, value in self.levels:
            if key == (n, l, j):
                return value
        return None

    def core_parameters(self, l: int):
        for key, params in self.model_potential:
            if key == l:
                return params
        return None

    @property
    def reduced_mass_factor(self) -> float:
        m_u = self.mass / ATOMIC_MASS_UNIT
        return (m_u - ELECTRON_MASS_U) / m_u

    def with_overrides(self, **changes) -> "SpeciesData":
        from dataclasses import replace

        return replace(self, **changes)


def _level_key(entry_key: str, where: str):
    parts = entry_key.split()
    if len(parts) != 3:
        raise ConfigError(f"{where}: level key must be 'n l j', got {entry_key!r}")
    return (int(parts[0]), int(parts[1]), float(parts[2]))


def species_from_sections(sections, source="<string>") -> SpeciesData:
    try:
        sp = sections["species"]
        tr = sections["transition"]
    except KeyError as exc:
        raise ConfigError(f"{source}: missing section [{exc.args[0]}]") from None
    known = {
        "species": {"name", "mass", "nuclear_spin", "rydberg_constant", "ionization_energy", "core_charge"},
        "transition": {"intermediate", "ground", "hfs_a_intermediate", "linewidth", "branching_ratio", "probe_wavelength"},
        "rydberg": {"lifetime"},
    }
    for sec, keys in known.items():
        for key, entry in sections.get(sec, {}).items():
            if key not in keys:
                raise ConfigError(f"{entry.where()}: unknown key {key!r} in [{sec}]")

    def req(sec, key):
        try:
            return sec[key]
        except KeyError:
            raise ConfigError(f"{source}: missing key {key!r}") from None

    qd = []
    for key, entry in sections.get("quantum_defects", {}).items():
        coeffs = tuple(parse_floats(entry))
        if not coeffs:
            raise ConfigError(f"{entry.where()}: empty quantum defect row")
        qd.append((key, coeffs))
    levels = []
    for key, entry in sections.get("levels", {}).items():
        levels.append((_level_key(key, entry.where()), parse_quantity(entry)))
    mp = []
    alpha_c = 0.0
    for key, entry in sections.get("model_potential", {}).items():
        if key == "alpha_c":
            alpha_c = parse_quantity(entry)
            continue
        vals = parse_floats(entry)
        if len(vals) != 5:
            raise ConfigError(f"{entry.where()}: model potential row needs a1 a2 a3 a4 rc")
        mp.append((int(key), tuple(vals)))

    def triple(entry):
        vals = parse_floats(entry)
        if len(vals) != 3:
            raise ConfigError(f"{entry.where()}: expected 'n l j'")
        return (int(vals[0]), int(vals[1]), vals[2])

    ryd = sections.get("rydberg", {})
    return SpeciesData(
        name=req(sp, "name").raw,
        mass=parse_quantity(req(sp, "mass"), "mass"),
        nuclear_spin=parse_quantity(req(sp, "nuclear_spin")),
        rydberg_constant=parse_quantity(req(sp, "rydberg_constant"), "wavenumber"),
        ionization_energy=parse_quantity(req(sp, "ionization_energy"), "wavenumber"),
        core_charge=int(parse_quantity(sp["core_charge"])) if "core_charge" in sp else 37,
        quantum_defects=tuple(qd),
        levels=tuple(levels),
        hfs_a=parse_quantity(req(tr, "hfs_a_intermediate"), "frequency"),
        linewidth=parse_quantity(req(tr, "linewidth"), "frequency"),
        branching_ratio=parse_quantity(req(tr, "branching_ratio")),
        probe_wavelength=parse_quantity(tr["probe_wavelength"], "length") if "probe_wavelength" in tr else 0.42,
        intermediate=triple(req(tr, "intermediate")),
        ground=triple(req(tr, "ground")),
        rydberg_lifetime=parse_quantity(ryd["lifetime"], "time") if "lifetime" in ryd else 32.27,
        alpha_c=alpha_c,
        model_potential=tuple(mp),
        source=source,
    )


def load_species(path=None) -> SpeciesData:
    """Load species data; ``None`` gives the bundled 87Rb file."""
    if path is None:
        text = resources.files("rydberg_ati").joinpath("data/rb87.dat").read_text()
        return species_from_sections(parse_sections(text, "rb87.dat"), "rb87.dat")
    return species_from_sections(read_sections(path), str(Path(path)))


@lru_cache(maxsize=None)
def default_species() -> SpeciesData:
    return load_species()


def hydrogen_like(species: SpeciesData | None = None) -> SpeciesData:
    """Zero quantum defects, pure Coulomb potential, no tabulated levels."""
    zeros = tuple((channel_name(l, j), (0.0,)) for l in range(6) for j in (l - 0.5, l + 0.5) if j > 0)
    return SpeciesData(
        name="H-like",
        mass=species.mass if species else 1.67262192369e-27 + 9.1093837015e-31,
        nuclear_spin=0.5,
        rydberg_constant=RYDBERG_INF_CM,
        ionization_energy=RYDBERG_INF_CM,
        quantum_defects=zeros,
        core_charge=1,
    )


# --- energies -----------------------------------------------------------------


def quantum_defect(n: int, l: int, j: float, species: SpeciesData) -> float:
    coeffs = species.quantum_defect_coefficients(l, j)
    d0 = coeffs[0]
    x = 1.0 / (n - d0) ** 2
    return sum(c * x**k for k, c in enumerate(coeffs))


def binding_wavenumber(n: int, l: int, j: float, species: SpeciesData) -> float:
    """Binding energy (positive, cm^-1) of level (n, l, j)."""
    term = species.term_energy(n, l, j)
    if term is not None:
        return species.ionization_energy - term
    nstar = n - quantum_defect(n, l, j, species)
    return species.rydberg_constant / nstar**2


def effective_n(n: int, l: int, j: float, species: SpeciesData) -> float:
    return math.sqrt(species.rydberg_constant / binding_wavenumber(n, l, j, species))


def state_energy(s, species: SpeciesData) -> float:
    """Energy of ``s`` (FineState or (n, l, j)) in rad/us below threshold (negative)."""
    n, l, j = s.level if isinstance(s, FineState) else s
    if n <= l:
        raise ValueError(f"n={n} must exceed l={l}")
    return -2 * math.pi * SPEED_OF_LIGHT_CM_PER_US * binding_wavenumber(n, l, j, species)


def forster_defect(pair_in, pair_out, species: SpeciesData) -> float:
    """E(pair_out) - E(pair_in) for two-atom levels given as (n, l, j) tuples."""
    return sum(state_energy(s, species) for s in pair_out) - sum(
        state_energy(s, species) for s in pair_in
    )


# --- radial wavefunctions -----------------------------------------------------


def _potential(l: int, j: float, r: np.ndarray, species: SpeciesData) -> np.ndarray:
    """Model core potential plus spin-orbit term (atomic units)."""
    params = species.core_parameters(min(l, 3))
    if params is None or species.core_charge == 1:
        v = -1.0 / r
    else:
        a1, a2, a3, a4, rc = params
        z = species.core_charge
        zl = 1.0 + (z - 1) * np.exp(-a1 * r) - r * (a3 + a4 * r) * np.exp(-a2 * r)
        v = -zl / r - species.alpha_c / (2 * r**4) * (1 - np.exp(-((r / rc) ** 6)))
    if species.core_charge != 1 and l > 0:
        ls = (j * (j + 1) - l * (l + 1) - 0.75) / 2
        v = v + FINE_STRUCTURE**2 / (2 * r**3) * ls
    return v


@lru_cache(maxsize=256)
def radial_wavefunction(n: int, l: int, j: float, species: SpeciesData, step: float = 0.005):
    """Normalized radial function u(r) = r R(r) by inward Numerov integration.

    The integration runs on x = sqrt(r) where the Rydberg oscillations are
    roughly uniform. Returns ``(x, y)`` with u(r) = sqrt(x) * y(x) so that
    ``2 * int x^2 y^2 dx = 1``.
    """
    e_au = -binding_wavenumber(n, l, j, species) / (2 * RYDBERG_INF_CM)
    mu = species.reduced_mass_factor if species.core_charge != 1 else 1.0
    r_in = max(species.alpha_c ** (1 / 3), 1e-4) if species.core_charge != 1 else 1e-4
    r_out = 2.0 * n * (n + 15.0)
    x0 = math.sqrt(r_in)
    npts = int((math.sqrt(r_out) - x0) / step) + 1
    x = x0 + step * np.arange(npts)
    r = x * x
    k = 8 * mu * r * (e_au - _potential(l, j, r, species)) - (4 * l * (l + 1) + 0.75) / r
    f = 1 + step * step * k / 12.0
    y = np.zeros(npts)
    y[-1] = 0.0
    y[-2] = 1e-10
    y = _numerov_inward(f, y)

    u = np.abs(y) * np.sqrt(x)
    cut = _divergence_cut(u)
    y[:cut] = 0.0
    if not np.all(np.isfinite(y)) or not np.any(y):
        raise RadialIntegrationError(f"Numerov failed for n={n}, l={l}, j={j}")
    norm = 2 * simpson(x * x * y * y, x=x)
    if not (norm > 0 and math.isfinite(norm)):
        raise RadialIntegrationError(f"bad norm {norm} for n={n}, l={l}, j={j}")
    y /= math.sqrt(norm)
    # outermost lobe positive
    return x, y


def _numerov_inward(f: np.ndarray, y: np.ndarray) -> np.ndarray:
    for i in range(len(y) - 3, -1, -1):
        y[i] = ((12 - 10 * f[i + 1]) * y[i + 1] - f[i + 2] * y[i + 2]) / f[i]
    return y


def _divergence_cut(u: np.ndarray) -> int:
    """Index below which the inward solution has started to blow up."""
    npts = len(u)
    i = npts - 1
    peak = 0.0
    since_peak = 0
    # walk in past the outer lobes
    while i > 0:
        i -= 1
        if u[i] > peak:
            peak = u[i]
            since_peak = 0
        else:
            since_peak += 1
            if since_peak > 50:
                break
    while i > 0:
        i -= 1
        if u[i] > peak:
            # back off to the local minimum before the growth
            while i + 1 < npts and u[i] > u[i + 1]:
                i += 1
            return i
    return 0


def radial_matrix_element(a, b, species: SpeciesData) -> float:
    """<a| r |b> in Bohr radii for states (FineState or (n, l, j))."""
    la = a.level if isinstance(a, FineState) else tuple(a)
    lb = b.level if isinstance(b, FineState) else tuple(b)
    if abs(la[1] - lb[1]) != 1:
        raise ValueError(f"dipole selection rule |dl| = 1 violated: l={la[1]}, l'={lb[1]}")
    if la > lb:
        la, lb = lb, la
    return _radial_me(la, lb, species)


@lru_cache(maxsize=None)
def _radial_me(la, lb, species):
    xa, ya = radial_wavefunction(*la, species)
    xb, yb = radial_wavefunction(*lb, species)
    m = min(len(xa), len(xb))
    if abs(xa[0] - xb[0]) > 1e-12:
        raise RadialIntegrationError("radial meshes are not aligned")
    x = xa[:m]
    val = 2 * simpson(x**4 * ya[:m] * yb[:m], x=x)
    if not math.isfinite(val):
        raise RadialIntegrationError(f"non-finite radial integral for {la}, {lb}")
    return float(val)


# --- angular parts ------------------------------------------------------------


def reduced_angular_lj(l1: int, j1: float, l2: int, j2: float, s: float = 0.5) -> float:
    """<l1 s j1 || C^1 || l2 s j2> (Condon-Shortley, Edmonds normalization)."""
    return (
        (-1) ** int(round(l1 + s + j2 + 1))
        * math.sqrt((2 * j1 + 1) * (2 * j2 + 1))
        * wigner_6j(l1, j1, s, j2, l2, 1)
        * (-1) ** l1
        * math.sqrt((2 * l1 + 1) * (2 * l2 + 1))
        * wigner_3j(l1, 1, l2, 0, 0, 0)
    )


def angular_dipole(a: FineState, b: FineState, q: int) -> float:
    """<b| C^1_q |a>: angular factor for the q-component of the dipole.

    Nonzero only for m_b = m_a + q, |l_a - l_b| = 1 and |j_a - j_b| <= 1.
    """
    if b.mj != a.mj + q or abs(a.l - b.l) != 1 or abs(a.j - b.j) > 1:
        return 0.0
    return (
        (-1) ** int(round(b.j - b.mj))
        * wigner_3j(b.j, 1, a.j, -b.mj, q, a.mj)
        * reduced_angular_lj(b.l, b.j, a.l, a.j)
    )


def dipole_matrix_element(a: FineState, b: FineState, q: int, species: SpeciesData) -> float:
    """<b| r_q |a> in e a0."""
    ang = angular_dipole(a, b, q)
    if ang == 0.0:
        return 0.0
    return ang * radial_matrix_element(a, b, species)


def hyperfine_dipole(
    g: HyperfineState, e: HyperfineState, q: int
) -> float:
    """<e, F' m_F'| C^1_q |g, F m_F> angular factor in the coupled basis."""
    if e.mF != g.mF + q or abs(e.l - g.l) != 1:
        return 0.0
    I = g.I
    red_j = reduced_angular_lj(e.l, e.j, g.l, g.j)
    red_f = (
        (-1) ** int(round(e.j + I + g.F + 1))
        * math.sqrt((2 * e.F + 1) * (2 * g.F + 1))
        * wigner_6j(e.j, e.F, I, g.F, g.j, 1)
        * red_j
    )
    return (-1) ** int(round(e.F - e.mF)) * wigner_3j(e.F, 1, g.F, -e.mF, q, g.mF) * red_f


def hyperfine_to_fine(j: float, I: float, F: float, mF: float):
    """Expansion of |F m_F> into (m_j, m_I, coefficient) via Clebsch-Gordan."""
    out = []
    for k in range(int(round(2 * j)) + 1):
        mj = -j + k
        mI = mF - mj
        if abs(mI) > I + 1e-9:
            continue
        c = clebsch_gordan(j, mj, I, mI, F, mF)
        if c != 0.0:
            out.append((mj, mI, c))
    return out
