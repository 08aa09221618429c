"""Run configuration: parsing, defaults and hashing.

Format: ``[section]`` headers and ``key = value [unit]`` lines. Every key is
optional; an empty file gives the default run.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .atomic import SpeciesData, default_species, load_species
from .fidelity import HISTOGRAM_MODES, FidelityConfig
from .geometry import SampleGeometry
from .pair import CouplingField, FrameReference, build_basis, rydberg_levels
from .probing import ProbeField
from .textio import ConfigError, Entry, UNITS, parse_floats, parse_quantity, parse_sections, read_sections

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class RunConfig:
    species_path: str | None = None
    rydberg_n: tuple = (37, 38, 39)
    l_max: int = 1
    control_level: tuple = (39, 0, 0.5)
    theta: float = 0.0
    coupling_q: int = -1
    coupling_detuning: float = 0.0
    coupling_target: tuple = (38, 0, 0.5)
    coupling_f: float = 2.0
    probe: ProbeField = field(default_factory=ProbeField)
    weighting: str = "squared"
    control_states: str = "sum"
    geometry: SampleGeometry = field(default_factory=SampleGeometry)
    fidelity: FidelityConfig = field(default_factory=FidelityConfig)
    couplings: tuple = tuple(TWO_PI * x for x in (18.0, 31.0, 44.0, 57.0))
    detunings: tuple = tuple(TWO_PI * float(x) for x in np.round(np.arange(-40.0, 20.0 + 1e-9, 0.5), 6))
    r_min: float = 0.2
    r_max: float = 10.0
    r_points: int = 240
    r0: float = 0.2
    atoms: tuple = (1, 10, 100)
    probe_times: tuple = tuple(float(x) for x in (1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60))
    fidelity_coupling: float = TWO_PI * 31.0
    ratio_target: float = 20.0
    output: str = "results"
    workers: int = 1
    seed: int = 0

    # --- derived objects ---
    def species(self) -> SpeciesData:
        return default_species() if self.species_path is None else load_species(self.species_path)

    def basis(self, species=None):
        species = species or self.species()
        return build_basis(rydberg_levels(self.rydberg_n, self.l_max), species.intermediate, species.nuclear_spin)

    def coupling(self, omega) -> CouplingField:
        return CouplingField(omega, self.coupling_q, self.coupling_detuning, self.coupling_target, self.coupling_f)

    def frame(self) -> FrameReference:
        return FrameReference(self.control_level, self.coupling_f)

    def distance_grid(self) -> np.ndarray:
        return np.geomspace(self.r_min, self.r_max, self.r_points)

    def fidelity_for(self, species: SpeciesData) -> FidelityConfig:
        return replace(self.fidelity, lifetime=species.rydberg_lifetime, branching=species.branching_ratio, transfer_time=self.probe.duration)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("output")
        d.pop("workers")
        return d

    def digest(self) -> str:
        """Hash of every parameter that affects numeric results."""
        text = json.dumps(self.as_dict(), sort_keys=True, default=repr)
        species_text = ""
        if self.species_path is not None:
            species_text = Path(self.species_path).read_text()
        return hashlib.sha256((text + "\n" + species_text).encode()).hexdigest()


def _grid(entry: Entry, dimension: str) -> tuple:
    """``a b c [unit]`` list, or ``start:stop:step [unit]`` range."""
    parts = entry.raw.split()
    unit = None
    if parts and parts[-1] in UNITS:
        unit = parts.pop()
    if not parts:
        raise ConfigError(f"{entry.where()}: empty list")
    if len(parts) == 1 and ":" in parts[0]:
        try:
            start, stop, step = (float(x) for x in parts[0].split(":"))
        except ValueError:
            raise ConfigError(f"{entry.where()}: range must be start:stop:step") from None
        if step <= 0 or stop < start:
            raise ConfigError(f"{entry.where()}: bad range {parts[0]}")
        values = [float(x) for x in np.round(np.arange(start, stop + step * 1e-9, step), 9)]
    else:
        try:
            values = [float(x) for x in parts]
        except ValueError:
            raise ConfigError(f"{entry.where()}: expected numbers, got {entry.raw!r}") from None
    out = []
    for v in values:
        raw = f"{v!r} {unit}" if unit else repr(v)
        out.append(parse_quantity(Entry(raw, entry.line, entry.source), dimension))
    return tuple(out)


def _level(entry: Entry) -> tuple:
    vals = parse_floats(entry)
    if len(vals) != 3:
        raise ConfigError(f"{entry.where()}: expected 'n l j'")
    return (int(vals[0]), int(vals[1]), vals[2])


def _int(entry: Entry, lo=None) -> int:
    try:
        v = int(entry.raw)
    except ValueError:
        raise ConfigError(f"{entry.where()}: expected an integer, got {entry.raw!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(f"{entry.where()}: must be >= {lo}")
    return v


def _positive(entry: Entry, dimension: str | None = None, allow_zero=False) -> float:
    v = parse_quantity(entry, dimension)
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"{entry.where()}: must be {'non-negative' if allow_zero else 'positive'}, got {entry.raw!r}")
    return v


def _choice(entry: Entry, options) -> str:
    if entry.raw not in options:
        raise ConfigError(f"{entry.where()}: must be one of {', '.join(options)}")
    return entry.raw


# section -> key -> handler(entry, base_dir) returning {field: value} updates
def _schema():
    return {
        "species": {"file": lambda e, d: {"species_path": str((d / e.raw).resolve())}},
        "basis": {
            "rydberg_n": lambda e, d: {"rydberg_n": tuple(int(x) for x in parse_floats(e))},
            "l_max": lambda e, d: {"l_max": _int(e, 0)},
            "control_state": lambda e, d: {"control_level": _level(e)},
            "theta": lambda e, d: {"theta": parse_quantity(e)},
        },
        "coupling": {
            "q": lambda e, d: {"coupling_q": _int(e)},
            "detuning": lambda e, d: {"coupling_detuning": parse_quantity(e, "frequency")},
            "target": lambda e, d: {"coupling_target": _level(e)},
            "f_ref": lambda e, d: {"coupling_f": parse_quantity(e)},
        },
        "probe": {
            "omega": lambda e, d: {"probe.omega": _positive(e, "frequency")},
            "q": lambda e, d: {"probe.q": _int(e)},
            "duration": lambda e, d: {"probe.duration": _positive(e, "time")},
            "weighting": lambda e, d: {"weighting": _choice(e, ("squared", "population"))},
            "control_states": lambda e, d: {"control_states": _choice(e, ("sum", "average"))},
        },
        "geometry": {
            "waist": lambda e, d: {"geometry.waist": _positive(e, "length")},
            "depth": lambda e, d: {"geometry.depth": _positive(e, "temperature")},
            "temperature": lambda e, d: {"geometry.temperature": _positive(e, "temperature")},
            "wavelength": lambda e, d: {"geometry.wavelength": _positive(e, "length")},
        },
        "fidelity": {
            "photons_per_atom": lambda e, d: {"fidelity.photons_per_atom": _positive(e, allow_zero=True)},
            "background": lambda e, d: {"fidelity.background": _positive(e, allow_zero=True)},
            "probe_time": lambda e, d: {"fidelity.probe_time": _positive(e, "time")},
            "time_step": lambda e, d: {"fidelity.time_step": _positive(e, "time")},
            "histogram": lambda e, d: {"fidelity.histogram": _choice(e, HISTOGRAM_MODES)},
        },
        "scan": {
            "couplings": lambda e, d: {"couplings": _grid(e, "frequency")},
            "detunings": lambda e, d: {"detunings": _grid(e, "frequency")},
            "r_min": lambda e, d: {"r_min": _positive(e, "length")},
            "r_max": lambda e, d: {"r_max": _positive(e, "length")},
            "r_points": lambda e, d: {"r_points": _int(e, 2)},
            "r0": lambda e, d: {"r0": _positive(e, "length")},
            "atoms": lambda e, d: {"atoms": tuple(_int(Entry(x, e.line, e.source), 1) for x in e.raw.split())},
            "probe_times": lambda e, d: {"probe_times": _grid(e, "time")},
            "fidelity_coupling": lambda e, d: {"fidelity_coupling": _positive(e, "frequency")},
            "ratio_target": lambda e, d: {"ratio_target": _positive(e)},
        },
        "run": {
            "output": lambda e, d: {"output": e.raw},
            "workers": lambda e, d: {"workers": _int(e, 1)},
            "seed": lambda e, d: {"seed": _int(e, 0)},
        },
    }


def config_from_text(text: str, source: str = "<string>", base_dir: Path | None = None) -> RunConfig:
    sections = parse_sections(text, source)
    return _build(sections, base_dir or Path.cwd())


def parse_config(path=None) -> RunConfig:
    """Validated configuration; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    return _build(read_sections(path), path.parent)


def _build(sections, base_dir: Path) -> RunConfig:
    schema = _schema()
    flat: dict = {}
    for sec, entries in sections.items():
        if not entries and sec == "":
            continue
        if sec not in schema:
            first = next(iter(entries.values()), None)
            where = first.where() if first else "config"
            raise ConfigError(f"{where}: unknown section [{sec}]")
        for key, entry in entries.items():
            handler = schema[sec].get(key)
            if handler is None:
                raise ConfigError(f"{entry.where()}: unknown key {key!r} in [{sec}]")
            try:
                flat.update(handler(entry, base_dir))
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{entry.where()}: {exc}") from None
    nested: dict = {"probe": {}, "geometry": {}, "fidelity": {}}
    top = {}
    for k, v in flat.items():
        if "." in k:
            a, b = k.split(".", 1)
            nested[a][b] = v
        else:
            top[k] = v
    base = RunConfig()
    try:
        cfg = replace(
            base,
            probe=replace(base.probe, **nested["probe"]),
            geometry=replace(base.geometry, **nested["geometry"]),
            fidelity=replace(base.fidelity, **nested["fidelity"]),
            **top,
        )
    except ConfigError:
        raise
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.species_path is not None and not Path(cfg.species_path).is_file():
        raise ConfigError(f"species file not found: {cfg.species_path}")
    for name in ("couplings", "detunings", "atoms", "probe_times", "rydberg_n"):
        if not getattr(cfg, name):
            raise ConfigError(f"scan grid {name!r} is empty")
    if any(c <= 0 for c in cfg.couplings):
        raise ConfigError("coupling strengths must be positive")
    if cfg.r_max <= cfg.r_min:
        raise ConfigError("r_max must exceed r_min")
    if cfg.coupling_q not in (-1, 0, 1):
        raise ConfigError("coupling polarization must be -1, 0 or +1")
    if cfg.theta != 0.0:
        raise ConfigError("only theta = 0 (axis along the quantization axis) is supported")
