"""Scan orchestration and result persistence.

One coupling strength is one unit of work: it diagonalizes the pair
Hamiltonian on the distance grid, accumulates the probe transfer per
detuning and collects the spectrum rows. Work units fan out to a process
pool; the parent process writes every file.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .fidelity import fidelity_row, infidelity_vs_time
from .geometry import idpd, idpd_peak, widths
from .pair import PairHamiltonian, rydberg_levels
from .probing import (
    QuadratureError,
    channels_from_eigenpairs,
    probe_couplings,
    sample_only_channels,
    sample_transfer,
    transfer_probability,
    weak_probe_check,
)
from .spectrum import DiagonalizationError
from .twolevel import (
    InteractionFit,
    extract_shift_trace,
    default_trace_grid,
    fit_c3c6,
    rydberg_only_hamiltonian,
    two_level_transfer_ratio,
)

TWO_PI = 2 * math.pi
SPECTRUM_MIN_WEIGHT = 1e-3


@dataclass
class CouplingScan:
    """Everything computed for one coupling strength."""

    omega_c: float
    R: np.ndarray
    detunings: np.ndarray
    curve: np.ndarray  # P_tr(R, detuning), averaged over ground sublevels
    excited: np.ndarray  # distance-averaged transfer, control in |r>
    ground: np.ndarray  # sample-only transfer, control in its ground state
    spectrum: np.ndarray  # rows (R, energy MHz, w_intermediate, w_control_r)
    hermiticity: np.ndarray  # per R, max |H - H^T| / max |H|
    normalization: np.ndarray  # per R
    seconds: float = 0.0

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.ground > 0, self.excited / self.ground, np.inf)


@dataclass
class OperatingPoint:
    detuning: float
    transfer: float
    baseline: float
    ratio: float
    rule: str


@dataclass
class ScanBundle:
    config: RunConfig
    scans: list
    fit: InteractionFit | None = None
    two_level: dict = field(default_factory=dict)  # omega_c -> (P, P0, ratio)
    operating: OperatingPoint | None = None
    fidelity: list = field(default_factory=list)
    infidelity_time: dict = field(default_factory=dict)  # atoms -> array over cfg.probe_times
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def scan_for(self, omega_c: float) -> CouplingScan:
        for s in self.scans:
            if math.isclose(s.omega_c, omega_c, rel_tol=1e-9):
                return s
        raise KeyError(f"no scan at {omega_c / TWO_PI:g} MHz")


# --- one coupling strength ---------------------------------------------------


def scan_coupling(cfg: RunConfig, omega_c: float, spectrum: bool = True) -> CouplingScan:
    """Distance scan and sample transfer for one coupling strength."""
    t_start = time.perf_counter()
    species = cfg.species()
    basis = cfg.basis(species)
    fld = cfg.coupling(omega_c)
    ham = PairHamiltonian(basis, fld, species, cfg.frame(), cfg.theta)
    probe = cfg.probe
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        weak_probe_check(probe, omega_c)
    couplings = probe_couplings(basis, species, probe)
    det = np.asarray(cfg.detunings, dtype=float)
    gamma = species.linewidth
    b = species.branching_ratio

    ns = basis.n_sample
    e_mask = basis.is_intermediate
    ctl_mask = np.array([c.level == tuple(cfg.control_level) for c in basis.control])
    control_sublevels = int(ctl_mask.sum()) if cfg.control_states == "average" else 1
    R = cfg.distance_grid()
    curve = np.empty((R.size, det.size))
    herm = np.zeros(R.size)
    norm = np.zeros(R.size)
    rows = []
    cache = None
    for a, r in enumerate(R):
        reff = max(float(r), cfg.r0)
        if cache is not None and cache[0] == reff:
            curve[a], herm[a], norm[a] = cache[1]
            if spectrum:
                rows.append(np.column_stack([np.full(len(cache[2]), r), cache[2][:, 1:]]))
            continue
        eig = []
        h_def = n_def = 0.0
        for ix, hb in ham.blocks(reff):
            # relative to the largest element: entries span GHz-scale pair energies
            h_def = max(h_def, float(np.max(np.abs(hb - hb.T)) / max(np.max(np.abs(hb)), 1e-300)))
            try:
                w, v = np.linalg.eigh(hb)
            except np.linalg.LinAlgError as exc:
                raise DiagonalizationError(str(exc), r) from exc
            if not np.all(np.isfinite(w)):
                raise DiagonalizationError("non-finite eigenvalues", r)
            # both sums of |a|^2: over basis states and over eigenstates
            eye = np.eye(v.shape[1])
            n_def = max(n_def, float(np.max(np.abs(v.T @ v - eye))), float(np.max(np.abs(v @ v.T - eye))))
            eig.append((ix, w, v))
            if spectrum:
                ci, ki = np.divmod(ix, ns)
                w_e = (v[e_mask[ki]] ** 2).sum(axis=0)
                w_c = (v[ctl_mask[ci]] ** 2).sum(axis=0)
                sel = w_e >= SPECTRUM_MIN_WEIGHT
                rows.append(np.column_stack([np.full(sel.sum(), r), w[sel] / TWO_PI, w_e[sel], w_c[sel]]))
        ch = channels_from_eigenpairs(eig, basis, couplings, cfg.weighting)
        # "sum" adds every eigenstate as written, so each control m_j sublevel
        # contributes a copy; "average" treats the control as unpolarized and
        # recovers the sample-only rate at large R
        rates = ch.rates(det, gamma) / control_sublevels
        p = transfer_probability(rates, probe.duration, b).mean(axis=0)
        curve[a], herm[a], norm[a] = p, h_def, n_def
        if spectrum:
            cache = (reff, (p, h_def, n_def), np.concatenate(rows[-len(eig):]) if rows else np.zeros((0, 4)))
        else:
            cache = (reff, (p, h_def, n_def), None)

    ch0 = sample_only_channels(basis, fld, species, couplings, cfg.frame())
    ground = transfer_probability(ch0.rates(det, gamma), probe.duration, b).mean(axis=0)
    sig = widths(cfg.geometry)
    excited = sample_transfer((R, curve), lambda x: idpd(sig, x), idpd_peak(sig), r0=cfg.r0)
    spec = np.concatenate(rows) if rows else np.zeros((0, 4))
    return CouplingScan(omega_c, R, det, curve, np.asarray(excited), ground, spec, herm, norm, time.perf_counter() - t_start)


# --- analysis -----------------------------------------------------------------


def operating_point(scan: CouplingScan, target: float = 20.0) -> OperatingPoint:
    """Point where the ratio crosses ``target`` with the largest transfer.

    Crossings are located by linear interpolation between detuning grid
    points. If the ratio never reaches ``target`` the ratio maximum is used.
    """
    det, P, P0, Rt = scan.detunings, scan.excited, scan.ground, scan.ratio
    best = None
    diff = Rt - target
    for i in range(det.size - 1):
        d0, d1 = diff[i], diff[i + 1]
        if not (np.isfinite(d0) and np.isfinite(d1)):
            continue
        if d0 == 0 or d0 * d1 < 0:
            f = 0.0 if d0 == 0 else d0 / (d0 - d1)
            pt = OperatingPoint(
                det[i] + f * (det[i + 1] - det[i]),
                P[i] + f * (P[i + 1] - P[i]),
                P0[i] + f * (P0[i + 1] - P0[i]),
                target,
                "ratio crossing",
            )
            if best is None or pt.transfer > best.transfer:
                best = pt
    if diff[-1] == 0 and (best is None or P[-1] > best.transfer):
        best = OperatingPoint(det[-1], P[-1], P0[-1], target, "ratio crossing")
    if best is None:
        k = int(np.nanargmax(np.where(np.isfinite(Rt), Rt, -np.inf)))
        best = OperatingPoint(det[k], P[k], P0[k], Rt[k], "ratio maximum")
    return best


def line_half_widths(detunings, values):
    """(negative, positive, clipped) half widths of a line about its maximum.

    Each side runs from the peak to the first half-maximum crossing, located
    by linear interpolation. A side that never drops below half maximum
    inside the grid is measured to the grid edge and flagged in ``clipped``.
    """
    d = np.asarray(detunings, float)
    v = np.asarray(values, float)
    k = int(np.argmax(v))
    half = 0.5 * v[k]
    clipped = [False, False]

    def walk(step, side):
        i = k
        while 0 <= i + step < d.size:
            j = i + step
            if v[j] < half:
                f = (v[i] - half) / (v[i] - v[j])
                return abs(d[i] + f * (d[j] - d[i]) - d[k])
            i = j
        clipped[side] = True
        return abs(d[i] - d[k])

    neg = walk(-1, 0)
    pos = walk(+1, 1)
    return neg, pos, tuple(clipped)


def fit_interaction(cfg: RunConfig) -> InteractionFit:
    species = cfg.species()
    ham = rydberg_only_hamiltonian(species, rydberg_levels(cfg.rydberg_n, cfg.l_max), cfg.control_level, cfg.coupling_target)
    trace = extract_shift_trace(ham, default_trace_grid(), (tuple(cfg.coupling_target), tuple(cfg.control_level)))
    return fit_c3c6(trace)


def two_level_report(cfg: RunConfig, fit: InteractionFit) -> dict:
    species = cfg.species()
    sig = widths(cfg.geometry)
    return {
        om: two_level_transfer_ratio(fit, om, cfg.detunings, cfg.probe, species, sig, cfg.r0)
        for om in cfg.couplings
    }


def fidelity_report(cfg: RunConfig, point: OperatingPoint):
    fcfg = cfg.fidelity_for(cfg.species())
    rows = [fidelity_row(fcfg, point.transfer, point.baseline, n) for n in cfg.atoms]
    times = {n: infidelity_vs_time(fcfg, point.transfer, point.baseline, n, cfg.probe_times) for n in cfg.atoms}
    return rows, times


# --- orchestration ---------------------------------------------------------------


def _scan_job(args):
    cfg, omega_c, spectrum = args
    try:
        return scan_coupling(cfg, omega_c, spectrum), None
    except (DiagonalizationError, QuadratureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        where = getattr(exc, "R", None)
        return None, {"omega_c_MHz": omega_c / TWO_PI, "R_um": where, "error": f"{type(exc).__name__}: {exc}"}


def run_scans(cfg: RunConfig, couplings=None, spectrum: bool = True, workers: int | None = None):
    """Scan each coupling strength; returns (scans, failures) in input order."""
    couplings = list(cfg.couplings if couplings is None else couplings)
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, om, spectrum) for om in couplings]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_scan_job, jobs))
    else:
        results = [_scan_job(j) for j in jobs]
    scans = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    return scans, failures


def compute_bundle(cfg: RunConfig, spectrum: bool = True, two_level: bool = True, fidelity: bool = True) -> ScanBundle:
    timings = {}
    t = time.perf_counter()
    couplings = list(cfg.couplings)
    extra = not any(math.isclose(cfg.fidelity_coupling, c, rel_tol=1e-9) for c in couplings)
    scans, failures = run_scans(cfg, couplings + ([cfg.fidelity_coupling] if fidelity and extra else []), spectrum)
    timings["scan_s"] = time.perf_counter() - t
    bundle = ScanBundle(cfg, scans, failures=failures, timings=timings)
    if two_level:
        t = time.perf_counter()
        try:
            bundle.fit = fit_interaction(cfg)
            bundle.two_level = two_level_report(cfg, bundle.fit)
        except (RuntimeError, ValueError) as exc:
            failures.append({"stage": "two-level", "error": f"{type(exc).__name__}: {exc}"})
        timings["two_level_s"] = time.perf_counter() - t
    if fidelity:
        t = time.perf_counter()
        try:
            bundle.operating = operating_point(bundle.scan_for(cfg.fidelity_coupling), cfg.ratio_target)
            bundle.fidelity, bundle.infidelity_time = fidelity_report(cfg, bundle.operating)
        except (KeyError, ValueError) as exc:
            failures.append({"stage": "fidelity", "error": f"{type(exc).__name__}: {exc}"})
        timings["fidelity_s"] = time.perf_counter() - t
    return bundle


# --- persistence -----------------------------------------------------------------


def _header(cfg: RunConfig, title: str, extra: dict | None = None) -> str:
    g = cfg.geometry
    lines = [
        f"# {title}",
        f"# config_sha256 = {cfg.digest()}",
        f"# probe: Omega_p = {cfg.probe.omega / TWO_PI:g} MHz, q_p = {cfg.probe.q:+d}, t_p = {cfg.probe.duration:g} us, weighting = {cfg.weighting}, control states = {cfg.control_states}",
        f"# coupling: q_c = {cfg.coupling_q:+d}, delta_c = {cfg.coupling_detuning / TWO_PI:g} MHz",
        f"# trap: waist = {g.waist:g} um, depth = {g.depth:g} uK, T = {g.temperature:g} uK, lambda = {g.wavelength:g} um; r0 = {cfg.r0:g} um",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    return "\n".join(lines) + "\n"


def _write_table(path: Path, header: str, columns: list[str], rows, fmt: str = "%.10e") -> None:
    rows = np.asarray(rows, dtype=float)
    with open(path, "w") as fh:
        fh.write(header)
        fh.write("\t".join(columns) + "\n")
        if rows.size:
            np.savetxt(fh, rows.reshape(len(rows), -1), fmt=fmt, delimiter="\t")


def _tag(omega_c: float) -> str:
    return f"{omega_c / TWO_PI:g}MHz".replace(".", "p")


def write_bundle(bundle: ScanBundle, out: Path, figures: bool = True) -> dict:
    """Write tables, figures and the manifest; returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = bundle.config
    written: list[Path] = []

    for s in bundle.scans:
        if not any(math.isclose(s.omega_c, c, rel_tol=1e-9) for c in cfg.couplings):
            continue
        if s.spectrum.size:
            p = out / f"spectrum_{_tag(s.omega_c)}.tsv"
            _write_table(
                p,
                _header(cfg, "pair spectrum vs distance", {
                    "Omega_c_MHz": f"{s.omega_c / TWO_PI:g}",
                    "energies": "MHz (cyclic), rotating frame",
                    "rows": f"eigenstates with intermediate admixture >= {SPECTRUM_MIN_WEIGHT:g}",
                }),
                ["R_um", "energy_MHz", "w_intermediate", "w_control_rydberg"],
                s.spectrum,
                fmt=["%.6f", "%.6f", "%.6e", "%.6e"],
            )
            written.append(p)

    rows = []
    for s in bundle.scans:
        if not any(math.isclose(s.omega_c, c, rel_tol=1e-9) for c in cfg.couplings):
            continue
        for d, a, g, r in zip(s.detunings, s.excited, s.ground, s.ratio):
            rows.append((s.omega_c / TWO_PI, d / TWO_PI, a, g, r))
    if rows:
        p = out / "transfer.tsv"
        _write_table(p, _header(cfg, "distance-averaged sample transfer and transfer ratio", {"detunings": "MHz (cyclic)"}),
                     ["Omega_c_MHz", "detuning_MHz", "P", "P_noRyd", "ratio"], rows)
        written.append(p)

    if bundle.fit is not None:
        fit = bundle.fit
        meta = {
            "C3_MHz_um3": f"{fit.c3:.6f}",
            "C6_MHz_um6": f"{fit.c6:.6f}",
            "C3_window_um": f"{fit.window3}",
            "C6_window_um": f"{fit.window6}",
            "C3_relative_residual": f"{fit.residual3:.4g}",
            "C6_relative_residual": f"{fit.residual6:.4g}",
        }
        tr = fit.trace
        p = out / "two_level_shift.tsv"
        _write_table(p, _header(cfg, "Rydberg pair shift and interaction fit", meta),
                     ["R_um", "shift_MHz", "target_admixture", "fit_MHz"],
                     np.column_stack([tr.R, tr.energy / TWO_PI, tr.admixture, fit.shift(tr.R) / TWO_PI]))
        written.append(p)
        rows = []
        for om, (P, P0, Rt) in bundle.two_level.items():
            for d, a, g, r in zip(cfg.detunings, P, P0, Rt):
                rows.append((om / TWO_PI, d / TWO_PI, a, g, r))
        if rows:
            p = out / "two_level_transfer.tsv"
            _write_table(p, _header(cfg, "two-level transfer and ratio", meta),
                         ["Omega_c_MHz", "detuning_MHz", "P_2lvl", "P_noRyd_2lvl", "ratio_2lvl"], rows)
            written.append(p)

    if bundle.operating is not None:
        op = bundle.operating
        fcfg = cfg.fidelity_for(cfg.species())
        meta = {
            "Omega_c_MHz": f"{cfg.fidelity_coupling / TWO_PI:g}",
            "operating_point": f"{op.rule}, detuning {op.detuning / TWO_PI:.4f} MHz, P = {op.transfer:.6f}, P_noRyd = {op.baseline:.6f}, ratio = {op.ratio:.4f}",
            "photons_per_atom": f"{fcfg.photons_per_atom:g}",
            "background": f"{fcfg.background:g}",
            "lifetime_us": f"{fcfg.lifetime:g}",
            "histogram": fcfg.histogram,
        }
        p = out / "fidelity_table.tsv"
        _write_table(p, _header(cfg, f"detection fidelity at t0 = {fcfg.probe_time:g} us", meta),
                     ["atoms", "threshold", "P_rr", "P_gg", "fidelity", "infidelity", "overlap", "one_minus_overlap"],
                     [(r.atoms, r.detection.threshold, r.detection.p_rr, r.detection.p_gg, r.fidelity, 1 - r.fidelity, r.overlap, 1 - r.overlap)
                      for r in bundle.fidelity])
        written.append(p)
        rows = [(n, t, v) for n, arr in bundle.infidelity_time.items() for t, v in zip(cfg.probe_times, arr)]
        p = out / "infidelity_time.tsv"
        _write_table(p, _header(cfg, "infidelity vs probe time", meta), ["atoms", "t0_us", "infidelity"], rows)
        written.append(p)

    if figures:
        from .plots import render_figures

        written.extend(render_figures(bundle, out))

    manifest = build_manifest(bundle, out, written)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import numpy
    import scipy

    out = {"rydberg_ati": __version__, "python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__}
    try:
        import matplotlib

        out["matplotlib"] = matplotlib.__version__
    except ImportError:
        pass
    return out


def build_manifest(bundle: ScanBundle, out: Path, files) -> dict:
    cfg = bundle.config
    return {
        "config_sha256": cfg.digest(),
        "config": json.loads(json.dumps(cfg.as_dict(), default=repr)),
        "versions": versions(),
        "files": {p.name: _sha256(p) for p in sorted(files)},
        "failures": bundle.failures,
    }
