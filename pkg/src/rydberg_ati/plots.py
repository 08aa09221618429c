"""Static figures of a scan bundle (Agg backend, PNG files)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TWO_PI = 2 * math.pi
# fixed metadata keeps reruns byte-identical
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def spectrum_figure(scan, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    s = scan.spectrum
    if s.size:
        order = np.argsort(s[:, 2])
        sc = ax.scatter(s[order, 0], s[order, 1], c=s[order, 2], s=2, cmap="viridis", vmin=0, vmax=1, rasterized=True)
        fig.colorbar(sc, ax=ax, label="intermediate admixture")
    ax.set_xlabel("R (um)")
    ax.set_ylabel("energy (MHz)")
    ax.set_ylim(-60, 60)
    ax.set_title(f"Omega_c = 2pi x {scan.omega_c / TWO_PI:g} MHz")
    return _save(fig, path)


def transfer_figure(bundle, path: Path) -> Path:
    cfg = bundle.config
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    for s in bundle.scans:
        if not any(math.isclose(s.omega_c, c, rel_tol=1e-9) for c in cfg.couplings):
            continue
        d = s.detunings / TWO_PI
        lab = f"{s.omega_c / TWO_PI:g} MHz"
        (line,) = a1.plot(d, s.excited, label=lab)
        a1.plot(d, s.ground, ls=":", color=line.get_color())
        a2.semilogy(d, s.ratio, color=line.get_color(), label=lab)
    a2.axhline(cfg.ratio_target, color="k", lw=0.5)
    a1.set_ylabel("transfer P (dotted: no Rydberg)")
    a2.set_ylabel("transfer ratio")
    a2.set_xlabel("probe detuning (MHz)")
    a1.legend(fontsize=8)
    return _save(fig, path)


def two_level_figure(bundle, path: Path) -> Path:
    fit = bundle.fit
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    tr = fit.trace
    a1.plot(tr.R, tr.energy / TWO_PI, ".", ms=3, label="pair spectrum")
    a1.plot(tr.R, fit.shift(tr.R) / TWO_PI, label=f"C3 = {fit.c3:.2f}, C6 = {fit.c6:.1f}")
    a1.set_yscale("symlog", linthresh=1)
    a1.set_xlabel("R (um)")
    a1.set_ylabel("shift (MHz)")
    a1.legend(fontsize=8)
    for om, (_, _, ratio) in bundle.two_level.items():
        (line,) = a2.semilogy(np.asarray(bundle.config.detunings) / TWO_PI, ratio, ls="--")
        try:
            full = bundle.scan_for(om)
            a2.semilogy(full.detunings / TWO_PI, full.ratio, color=line.get_color(), label=f"{om / TWO_PI:g} MHz")
        except KeyError:
            pass
    a2.set_xlabel("probe detuning (MHz)")
    a2.set_ylabel("ratio (dashed: two-level)")
    a2.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def infidelity_figure(bundle, path: Path) -> Path:
    cfg = bundle.config
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    atoms = [r.atoms for r in bundle.fidelity]
    a1.semilogy(atoms, [1 - r.fidelity for r in bundle.fidelity], "o-")
    a1.set_xscale("log")
    a1.set_xlabel("atoms")
    a1.set_ylabel("infidelity")
    for n, arr in bundle.infidelity_time.items():
        a2.semilogy(cfg.probe_times, arr, label=f"N = {n}")
    a2.set_xlabel("probe time t0 (us)")
    a2.set_ylabel("infidelity")
    a2.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_figures(bundle, out: Path) -> list[Path]:
    from .runner import _tag

    cfg = bundle.config
    paths = []
    for s in bundle.scans:
        if s.spectrum.size and any(math.isclose(s.omega_c, c, rel_tol=1e-9) for c in cfg.couplings):
            paths.append(spectrum_figure(s, out / f"spectrum_{_tag(s.omega_c)}.png"))
    if bundle.scans:
        paths.append(transfer_figure(bundle, out / "transfer.png"))
    if bundle.fit is not None:
        paths.append(two_level_figure(bundle, out / "two_level.png"))
    if bundle.fidelity:
        paths.append(infidelity_figure(bundle, out / "infidelity.png"))
    return paths
