"""Diagonalization of the pair Hamiltonian over internuclear distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pair import HamiltonianTerm, PairBasis, PairHamiltonian

DEFAULT_R0 = 0.2


class NonHermitianError(ValueError):
    pass


class DiagonalizationError(RuntimeError):
    def __init__(self, message, R=None):
        super().__init__(message if R is None else f"R = {R:g} um: {message}")
        self.R = R


@dataclass
class EigenDecomposition:
    """Eigenenergies and the coefficient matrix A[i, k, phi]."""

    energies: np.ndarray
    coefficients: np.ndarray
    basis: PairBasis | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.energies)

    def vectors(self) -> np.ndarray:
        nc, ns, n = self.coefficients.shape
        return self.coefficients.reshape(nc * ns, n)

    def admixture(self, phi: int) -> np.ndarray:
        return self.coefficients[:, :, phi]

    def normalization_defect(self) -> float:
        """Largest deviation of either admixture sum from one."""
        w = np.abs(self.vectors()) ** 2
        return float(max(np.abs(w.sum(axis=0) - 1).max(), np.abs(w.sum(axis=1) - 1).max()))


def diagonalize(H, basis: PairBasis | None = None, tol: float = 1e-10) -> EigenDecomposition:
    """Full eigendecomposition of a Hermitian matrix or HamiltonianTerm."""
    if isinstance(H, HamiltonianTerm):
        basis = H.basis
        H = H.matrix
    H = np.asarray(H)
    scale = max(np.abs(H).max(), 1e-300)
    if np.abs(H - H.conj().T).max() > tol * scale:
        raise NonHermitianError("matrix is not Hermitian within tolerance")
    try:
        w, v = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(str(exc)) from exc
    nc, ns = (basis.n_control, basis.n_sample) if basis is not None else (1, len(w))
    return EigenDecomposition(w, v.reshape(nc, ns, len(w)), basis)


def diagonalize_blocks(blocks, basis: PairBasis) -> EigenDecomposition:
    """Assemble a full decomposition from (indices, block matrix) pairs."""
    n = basis.dim
    energies = np.empty(n)
    vecs = np.zeros((n, n), dtype=float)
    col = 0
    for ix, hb in blocks:
        w, v = np.linalg.eigh(hb)
        m = len(ix)
        energies[col : col + m] = w
        vecs[np.ix_(ix, np.arange(col, col + m))] = v
        col += m
    order = np.argsort(energies, kind="stable")
    return EigenDecomposition(energies[order], vecs[:, order].reshape(basis.n_control, basis.n_sample, n), basis)


def default_grid(r_min: float = DEFAULT_R0, r_max: float = 10.0, points: int = 240) -> np.ndarray:
    """Log-spaced distances, denser at short range where the spectrum is busy."""
    return np.geomspace(r_min, r_max, points)


def admixture_weights(basis: PairBasis, vectors: np.ndarray, control_level=(39, 0, 0.5)) -> dict:
    """Weights of named base-state groups in each eigenvector (columns)."""
    w = np.abs(vectors) ** 2
    nc, ns = basis.n_control, basis.n_sample
    w = w.reshape(nc, ns, -1)
    ctl = np.array([c.level == tuple(control_level) for c in basis.control])
    return {
        "intermediate": w[:, basis.is_intermediate, :].sum(axis=(0, 1)),
        "control_r": w[ctl].sum(axis=(0, 1)),
    }


@dataclass
class SpectrumGrid:
    """Spectra on an R grid.

    Energies and a few admixture weights are stored for every point. Full
    coefficient arrays are large (dim^2 per point), so they are kept only on
    request and otherwise recomputed deterministically by ``decomposition``.
    """

    R: np.ndarray
    r0: float
    energies: np.ndarray
    weights: dict
    hamiltonian: PairHamiltonian = field(repr=False)
    stored: list | None = field(default=None, repr=False)

    def decomposition(self, index: int) -> EigenDecomposition:
        if self.stored is not None:
            return self.stored[index]
        R = max(float(self.R[index]), self.r0)
        return diagonalize_blocks(self.hamiltonian.blocks(R), self.hamiltonian.basis)


def scan_distance(ham: PairHamiltonian, grid, r0: float = DEFAULT_R0, keep: bool = False, control_level=None) -> SpectrumGrid:
    """Diagonalize at every R of ``grid``; points below r0 reuse the r0 result."""
    R = np.asarray(grid, dtype=float)
    if R.size == 0:
        raise ValueError("empty distance grid")
    if np.any(R <= 0):
        raise ValueError("distances must be positive")
    if not np.all(np.diff(R) > 0):
        raise ValueError("distance grid must be strictly ascending")
    control_level = control_level or ham.ref.control
    energies, weights, stored = [], {}, [] if keep else None
    cache = None
    for r in R:
        reff = max(r, r0)
        if cache is not None and cache[0] == reff:
            dec = cache[1]
        else:
            try:
                dec = diagonalize_blocks(ham.blocks(reff), ham.basis)
            except (np.linalg.LinAlgError, DiagonalizationError) as exc:
                raise DiagonalizationError(str(exc), r) from exc
            if not np.all(np.isfinite(dec.energies)):
                raise DiagonalizationError("non-finite eigenvalues", r)
            cache = (reff, dec)
        energies.append(dec.energies)
        for k, v in admixture_weights(ham.basis, dec.vectors(), control_level).items():
            weights.setdefault(k, []).append(v)
        if keep:
            stored.append(dec)
    return SpectrumGrid(
        R, r0, np.array(energies), {k: np.array(v) for k, v in weights.items()}, ham, stored
    )


def write_spectrum(grid: SpectrumGrid, path, min_weight: float = 1e-3, weight_key: str = "intermediate", header: dict | None = None) -> int:
    """Delimited export: R, eigen index, energy (MHz), admixture weights.

    Rows whose ``weight_key`` admixture is below ``min_weight`` are skipped.
    Returns the number of rows written.
    """
    keys = sorted(grid.weights)
    rows = 0
    with open(path, "w") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k} = {v}\n")
        fh.write(f"# r0 = {grid.r0} um; energies in MHz (cyclic); rows with {weight_key} < {min_weight} omitted\n")
        fh.write("R_um\tindex\tenergy_MHz\t" + "\t".join(f"w_{k}" for k in keys) + "\n")
        for a, r in enumerate(grid.R):
            sel = np.flatnonzero(grid.weights[weight_key][a] >= min_weight)
            for p in sel:
                vals = "\t".join(f"{grid.weights[k][a, p]:.6e}" for k in keys)
                fh.write(f"{r:.6f}\t{p}\t{grid.energies[a, p] / (2 * math.pi):.6f}\t{vals}\n")
                rows += 1
    return rows
