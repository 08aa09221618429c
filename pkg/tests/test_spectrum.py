import math

import numpy as np
import pytest

from rydberg_ati.spectrum import (
    NonHermitianError,
    admixture_weights,
    diagonalize,
    diagonalize_blocks,
    scan_distance,
    write_spectrum,
)

TWO_PI = 2 * math.pi


def test_block_and_full_decompositions_agree(small_ham, small_basis):
    R = 0.8
    full = diagonalize(small_ham.term(R))
    blk = diagonalize_blocks(small_ham.blocks(R), small_basis)
    assert np.allclose(full.energies, blk.energies, rtol=0, atol=1e-9 * np.abs(full.energies).max())
    assert blk.normalization_defect() < 1e-10
    assert full.normalization_defect() < 1e-10


def test_eigenvectors_solve_the_hamiltonian(small_ham, small_basis):
    R = 1.5
    dec = diagonalize_blocks(small_ham.blocks(R), small_basis)
    H = small_ham.matrix(R)
    V = dec.vectors()
    resid = H @ V - V * dec.energies
    assert np.max(np.abs(resid)) < 1e-9 * np.max(np.abs(H))


def test_non_hermitian_rejected():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NonHermitianError):
        diagonalize(a)


def test_scan_validation(small_ham):
    with pytest.raises(ValueError):
        scan_distance(small_ham, [])
    with pytest.raises(ValueError):
        scan_distance(small_ham, [1.0, 0.5])
    with pytest.raises(ValueError):
        scan_distance(small_ham, [-1.0, 1.0])


def test_scan_clamps_below_r0(small_ham):
    g = scan_distance(small_ham, [0.05, 0.1, 0.2, 1.0], r0=0.2)
    assert np.array_equal(g.energies[0], g.energies[2])
    assert np.array_equal(g.energies[1], g.energies[2])
    assert not np.allclose(g.energies[3], g.energies[2])


def test_scan_weights_and_export(small_ham, tmp_path):
    g = scan_distance(small_ham, [0.5, 2.0, 6.0])
    w = g.weights["intermediate"]
    assert w.shape == g.energies.shape
    # total intermediate weight equals the number of intermediate basis states
    n_e = small_ham.basis.n_control * int(small_ham.basis.is_intermediate.sum())
    assert np.allclose(w.sum(axis=1), n_e)
    rows = write_spectrum(g, tmp_path / "s.tsv", min_weight=1e-3, header={"Omega_c": "31 MHz"})
    text = (tmp_path / "s.tsv").read_text().splitlines()
    assert text[0].startswith("# Omega_c")
    assert len([t for t in text if not t.startswith("#")]) == rows + 1
    assert rows == int((w >= 1e-3).sum())


def test_stored_and_recomputed_decompositions_match(small_ham):
    g1 = scan_distance(small_ham, [0.7, 3.0], keep=True)
    g2 = scan_distance(small_ham, [0.7, 3.0])
    assert np.allclose(g1.decomposition(1).energies, g2.decomposition(1).energies)


def test_admixture_weights_sum_to_one(small_ham, small_basis):
    dec = diagonalize_blocks(small_ham.blocks(1.0), small_basis)
    w = admixture_weights(small_basis, dec.vectors())
    assert np.all((w["intermediate"] >= -1e-15) & (w["intermediate"] <= 1 + 1e-12))
    assert np.all((w["control_r"] >= -1e-15) & (w["control_r"] <= 1 + 1e-12))
