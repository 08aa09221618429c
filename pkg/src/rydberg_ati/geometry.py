"""Thermal ensemble in a harmonic optical tweezer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .atomic import KB
from .textio import ConfigError

SQRT_PI = math.sqrt(math.pi)


def trap_frequencies(waist: float, depth: float, mass: float, wavelength: float = 1.064):
    """(omega_x, omega_y, omega_z) in rad/s of a Gaussian tweezer.

    waist and wavelength in um, depth in J, mass in kg.
    """
    if not (waist > 0 and depth > 0 and mass > 0):
        raise ConfigError("waist, depth and mass must be positive")
    if not (wavelength > 0 and math.isfinite(wavelength)):
        raise ConfigError(f"trap wavelength must be positive and finite, got {wavelength}")
    w0 = waist * 1e-6
    z_r = math.pi * w0**2 / (wavelength * 1e-6)
    wr = math.sqrt(4 * depth / (mass * w0**2))
    wz = math.sqrt(2 * depth / (mass * z_r**2))
    return wr, wr, wz


@dataclass(frozen=True)
class SampleGeometry:
    """Tweezer and cloud parameters.

    waist (um), depth (uK, as U0 / k_B), temperature (uK), mass (kg),
    trap wavelength (um), atom number.
    """

    waist: float = 2.0
    depth: float = 1000.0
    temperature: float = 50.0
    mass: float = 86.909180527 * 1.66053906660e-27
    wavelength: float = 1.064
    atoms: int = 10

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if not self.depth > 0:
            raise ConfigError("trap depth must be positive")
        if not self.waist > 0:
            raise ConfigError("waist must be positive")
        if self.atoms < 1:
            raise ConfigError("need at least one atom")

    @property
    def frequencies(self):
        return trap_frequencies(self.waist, self.depth * 1e-6 * KB, self.mass, self.wavelength)

    @property
    def sigmas(self):
        return widths(self)

    @property
    def shallow(self) -> bool:
        return self.depth <= self.temperature


def widths(geometry: SampleGeometry):
    """Thermal rms widths (um) per axis."""
    kt = KB * geometry.temperature * 1e-6
    return tuple(math.sqrt(kt / (geometry.mass * w**2)) * 1e6 for w in geometry.frequencies)


def idpd(sigmas, R):
    """Density of the distance between two atoms drawn from the cloud (1/um).

    Anisotropic widths enter through their geometric mean.
    """
    sx, sy, sz = sigmas
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("distance must be non-negative")
    prod = sx * sy * sz
    return R**2 / (2 * SQRT_PI * prod) * np.exp(-(R**2) / (4 * prod ** (2 / 3)))


def idpd_peak(sigmas) -> float:
    """Most probable pair distance."""
    return 2 * float(np.prod(sigmas)) ** (1 / 3)


def peak_density(sigmas, atoms: int) -> float:
    sx, sy, sz = sigmas
    return atoms / ((2 * math.pi) ** 1.5 * sx * sy * sz)


def density(geometry: SampleGeometry, position) -> np.ndarray:
    """Atomic density (1/um^3) at positions of shape (..., 3)."""
    sig = np.asarray(widths(geometry))
    x = np.asarray(position, dtype=float)
    return peak_density(sig, geometry.atoms) * np.exp(-0.5 * np.sum((x / sig) ** 2, axis=-1))


def sample_pair_distances(sigmas, count: int, rng: np.random.Generator) -> np.ndarray:
    """Distances between independent pairs of atoms from the Gaussian cloud."""
    sig = np.asarray(sigmas)
    a = rng.normal(size=(count, 3)) * sig
    b = rng.normal(size=(count, 3)) * sig
    return np.linalg.norm(a - b, axis=1)


def idpd_cdf_isotropic(sigma: float, R):
    """Closed-form CDF of the isotropic pair-distance density."""
    from scipy.special import erf

    x = np.asarray(R, dtype=float) / (2 * sigma)
    return erf(x) - 2 * x / SQRT_PI * np.exp(-(x**2))
