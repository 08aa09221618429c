"""Detection fidelity from compound Poisson photon statistics.

A sample transfer probability P measured over the probe time t_p is turned
into an effective per-atom scattering rate. The control atom may decay at a
random time t_d during the probe window t0, after which the sample scatters
at the control-ground rate. Transferred atoms are counted by fluorescence
with n_ph photons each on top of a Poisson background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .textio import ConfigError

HISTOGRAM_MODES = ("zero-transfer", "additive", "convolution")


@dataclass(frozen=True)
class FidelityConfig:
    """Photon-counting and timing parameters.

    ``histogram`` selects how background enters: ``zero-transfer`` adds it only to
    the zero-transfer outcome, ``additive`` adds a full background
    distribution and renormalizes, ``convolution`` adds background photons
    to every outcome.
    """

    photons_per_atom: float = 10.0
    background: float = 5.0
    lifetime: float = 32.27  # us
    probe_time: float = 15.0  # t0, us
    transfer_time: float = 15.0  # t_p at which P was computed, us
    branching: float = 0.5
    time_step: float | None = None  # us; None -> 5 ns below 10 us, else 25 ns
    histogram: str = "zero-transfer"
    tail: float = 1e-9

    def __post_init__(self):
        for name in ("photons_per_atom", "background", "probe_time", "transfer_time"):
            if not getattr(self, name) >= 0 or not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite and non-negative")
        if not self.lifetime >= 0:
            raise ConfigError("lifetime must be non-negative (inf for a stable control state)")
        if self.probe_time <= 0 or self.transfer_time <= 0:
            raise ConfigError("probe times must be positive")
        if not 0 < self.branching < 1:
            raise ConfigError("branching ratio must lie in (0, 1)")
        if self.histogram not in HISTOGRAM_MODES:
            raise ConfigError(f"histogram mode must be one of {HISTOGRAM_MODES}")

    @property
    def step(self) -> float:
        if self.time_step is not None:
            return self.time_step
        return 0.005 if self.probe_time < 10.0 else 0.025


def effective_rate(transfer: float, duration: float, branching: float) -> float:
    """Per-atom scattering rate (1/us) that produces ``transfer`` in ``duration``."""
    if not 0 <= transfer <= 1:
        raise ValueError(f"transfer probability {transfer} outside [0, 1]")
    if transfer >= 1:
        raise ValueError("transfer probability 1 needs an infinite rate")
    return math.log1p(-transfer) / (duration * math.log1p(-branching))


def transfer_from_scatters(n, branching: float):
    return -np.expm1(np.asarray(n, dtype=float) * math.log1p(-branching))


def photons_scattered(t0: float, td, rate_excited: float, rate_ground: float, prepared: str = "excited"):
    """Expected scattering events per sample atom in a probe window t0."""
    td = np.asarray(td, dtype=float)
    if np.any(td < 0) or np.any(td > t0 * (1 + 1e-12)):
        raise ValueError("decay time must lie in [0, t0]")
    if prepared == "ground":
        return np.full_like(td, rate_ground * t0)
    if prepared != "excited":
        raise ValueError(f"unknown preparation {prepared!r}")
    return rate_excited * td + rate_ground * (t0 - td)


def atom_transfer_distribution(transfer: float, atoms: int, tail: float = 1e-12):
    """Poisson distribution of transferred atoms: (counts, pmf)."""
    if atoms < 1:
        raise ValueError("need at least one atom")
    mu = atoms * transfer
    n_max = int(poisson.isf(tail, mu)) + 1 if mu > 0 else 0
    k = np.arange(n_max + 1)
    return k, poisson.pmf(k, mu) if mu > 0 else (k == 0).astype(float)


@dataclass
class PhotonHistogram:
    pmf: np.ndarray
    preparation: str
    meta: dict = field(default_factory=dict)

    @property
    def counts(self) -> np.ndarray:
        return np.arange(self.pmf.size)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def mean(self) -> float:
        return float(np.dot(self.counts, self.pmf))


class _Kernel:
    """Photon-count pmf per transferred-atom number, shared across t_d."""

    def __init__(self, cfg: FidelityConfig, max_atoms: int):
        self.cfg = cfg
        top = max_atoms * cfg.photons_per_atom + cfg.background
        self.n_max = int(poisson.isf(cfg.tail, max(top, 1e-9))) + 2
        n = np.arange(self.n_max + 1)
        k = np.arange(max_atoms + 1)[:, None]
        if cfg.histogram == "convolution":
            self.matrix = poisson.pmf(n[None, :], k * cfg.photons_per_atom + cfg.background)
        else:
            mean = k * cfg.photons_per_atom
            self.matrix = np.where(mean > 0, poisson.pmf(n[None, :], np.maximum(mean, 1e-300)), (n[None, :] == 0).astype(float))
        self.background = poisson.pmf(n, cfg.background)

    def mix(self, atom_weights: np.ndarray) -> np.ndarray:
        """Histogram for a (possibly pre-averaged) transferred-atom pmf.

        Linear in the weights, so decay averaging can happen before this step.
        """
        w = atom_weights
        if self.cfg.histogram == "convolution":
            return w @ self.matrix
        signal = w[1:] @ self.matrix[1:]
        if self.cfg.histogram == "zero-transfer":
            return signal + w[0] * self.background
        return signal + self.background  # additive, normalized by caller


def _atom_weights(transfers, atoms: int, size: int) -> np.ndarray:
    mu = np.atleast_1d(np.asarray(transfers, dtype=float)) * atoms
    k = np.arange(size)
    return poisson.pmf(k[None, :], np.maximum(mu[:, None], 1e-300)) * (mu[:, None] > 0) + (mu[:, None] <= 0) * (k[None, :] == 0)


def _support(transfer_max: float, atoms: int, tail: float) -> int:
    mu = atoms * transfer_max
    return int(poisson.isf(tail * 1e-3, mu)) + 2 if mu > 0 else 1


def photon_histogram(transfer: float, atoms: int, cfg: FidelityConfig, preparation: str = "excited") -> PhotonHistogram:
    """Photon histogram for a fixed transfer probability."""
    size = _support(transfer, atoms, cfg.tail)
    kern = _Kernel(cfg, size - 1)
    w = _atom_weights(transfer, atoms, size)[0]
    h = kern.mix(w)
    if cfg.histogram == "additive":
        h = h / (2.0 - w[0])
    return PhotonHistogram(h, preparation, {"transfer": transfer, "atoms": atoms})


def decay_weight(t, t0: float, lifetime: float):
    """Exponential decay density for t < t0; the survival mass sits at t = t0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    if math.isinf(lifetime):
        return np.where(np.isclose(t, t0), 1.0, 0.0)
    dens = np.exp(-t / lifetime) / lifetime
    return np.where(t < t0, dens, np.where(np.isclose(t, t0), math.exp(-t0 / lifetime), 0.0))


def decay_grid(t0: float, lifetime: float, step: float):
    """Decay times and their probabilities, last entry the survival mass at t0.

    Each cell gets the exact exponential mass it contains, evaluated at the
    cell midpoint, so the weights sum to one.
    """
    cells = max(1, int(math.ceil(t0 / step - 1e-9)))
    edges = np.linspace(0.0, t0, cells + 1)
    if lifetime == 0:
        return np.array([0.0, t0]), np.array([1.0, 0.0])
    if math.isinf(lifetime):
        return np.array([t0]), np.array([1.0])
    surv = np.exp(-edges / lifetime)
    w = surv[:-1] - surv[1:]
    mids = 0.5 * (edges[:-1] + edges[1:])
    return np.r_[mids, t0], np.r_[w, surv[-1]]


@dataclass
class DetectionResult:
    threshold: int
    p_rr: float
    p_rg: float
    p_gr: float
    p_gg: float
    error_sum: float

    @property
    def fidelity(self) -> float:
        return average_fidelity(self)


def weighted_histogram(cfg: FidelityConfig, transfer_excited: float, transfer_ground: float, atoms: int) -> PhotonHistogram:
    """Excited-preparation histogram averaged over the control decay time."""
    r_e = effective_rate(transfer_excited, cfg.transfer_time, cfg.branching)
    r_g = effective_rate(transfer_ground, cfg.transfer_time, cfg.branching)
    times, weights = decay_grid(cfg.probe_time, cfg.lifetime, cfg.step)
    n_sc = photons_scattered(cfg.probe_time, np.minimum(times, cfg.probe_time), r_e, r_g)
    p = transfer_from_scatters(n_sc, cfg.branching)
    size = _support(float(p.max()), atoms, cfg.tail)
    aw = _atom_weights(p, atoms, size)
    kern = _Kernel(cfg, size - 1)
    if cfg.histogram == "additive":
        # each t_d histogram is renormalized by 1 / (2 - w0) before averaging
        scale = weights / (2.0 - aw[:, 0])
        h = (scale @ aw)[1:] @ kern.matrix[1:] + scale.sum() * kern.background
    else:
        h = kern.mix(weights @ aw)
    return PhotonHistogram(h, "excited", {"atoms": atoms, "t0": cfg.probe_time})


def ground_histogram(cfg: FidelityConfig, transfer_ground: float, atoms: int) -> PhotonHistogram:
    r_g = effective_rate(transfer_ground, cfg.transfer_time, cfg.branching)
    p = float(transfer_from_scatters(r_g * cfg.probe_time, cfg.branching))
    hist = photon_histogram(p, atoms, cfg, "ground")
    hist.meta["t0"] = cfg.probe_time
    return hist


def _pad(a: np.ndarray, b: np.ndarray):
    n = max(a.size, b.size)
    return np.pad(a, (0, n - a.size)), np.pad(b, (0, n - b.size))


def overlap_fidelity(excited: PhotonHistogram, ground: PhotonHistogram) -> float:
    """Bhattacharyya overlap of the two photon distributions."""
    a, b = _pad(excited.pmf, ground.pmf)
    return float(np.sum(np.sqrt(np.clip(a, 0, None) * np.clip(b, 0, None))))


def optimal_threshold(excited: PhotonHistogram, ground: PhotonHistogram) -> DetectionResult:
    """Threshold minimizing sum_{n<=n_th} N_exc + sum_{n>=n_th} N_gnd.

    Ties go to the smaller threshold. Reported probabilities use
    n > n_th as "excited" and n < n_th as "ground".
    """
    a, b = _pad(excited.pmf, ground.pmf)
    ca = np.cumsum(a)
    below_b = np.concatenate([[0.0], np.cumsum(b)[:-1]])
    err = ca + (b.sum() - below_b)
    k = int(np.argmin(err))
    p_rr = float(a.sum() - ca[k])
    p_gg = float(below_b[k])
    return DetectionResult(k, p_rr, 1.0 - p_rr, 1.0 - p_gg, p_gg, float(err[k]))


def average_fidelity(result) -> float:
    return 0.5 * (result.p_rr + result.p_gg)


@dataclass
class FidelityRow:
    atoms: int
    detection: DetectionResult
    overlap: float
    transfer_excited: float
    transfer_ground: float

    @property
    def fidelity(self) -> float:
        return self.detection.fidelity


def fidelity_row(cfg: FidelityConfig, transfer_excited: float, transfer_ground: float, atoms: int) -> FidelityRow:
    he = weighted_histogram(cfg, transfer_excited, transfer_ground, atoms)
    hg = ground_histogram(cfg, transfer_ground, atoms)
    return FidelityRow(atoms, optimal_threshold(he, hg), overlap_fidelity(he, hg), transfer_excited, transfer_ground)


def infidelity_vs_time(cfg: FidelityConfig, transfer_excited: float, transfer_ground: float, atoms: int, times) -> np.ndarray:
    from dataclasses import replace

    return np.array([1.0 - fidelity_row(replace(cfg, probe_time=float(t)), transfer_excited, transfer_ground, atoms).fidelity for t in times])


# --- Monte Carlo --------------------------------------------------------------


def simulate_counts(cfg: FidelityConfig, transfer_excited: float, transfer_ground: float, atoms: int, trials: int, rng: np.random.Generator, preparation: str = "excited") -> np.ndarray:
    """Sample photon counts by drawing decay time, transferred atoms and photons."""
    r_e = effective_rate(transfer_excited, cfg.transfer_time, cfg.branching)
    r_g = effective_rate(transfer_ground, cfg.transfer_time, cfg.branching)
    if preparation == "excited":
        td = np.minimum(rng.exponential(cfg.lifetime, trials) if cfg.lifetime > 0 else np.zeros(trials), cfg.probe_time)
        n_sc = photons_scattered(cfg.probe_time, td, r_e, r_g)
    else:
        n_sc = np.full(trials, r_g * cfg.probe_time)
    p = transfer_from_scatters(n_sc, cfg.branching)
    mu = atoms * p
    if cfg.histogram == "additive":
        # mixture: background with weight 1/(2 - w0), else zero-truncated signal
        w0 = np.exp(-mu)
        take_bg = rng.random(trials) < 1.0 / (2.0 - w0)
        u = rng.random(trials)
        k = np.where(mu > 0, poisson.ppf(np.clip(w0 + u * (1 - w0), 0, 1 - 1e-16), np.maximum(mu, 1e-300)), 1)
        sig = rng.poisson(np.maximum(k, 1) * cfg.photons_per_atom)
        return np.where(take_bg, rng.poisson(cfg.background, trials), sig).astype(int)
    k = rng.poisson(mu)
    if cfg.histogram == "convolution":
        return rng.poisson(k * cfg.photons_per_atom + cfg.background)
    return np.where(k > 0, rng.poisson(k * cfg.photons_per_atom), rng.poisson(cfg.background, trials))


def ks_distance(samples: np.ndarray, hist: PhotonHistogram) -> float:
    """Largest CDF gap between integer samples and a histogram."""
    n = max(int(samples.max()) + 1, hist.pmf.size)
    emp = np.cumsum(np.bincount(samples, minlength=n)) / samples.size
    cdf = np.cumsum(np.pad(hist.pmf, (0, n - hist.pmf.size)))
    return float(np.abs(emp - cdf).max())
