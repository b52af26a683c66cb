"""Near-concentric cavity: mode geometry, cooperativity, dispersive shift and
synthetic transmission spectra.

The split mode family seen in the empty-cavity spectrum is modelled
phenomenologically as a sum of Lorentzians (:class:`ModeFamily`); atoms shift
every peak of the family rigidly by the dispersive shift.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core_types import C_LIGHT, MHZ


@dataclass(frozen=True)
class CavityGeometry:
    """Symmetric two-mirror resonator (SI units)."""

    mirror_radius: float
    length: float
    wavelength: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("L must be > 0")
        if not self.mirror_radius > 0:
            raise ValueError("R must be > 0")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be > 0")

    @property
    def g_parameter(self):
        return 1.0 - self.length / self.mirror_radius

    @property
    def is_stable(self):
        return abs(self.g_parameter) < 1.0


@dataclass(frozen=True)
class CavityMode:
    waist_x: float
    waist_y: float
    rayleigh_range: float
    fsr: float
    kappa: float
    finesse: float


def fsr(length):
    """Free spectral range c/2L in Hz."""
    if not length > 0:
        raise ValueError("L must be > 0")
    return C_LIGHT / (2.0 * length)


def rayleigh_range(geom):
    g = geom.g_parameter
    if abs(g) >= 1.0:
        raise ValueError(f"unstable resonator geometry (g = {g:.6g})")
    return 0.5 * geom.length * math.sqrt((1.0 + g) / (1.0 - g))


def mode_waist(geom):
    """Waist radius (1/e^2 intensity) of the TEM00 mode at the cavity centre."""
    return math.sqrt(geom.wavelength * rayleigh_range(geom) / math.pi)


def cavity_mode(geom, kappa, waists=None):
    """Collect the mode parameters.

    ``waists`` overrides the ideal circular waist with measured elliptical
    ``(w_x, w_y)`` values; the Rayleigh range always refers to the ideal mode.
    """
    zr = rayleigh_range(geom)
    if waists is None:
        w = mode_waist(geom)
        waists = (w, w)
    wx, wy = waists
    if not (wx > 0 and wy > 0):
        raise ValueError("waists must be > 0")
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    f = fsr(geom.length)
    return CavityMode(waist_x=wx, waist_y=wy, rayleigh_range=zr, fsr=f, kappa=kappa, finesse=f / kappa)


def cooperativity(finesse, wavelength, waist_x, waist_y):
    """Peak single-atom cooperativity 24 F / (pi k^2 w_x w_y).

    Equal to 4 g^2 / (kappa Gamma) for an atom on a standing-wave antinode at
    the mode centre, for a closed two-level transition.
    """
    for v in (finesse, wavelength, waist_x, waist_y):
        if not v > 0:
            raise ValueError("cooperativity inputs must be > 0")
    k = 2.0 * math.pi / wavelength
    return 24.0 * finesse / (math.pi * k**2 * waist_x * waist_y)


def g_from_cooperativity(coop, kappa, gamma):
    """Vacuum Rabi coupling g = sqrt(C kappa Gamma)/2 (same units as kappa, Gamma)."""
    if coop < 0 or not kappa > 0 or not gamma > 0:
        raise ValueError("need C >= 0 and kappa, gamma > 0")
    return 0.5 * math.sqrt(coop * kappa * gamma)


def cooperativity_from_g(g, kappa, gamma):
    if not kappa > 0 or not gamma > 0:
        raise ValueError("kappa and gamma must be > 0")
    return 4.0 * g**2 / (kappa * gamma)


def dispersive_shift(n_atoms, coop, gamma, kappa, delta_ac):
    """Cavity resonance shift N C Gamma kappa / (4 Delta_ac).

    Identical to N g^2 / Delta_ac; linear in the (possibly fractional, i.e.
    mean) atom number.
    """
    if delta_ac == 0:
        raise ValueError("dispersive shift undefined at zero atom-cavity detuning")
    if n_atoms < 0:
        raise ValueError("atom number must be >= 0")
    return n_atoms * coop * gamma * kappa / (4.0 * delta_ac)


def single_atom_shift_to_g(delta_1, delta_ac):
    """Invert delta_1 = g^2 / Delta_ac."""
    if delta_ac == 0:
        raise ValueError("zero atom-cavity detuning")
    g2 = delta_1 * delta_ac
    if g2 < 0:
        raise ValueError("shift and detuning must have the same sign")
    return math.sqrt(g2)


def cooperativity_from_shift(shift, n_atoms, kappa, gamma, delta_ac):
    """Cooperativity implied by a measured ensemble shift (homogeneous coupling)."""
    if not n_atoms > 0:
        raise ValueError("need a positive atom number")
    return 4.0 * shift * delta_ac / (n_atoms * kappa * gamma)


def coupling_weight(positions, waist_x, waist_y, wavelength, axis=0, center=(0.0, 0.0, 0.0)):
    """Relative coupling g(r)^2/g_max^2 in [0, 1] for atoms at ``positions`` (m).

    Gaussian in the two directions transverse to the cavity ``axis``,
    standing wave ``cos^2(k z)`` along it.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float)) - np.asarray(center)
    trans = [i for i in range(3) if i != axis]
    k = 2.0 * np.pi / wavelength
    gauss = np.exp(-2.0 * pos[:, trans[0]] ** 2 / waist_x**2 - 2.0 * pos[:, trans[1]] ** 2 / waist_y**2)
    return gauss * np.cos(k * pos[:, axis]) ** 2


def effective_cooperativity(coop, positions=None, **mode):
    """Ensemble-averaged cooperativity; homogeneous coupling when ``positions`` is None."""
    if positions is None:
        return coop
    return coop * float(np.mean(coupling_weight(positions, **mode)))


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModeFamily:
    """Lorentzian peaks at ``offsets`` (Hz) with FWHM ``linewidths`` (Hz).

    ``amplitudes`` and ``background`` are relative to the probe peak rate.
    """

    offsets: np.ndarray
    linewidths: np.ndarray
    amplitudes: np.ndarray
    background: float = 0.0

    def __post_init__(self):
        for name in ("offsets", "linewidths", "amplitudes"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.offsets.shape == self.linewidths.shape == self.amplitudes.shape):
            raise ValueError("offsets, linewidths and amplitudes must have equal length")
        if np.any(self.linewidths <= 0):
            raise ValueError("linewidths must be > 0")
        if np.any(self.amplitudes < 0) or self.background < 0:
            raise ValueError("amplitudes and background must be >= 0")

    @classmethod
    def default(cls, kappa=0.84 * MHZ, spacing=3.0 * MHZ):
        amps = np.array([1.0, 0.45, 0.2, 0.1])
        return cls(
            offsets=spacing * np.arange(4),
            linewidths=np.full(4, kappa),
            amplitudes=amps,
            background=0.01,
        )

    @classmethod
    def single(cls, kappa, amplitude=1.0, center=0.0, background=0.0):
        return cls([center], [kappa], [amplitude], background)

    def shifted(self, shift):
        return ModeFamily(self.offsets + shift, self.linewidths, self.amplitudes, self.background)

    def __len__(self):
        return len(self.offsets)


def transmission(delta_pc, family):
    """background + sum_k A_k / (1 + 4 (delta_pc - delta_k)^2 / kappa_k^2)."""
    d = np.asarray(delta_pc, dtype=float)
    x = (d[..., None] - family.offsets) / family.linewidths
    out = family.background + np.sum(family.amplitudes / (1.0 + 4.0 * x**2), axis=-1)
    return out if out.ndim else float(out)


def point_generators(seed, n):
    """Independent generators for ``n`` scan points / shots, derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def simulate_spectrum(family, scan, exposure_s, peak_rate, atoms_shift=0.0, seed=0):
    """Poissonian photon counts for a probe scan.

    The mean count at detuning ``delta`` is
    ``exposure_s * peak_rate * transmission(delta - atoms_shift, family)``.
    Each scan point draws from its own stream spawned from ``seed``, so
    results do not depend on evaluation order.
    """
    scan = np.asarray(scan, dtype=float)
    if scan.size == 0:
        raise ValueError("empty scan")
    if not exposure_s > 0 or not peak_rate > 0:
        raise ValueError("exposure and peak rate must be > 0")
    means = exposure_s * peak_rate * np.atleast_1d(transmission(scan - atoms_shift, family))
    gens = point_generators(seed, scan.size)
    return np.array([g.poisson(m) for g, m in zip(gens, means)], dtype=np.int64)


def write_spectrum_csv(path, scan, counts, exposure_s):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta_pc_hz", "counts", "exposure_s"])
        for d, c in zip(scan, counts):
            w.writerow([repr(float(d)), int(c), repr(float(exposure_s))])


def read_spectrum_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    scan = np.array([float(r["delta_pc_hz"]) for r in rows])
    counts = np.array([int(r["counts"]) for r in rows])
    exposure = float(rows[0]["exposure_s"]) if rows else float("nan")
    return scan, counts, exposure
