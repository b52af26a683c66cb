"""Atom-light coupling formulas: two-photon drives, two-level Rabi dynamics,
van der Waals blockade scales, DC Stark shifts and sideband thermometry.

All frequencies are ordinary Hz.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TwoPhotonDrive:
    omega_lower: float
    omega_upper: float
    delta_intermediate: float

    def __post_init__(self):
        if self.delta_intermediate == 0:
            raise ValueError("intermediate-state detuning must be non-zero")
        if self.omega_lower < 0 or self.omega_upper < 0:
            raise ValueError("single-photon Rabi frequencies must be >= 0")


@dataclass(frozen=True)
class RydbergParams:
    c6: float
    polarizability: float | None = None
    state_label: str = "53S1/2"

    def __post_init__(self):
        if not self.c6 > 0:
            raise ValueError("c6 must be > 0 (repulsive S-state convention)")


@dataclass(frozen=True)
class MotionalOccupation:
    nbar: float

    def __post_init__(self):
        if self.nbar < 0:
            raise ValueError("nbar must be >= 0")


def effective_rabi(drive):
    """Two-photon Rabi frequency Omega_1 Omega_2 / (2 Delta) after adiabatic elimination.

    The sign follows the intermediate detuning.  Warns when the detuning is
    less than ten times the larger single-photon Rabi frequency.
    """
    d = drive.delta_intermediate
    if d == 0:
        raise ValueError("intermediate-state detuning must be non-zero")
    big = max(drive.omega_lower, drive.omega_upper)
    if big > 0 and abs(d) < 10 * big:
        warnings.warn(
            f"|Delta|/Omega = {abs(d) / big:.3g} < 10: adiabatic elimination is inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    return drive.omega_lower * drive.omega_upper / (2.0 * d)


def rabi_population(omega, delta, t):
    """Excited-state population of a two-level atom starting in the ground state."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    gen2 = omega**2 + delta**2
    if gen2 == 0:
        return np.zeros_like(t) if t.ndim else 0.0
    p = omega**2 / gen2 * np.sin(math.pi * math.sqrt(gen2) * t) ** 2
    return p if p.ndim else float(p)


def vdw_interaction(c6, distance):
    """V = C6 / R^6 (Hz for c6 in Hz m^6 and R in m)."""
    r = np.asarray(distance, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be > 0")
    v = c6 / r**6
    return v if v.ndim else float(v)


def blockade_radius(c6, omega):
    """Distance at which C6/R^6 equals the single-atom Rabi frequency."""
    if not (c6 > 0 and omega > 0):
        raise ValueError("c6 and omega must be > 0")
    return (c6 / omega) ** (1.0 / 6.0)


def c6_from_blockade(radius, omega):
    """Effective C6 implied by a quoted blockade radius and Rabi frequency."""
    return omega * radius**6


def stark_shift(alpha, e_field):
    """Quadratic DC Stark shift -alpha E^2 / 2 (alpha in Hz/(V/m)^2)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    e = np.asarray(e_field, dtype=float)
    s = -0.5 * alpha * e**2
    return s if s.ndim else float(s)


def polarizability_from_shift(shift, e_field):
    """Calibrate alpha from a measured shift at a known field magnitude."""
    if e_field == 0:
        raise ValueError("cannot calibrate at zero field")
    alpha = -2.0 * shift / e_field**2
    if alpha < 0:
        raise ValueError("shift must be negative for a positive polarizability")
    return alpha


def nbar_from_sideband_ratio(r):
    """Mean motional occupation from the red/blue sideband amplitude ratio."""
    if not 0 <= r < 1:
        raise ValueError("sideband ratio must lie in [0, 1); r >= 1 signals heating or a bad fit")
    return MotionalOccupation(r / (1.0 - r))


def sideband_ratio(nbar):
    return nbar / (1.0 + nbar)
