"""Atom-number-dependent shift of the cavity resonance.

A 19.25 mm near-concentric resonator is probed through its transmission.
Atoms in the mode pull the resonance by delta_N = N C Gamma kappa / (4 Delta_ac).
We simulate an empty and a loaded scan with photon shot noise, fit both with
a sum of Lorentzians and turn the measured shift back into a cooperativity.

    python demos/cavity_shift.py
"""
import numpy as np

from cavryd.analysis import fit_lorentzian_sum
from cavryd.cavity import (
    CavityGeometry,
    ModeFamily,
    cooperativity_from_shift,
    dispersive_shift,
    fsr,
    mode_waist,
    simulate_spectrum,
)
from cavryd.core_types import KHZ, MHZ, MM, NM, RB87, UM

geom = CavityGeometry(10 * MM, 19.25 * MM, 780.241 * NM)
kappa, delta_ac, n_atoms, coop = 0.84 * MHZ, 73.2 * MHZ, 23.3, 0.51

print(f"FSR            {fsr(geom.length) / 1e9:.4f} GHz")
print(f"mode waist     {mode_waist(geom) / UM:.2f} um")
shift = dispersive_shift(n_atoms, coop, RB87.gamma_e, kappa, delta_ac)
print(f"expected shift {shift / KHZ:.1f} kHz for N = {n_atoms}")

scan = np.linspace(-2.5, 4.5, 141) * MHZ
family = ModeFamily.default()
centres = []
for label, s, seed in (("empty", 0.0, 1), ("atoms", shift, 2)):
    counts = simulate_spectrum(family, scan, 100e-6, 2e7, s, seed=seed)
    fit = fit_lorentzian_sum(scan, counts.astype(float), 2, sigma=np.sqrt(np.maximum(counts, 1)))
    centres.append((fit["center_0"], fit.sigma("center_0")))
    print(f"{label:6s} centre {fit['center_0'] / KHZ:8.1f} +- {fit.sigma('center_0') / KHZ:.1f} kHz, "
          f"kappa {fit['width_0'] / MHZ:.3f} MHz")

measured = centres[1][0] - centres[0][0]
err = np.hypot(centres[0][1], centres[1][1])
print(f"measured shift {measured / KHZ:.1f} +- {err / KHZ:.1f} kHz")
print(f"inferred C     {cooperativity_from_shift(measured, n_atoms, kappa, RB87.gamma_e, delta_ac):.3f}")
