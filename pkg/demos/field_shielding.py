"""Electrostatic shielding of the atoms from the cavity piezos.

Two piezo cylinders sit 10 mm either side of the atoms.  A grounded box with
a small optical aperture encloses the atom region.  We relax the Laplace
equation on a 129^3 grid with and without the box, compare the field at the
atoms and translate it into a quadratic Stark shift.

    python demos/field_shielding.py
"""
from cavryd.atom_light import polarizability_from_shift, stark_shift
from cavryd.core_types import KHZ
from cavryd.electrostatics import build_assembly_scene, field_at, shielding_factor, solve

origin = (0.0, 0.0, 0.0)
bare = solve(build_assembly_scene(False, (125.0, 0.0)))
boxed = solve(build_assembly_scene(True, (125.0, 0.0)))
res = shielding_factor(bare, boxed, origin)
print(f"|E| unshielded {res.e_unshielded:.1f} V/m, shielded {res.e_shielded:.2f} V/m "
      f"({bare.iterations} / {boxed.iterations} sweeps)")
print(f"shielding factor {res.ratio:.1f}, shift suppression {res.ratio ** 2:.0f}")

# calibrate alpha so the shielded shift at 125 V is -400 kHz
alpha = polarizability_from_shift(-400 * KHZ, field_at(boxed, origin).magnitude)
print(f"alpha {alpha:.2f} Hz/(V/m)^2")
print(f"shift at 125 V: shielded {stark_shift(alpha, res.e_shielded) / KHZ:.1f} kHz, "
      f"unshielded {stark_shift(alpha, res.e_unshielded) / KHZ:.0f} kHz")
