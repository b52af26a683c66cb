import math

import numpy as np
import pytest

from cavryd.analysis import fit_lorentzian_sum
from cavryd.cavity import (
    CavityGeometry,
    ModeFamily,
    cavity_mode,
    cooperativity,
    cooperativity_from_g,
    cooperativity_from_shift,
    coupling_weight,
    dispersive_shift,
    fsr,
    g_from_cooperativity,
    mode_waist,
    rayleigh_range,
    read_spectrum_csv,
    simulate_spectrum,
    single_atom_shift_to_g,
    transmission,
    write_spectrum_csv,
)
from cavryd.core_types import KHZ, MHZ, MM, NM, UM

import oracles

GAMMA = 6.065 * MHZ
KAPPA = 0.84 * MHZ
DELTA_AC = 73.2 * MHZ
GEOM = CavityGeometry(10 * MM, 19.25 * MM, 780.241 * NM)


@pytest.mark.parametrize("length, expected", [(19.25e-3, 7.786e9), (0.15, 0.99931e9), (9.625e-3, 15.57e9)])
def test_fsr_examples(length, expected):
    assert fsr(length) == pytest.approx(expected, rel=5e-4)


def test_fsr_rejects_nonpositive_length():
    with pytest.raises(ValueError):
        fsr(0.0)


def test_waist_matches_abcd_eigenmode():
    w_ref, q_mid = oracles.abcd_waist(GEOM.mirror_radius, GEOM.length, GEOM.wavelength)
    assert mode_waist(GEOM) == pytest.approx(w_ref, rel=1e-10)
    assert rayleigh_range(GEOM) == pytest.approx(q_mid.imag, rel=1e-10)
    assert mode_waist(GEOM) == pytest.approx(21.7 * UM, rel=2e-3)


def test_confocal_rayleigh_range_is_half_length():
    g = CavityGeometry(10 * MM, 10 * MM, 780 * NM)
    assert rayleigh_range(g) == pytest.approx(5 * MM, rel=1e-12)


def test_concentric_limit_waist_shrinks():
    ws = [mode_waist(CavityGeometry(10 * MM, L, 780 * NM)) for L in (19.9 * MM, 19.99 * MM, 19.999 * MM)]
    assert ws[0] > ws[1] > ws[2]
    with pytest.raises(ValueError, match="unstable"):
        rayleigh_range(CavityGeometry(10 * MM, 20.5 * MM, 780 * NM))


def test_cooperativity_circular_mode():
    w0 = mode_waist(GEOM)
    finesse = fsr(GEOM.length) / KAPPA
    c = cooperativity(finesse, GEOM.wavelength, w0, w0)
    assert c == pytest.approx(2.3, rel=0.02)
    assert cooperativity(finesse, GEOM.wavelength, 2 * w0, w0) == pytest.approx(c / 2)
    # elliptical waists that bring the prediction to 1.06
    wy = w0 * c / 1.06
    assert cooperativity(finesse, GEOM.wavelength, w0, wy) == pytest.approx(1.06, rel=1e-12)


def test_cooperativity_equals_4g2_over_kappa_gamma_route():
    # C = 24F/(pi k^2 w^2) must equal 4 g^2 / (kappa Gamma) with g from the dipole coupling of a
    # closed transition at a standing-wave antinode: g^2 = 3 lambda^2 c Gamma / (4 pi^3 w^2 L) in Hz^2
    w0 = mode_waist(GEOM)
    lam = GEOM.wavelength
    g2 = 3 * lam**2 * 299_792_458.0 * GAMMA / (4 * math.pi**3 * w0**2 * GEOM.length)
    finesse = fsr(GEOM.length) / KAPPA
    assert cooperativity(finesse, lam, w0, w0) == pytest.approx(4 * g2 / (KAPPA * GAMMA), rel=1e-12)


def test_g_from_cooperativity_examples():
    assert g_from_cooperativity(1.06, KAPPA, GAMMA) == pytest.approx(1.162 * MHZ, rel=1e-3)
    assert g_from_cooperativity(0.0, KAPPA, GAMMA) == 0.0
    assert g_from_cooperativity(0.517, KAPPA, GAMMA) == pytest.approx(0.812 * MHZ, rel=1e-3)
    assert cooperativity_from_g(g_from_cooperativity(0.7, KAPPA, GAMMA), KAPPA, GAMMA) == pytest.approx(0.7)


def test_dispersive_shift_examples():
    ref = oracles.dispersive_shift(23.3, 0.51, GAMMA, KAPPA, DELTA_AC)
    assert dispersive_shift(23.3, 0.51, GAMMA, KAPPA, DELTA_AC) == pytest.approx(ref, rel=1e-14)
    assert dispersive_shift(23.3, 0.51, GAMMA, KAPPA, DELTA_AC) == pytest.approx(206.8 * KHZ, rel=1e-3)
    assert dispersive_shift(0, 0.51, GAMMA, KAPPA, DELTA_AC) == 0.0
    assert dispersive_shift(1, 0.51, GAMMA, KAPPA, DELTA_AC) == pytest.approx(8.87 * KHZ, rel=1e-3)


def test_dispersive_shift_equals_ng2_over_delta():
    g = g_from_cooperativity(0.51, KAPPA, GAMMA)
    assert dispersive_shift(5, 0.51, GAMMA, KAPPA, DELTA_AC) == pytest.approx(5 * g**2 / DELTA_AC, rel=1e-12)


def test_dispersive_shift_errors():
    with pytest.raises(ValueError):
        dispersive_shift(1, 0.5, GAMMA, KAPPA, 0.0)
    with pytest.raises(ValueError):
        dispersive_shift(-1, 0.5, GAMMA, KAPPA, DELTA_AC)


def test_single_atom_inversion():
    g = single_atom_shift_to_g(9 * KHZ, DELTA_AC)
    assert g == pytest.approx(812 * KHZ, rel=5e-3)
    assert cooperativity_from_g(g, KAPPA, GAMMA) == pytest.approx(0.517, rel=5e-3)
    with pytest.raises(ValueError):
        single_atom_shift_to_g(9 * KHZ, -DELTA_AC)


def test_cooperativity_from_shift_inverts_forward_formula():
    s = dispersive_shift(23.3, 0.51, GAMMA, KAPPA, DELTA_AC)
    assert cooperativity_from_shift(s, 23.3, KAPPA, GAMMA, DELTA_AC) == pytest.approx(0.51, rel=1e-12)


def test_coupling_weight_profile():
    w = 20 * UM
    lam = 780 * NM
    assert coupling_weight([0, 0, 0], w, w, lam)[0] == pytest.approx(1.0)
    assert coupling_weight([lam / 4, 0, 0], w, w, lam)[0] == pytest.approx(0.0, abs=1e-20)
    assert coupling_weight([0, w, 0], w, w, lam)[0] == pytest.approx(math.exp(-2))


def test_cavity_mode_collects_parameters():
    m = cavity_mode(GEOM, KAPPA)
    assert m.finesse == pytest.approx(9270, rel=1e-3)
    assert m.waist_x == m.waist_y


def test_transmission_single_peak():
    fam = ModeFamily.single(KAPPA, amplitude=2.0, center=1 * MHZ, background=0.1)
    assert transmission(1 * MHZ, fam) == pytest.approx(2.1)
    assert transmission(1 * MHZ + KAPPA / 2, fam) == pytest.approx(1.1)


def test_transmission_three_peaks():
    fam = ModeFamily([0, 3 * MHZ, 6 * MHZ], [KAPPA] * 3, [1.0, 0.6, 0.3])
    exact = 1.0 + 0.6 / (1 + 4 * (3 / 0.84) ** 2) + 0.3 / (1 + 4 * (6 / 0.84) ** 2)
    assert transmission(0.0, fam) == pytest.approx(exact, rel=1e-14)
    # the rounded value quoted alongside this example (1.0135) is off by 5e-4; the sum is 1.0130
    assert transmission(0.0, fam) == pytest.approx(1.0130, abs=1e-4)


def test_simulate_spectrum_is_deterministic_and_unbiased():
    fam = ModeFamily.default()
    scan = np.linspace(-1, 4, 21) * MHZ
    a = simulate_spectrum(fam, scan, 100e-6, 2e7, seed=5)
    b = simulate_spectrum(fam, scan, 100e-6, 2e7, seed=5)
    assert np.array_equal(a, b)
    big = simulate_spectrum(fam, scan, 1.0, 1e8, seed=1)
    mean = 1e8 * np.asarray(transmission(scan, fam))
    assert np.allclose(big, mean, rtol=0.01)


def test_spectrum_shift_recovered_by_fit():
    fam = ModeFamily.default()
    scan = np.linspace(-2.5, 4.5, 141) * MHZ
    shift = dispersive_shift(23.3, 0.51, GAMMA, KAPPA, DELTA_AC)
    c0 = simulate_spectrum(fam, scan, 100e-6, 2e7, 0.0, seed=11)
    c1 = simulate_spectrum(fam, scan, 100e-6, 2e7, shift, seed=12)
    f0 = fit_lorentzian_sum(scan, c0.astype(float), 2, sigma=np.sqrt(np.maximum(c0, 1)))
    f1 = fit_lorentzian_sum(scan, c1.astype(float), 2, sigma=np.sqrt(np.maximum(c1, 1)))
    d = f1["center_0"] - f0["center_0"]
    s = math.hypot(f0.sigma("center_0"), f1.sigma("center_0"))
    assert abs(d - shift) < 3 * s
    assert f0.authoritative and f1.authoritative


def test_spectrum_csv_round_trip(tmp_path):
    scan = np.linspace(0, 1, 5) * MHZ
    counts = np.array([1, 2, 3, 4, 5])
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, scan, counts, 1e-4)
    s2, c2, e2 = read_spectrum_csv(path)
    assert np.array_equal(s2, scan) and np.array_equal(c2, counts) and e2 == 1e-4
    assert path.read_text().splitlines()[0] == "delta_pc_hz,counts,exposure_s"
