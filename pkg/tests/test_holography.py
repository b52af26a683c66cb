import numpy as np
import pytest

from cavryd.fft import fft, fft2, ifft, ifft2, is_power_of_two
from cavryd.holography import (
    PhaseMask,
    TargetPattern,
    neighbourhood_fraction,
    propagate,
    read_pgm,
    spot_grid,
    uniformity,
    weighted_gs,
    wrap_phase,
    write_hologram,
)

import oracles


@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_fft_matches_dft_matrix(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert np.allclose(fft(x), oracles.dft_matrix(n) @ x, atol=1e-12)
    assert np.allclose(ifft(fft(x)), x, atol=1e-12)


def test_fft2_matches_numpy_unitary():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(32, 64)) + 1j * rng.normal(size=(32, 64))
    assert np.allclose(fft2(x), np.fft.fft2(x, norm="ortho"), atol=1e-12)
    assert np.allclose(ifft2(fft2(x)), x, atol=1e-12)


def test_fft_rejects_non_power_of_two():
    assert not is_power_of_two(12) and is_power_of_two(256)
    with pytest.raises(ValueError, match="power of two"):
        fft(np.ones(12))
    with pytest.raises(ValueError, match="power-of-two"):
        PhaseMask(np.zeros((12, 12)))


def test_constant_phase_gives_central_delta():
    n = 64
    far = propagate(PhaseMask(np.full((n, n), 0.3)))
    assert far[n // 2, n // 2] == pytest.approx(n * n)
    far[n // 2, n // 2] = 0
    assert far.max() < 1e-20


@pytest.mark.parametrize("k", [(1, 0), (5, -3), (-7, 12)])
def test_phase_ramp_shifts_peak(k):
    n = 64
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    far = propagate(PhaseMask(2 * np.pi * (k[0] * r + k[1] * c) / n))
    peak = np.unravel_index(np.argmax(far), far.shape)
    assert peak == (n // 2 + k[0], n // 2 + k[1])
    assert far[peak] == pytest.approx(n * n)


def test_parseval_on_random_masks():
    rng = np.random.default_rng(4)
    for n in (16, 128, 256):
        far = propagate(PhaseMask(rng.uniform(-np.pi, np.pi, (n, n))))
        assert abs(far.sum() - n * n) / (n * n) < 1e-9


def test_mask_is_wrapped():
    m = PhaseMask(np.array([[np.pi, -np.pi], [3 * np.pi, 0.1]]))
    assert np.all(m.phase >= -np.pi) and np.all(m.phase < np.pi)
    assert np.allclose(np.abs(m.pupil()), 1.0)
    assert wrap_phase(np.pi) == pytest.approx(-np.pi)


def test_uniformity_examples():
    assert uniformity([1, 1, 1]) == 1.0
    assert uniformity([1, 0]) == 0.0
    assert uniformity([1.0, 0.9]) == pytest.approx(0.947, abs=5e-4)
    for bad in ([], [-1, 1], [0, 0]):
        with pytest.raises(ValueError):
            uniformity(bad)


def test_single_spot_concentrates_power():
    target = TargetPattern(((128 + 20, 128 - 33),))
    res = weighted_gs(target, iterations=10, seed=1)
    assert res.uniformity == 1.0
    assert neighbourhood_fraction(propagate(res.mask), target.spots[0]) >= 0.9


def test_seven_by_seven_array():
    target = spot_grid(7, 7, 6, offset=(10, 10))
    res = weighted_gs(target, iterations=30, grid_size=256, seed=0)
    assert res.uniformity > 0.95
    assert len(res.history) == 30
    # the returned mask reproduces the reported spot intensities
    far = propagate(res.mask)
    rows, cols = np.asarray(target.spots).T
    assert np.allclose(far[rows, cols], res.intensities, rtol=1e-9)


def test_weights_shape_the_array():
    target = TargetPattern(((140, 140), (140, 150)), (1.0, 4.0))
    res = weighted_gs(target, iterations=40, grid_size=64 * 4, seed=2)
    assert res.intensities[1] / res.intensities[0] == pytest.approx(4.0, rel=0.05)


def test_deterministic_per_seed():
    target = spot_grid(3, 3, 5, offset=(8, 8), grid_size=64)
    a = weighted_gs(target, 10, 64, seed=7)
    b = weighted_gs(target, 10, 64, seed=7)
    assert np.array_equal(a.mask.phase, b.mask.phase)


def test_target_errors():
    with pytest.raises(ValueError):
        TargetPattern(())
    with pytest.raises(ValueError):
        TargetPattern(((1, 1),), (0.0,))
    with pytest.raises(ValueError, match="outside"):
        weighted_gs(TargetPattern(((70, 3),)), 1, 64)
    with pytest.raises(ValueError, match="capacity"):
        weighted_gs(TargetPattern(((10, 10), (11, 10))), 1, 64)
    with pytest.raises(ValueError):
        weighted_gs(TargetPattern(((10, 10),)), 0, 64)


def test_hologram_export_round_trip(tmp_path):
    target = spot_grid(2, 2, 4, offset=(6, 6), grid_size=64)
    res = weighted_gs(target, 5, 64, seed=0)
    paths = write_hologram(str(tmp_path / "mask"), res)
    raw = open(paths[0], "rb").read()
    assert raw.startswith(b"P5\n64 64\n65535\n") and len(raw) == len(b"P5\n64 64\n65535\n") + 2 * 64 * 64
    back = read_pgm(paths[0])
    err = np.angle(np.exp(1j * (back - res.mask.phase)))
    assert np.abs(err).max() <= np.pi / 65535 + 1e-12
    lines = open(paths[2]).read().splitlines()
    assert lines[0].startswith("index,row,col") and len(lines) == 5


def test_uniformity_statistically_non_decreasing():
    # weighted GS is not strictly monotone; dips stay below 1e-3 per iteration
    rng = np.random.default_rng(12)
    ok = 0
    for trial in range(100):
        spots = []
        while len(spots) < 10:
            s = (int(rng.integers(70, 186)), int(rng.integers(70, 186)))
            if all(max(abs(s[0] - r), abs(s[1] - c)) >= 2 for r, c in spots):
                spots.append(s)
        target = TargetPattern(tuple(spots))
        hist = np.array(weighted_gs(target, iterations=12, grid_size=256, seed=trial).history)
        ok += bool(np.all(np.diff(hist) >= -1e-3))
    assert ok >= 95


def test_phase_only_constraint_each_iteration():
    target = spot_grid(2, 3, 5, offset=(4, 4), grid_size=64)
    for it in (1, 2, 5):
        res = weighted_gs(target, iterations=it, grid_size=64, seed=1)
        assert np.allclose(np.abs(res.mask.pupil()), 1.0, atol=1e-15)
