"""Phase-only hologram synthesis for tweezer arrays.

The SLM sits in the objective back aperture, so the tweezer plane is the
unitary 2D DFT of the pupil field ``exp(i * phase)``.  Far-field arrays are
``fftshift``-ed: the zero order is at index ``(n // 2, n // 2)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .fft import fft2, ifft2, is_power_of_two


@dataclass(frozen=True)
class PhaseMask:
    phase: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.phase, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or not is_power_of_two(p.shape[0]):
            raise ValueError(f"phase mask must be square with power-of-two size, got {p.shape}")
        object.__setattr__(self, "phase", wrap_phase(p))

    @property
    def size(self):
        return self.phase.shape[0]

    def pupil(self):
        return np.exp(1j * self.phase)


def wrap_phase(p):
    """Map phases into [-pi, pi)."""
    return np.mod(np.asarray(p, dtype=float) + np.pi, 2 * np.pi) - np.pi


@dataclass(frozen=True)
class TargetPattern:
    """Far-field spot bins ``(row, col)`` in the shifted grid, with relative weights."""

    spots: tuple
    weights: tuple = None

    def __post_init__(self):
        spots = tuple((int(r), int(c)) for r, c in self.spots)
        if not spots:
            raise ValueError("target needs at least one spot")
        w = (1.0,) * len(spots) if self.weights is None else tuple(float(v) for v in self.weights)
        if len(w) != len(spots):
            raise ValueError("one weight per spot required")
        if any(not v > 0 for v in w):
            raise ValueError("spot weights must be > 0")
        object.__setattr__(self, "spots", spots)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.spots)

    def validate(self, grid_size):
        a = np.asarray(self.spots)
        if np.any(a < 0) or np.any(a >= grid_size):
            raise ValueError("spot outside the far-field grid")
        if len(a) > 1:
            d = np.abs(a[:, None, :] - a[None, :, :]).max(axis=-1)
            np.fill_diagonal(d, grid_size)
            if d.min() < 2:
                raise ValueError("spots closer than 2 bins exceed the grid capacity")


def spot_grid(rows, cols, spacing, offset=(0, 0), grid_size=256):
    """Rectangular spot array starting ``offset`` bins from the zero order."""
    c = grid_size // 2
    spots = [(c + offset[0] + i * spacing, c + offset[1] + j * spacing) for i in range(rows) for j in range(cols)]
    return TargetPattern(tuple(spots))


def far_field(mask):
    """Complex far-field amplitude (shifted, unitary)."""
    return np.fft.fftshift(fft2(mask.pupil()))


def propagate(mask):
    """Far-field intensity |DFT(exp(i phase))|^2; sums to the number of pixels."""
    return np.abs(far_field(mask)) ** 2


def uniformity(intensities):
    """1 - (max - min) / (max + min) over the spot intensities."""
    a = np.asarray(intensities, dtype=float)
    if a.size == 0:
        raise ValueError("no intensities")
    if np.any(a < 0):
        raise ValueError("intensities must be >= 0")
    hi, lo = a.max(), a.min()
    if hi == 0:
        raise ValueError("all intensities are zero")
    return float(1.0 - (hi - lo) / (hi + lo))


@dataclass
class HologramResult:
    mask: PhaseMask
    target: TargetPattern
    intensities: np.ndarray
    uniformity: float
    efficiency: float
    history: list
    seed: int

    def to_dict(self):
        return {
            "grid_size": self.mask.size,
            "n_spots": len(self.target),
            "iterations": len(self.history),
            "uniformity": self.uniformity,
            "efficiency": self.efficiency,
            "uniformity_history": list(self.history),
            "seed": self.seed,
            "phase_encoding": "uint16 = round((phase + pi) / (2 pi) * 65535), big-endian PGM",
        }


def weighted_gs(target, iterations=30, grid_size=256, seed=0, initial_phase=None):
    """Weighted Gerchberg-Saxton phase retrieval.

    Each iteration propagates the pupil to the far field, updates the spot
    weights ``w_k <- w_k * <A> / A_k`` (amplitudes normalised by the target),
    imposes the weighted spot amplitudes with the current far-field phases,
    and back-propagates keeping only the pupil phase.  The initial phase is
    uniform random in [-pi, pi) from ``seed``.  ``history[i]`` is the spot
    uniformity of the mask after iteration ``i``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not is_power_of_two(grid_size):
        raise ValueError("grid size must be a power of two")
    target.validate(grid_size)
    rows, cols = np.asarray(target.spots).T
    amp_t = np.sqrt(np.asarray(target.weights))
    if initial_phase is None:
        phase = np.random.default_rng(seed).uniform(-np.pi, np.pi, (grid_size, grid_size))
    else:
        phase = np.asarray(initial_phase, dtype=float)
    w = np.ones(len(target))
    history = []
    far = np.fft.fftshift(fft2(np.exp(1j * phase)))
    for _ in range(iterations):
        spot = far[rows, cols]
        a = np.abs(spot) / amp_t
        w *= a.mean() / np.maximum(a, 1e-300)
        g = np.zeros_like(far)
        g[rows, cols] = w * amp_t * np.exp(1j * np.angle(spot))
        phase = np.angle(ifft2(np.fft.ifftshift(g)))
        far = np.fft.fftshift(fft2(np.exp(1j * phase)))
        inten = np.abs(far[rows, cols]) ** 2
        history.append(uniformity(inten / amp_t**2))
    mask = PhaseMask(phase)
    inten = np.abs(far[rows, cols]) ** 2
    return HologramResult(
        mask=mask,
        target=target,
        intensities=inten,
        uniformity=uniformity(inten / amp_t**2),
        efficiency=float(inten.sum() / grid_size**2),
        history=history,
        seed=seed,
    )


def phase_to_uint16(phase):
    return np.rint((wrap_phase(phase) + np.pi) / (2 * np.pi) * 65535).astype(">u2")


def write_pgm(path, mask):
    data = phase_to_uint16(mask.phase)
    n = mask.size
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    """Return the phase array stored by :func:`write_pgm` (quantised)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    if int(parts[2]) != 65535:
        raise ValueError("expected 16-bit PGM")
    data = np.frombuffer(parts[3], dtype=">u2", count=w * h).reshape(h, w)
    return data.astype(float) / 65535 * 2 * np.pi - np.pi


def write_hologram(prefix, result):
    """Write ``<prefix>.pgm``, ``<prefix>.json`` and ``<prefix>_spots.csv``; return the paths."""
    pgm, meta, spots = f"{prefix}.pgm", f"{prefix}.json", f"{prefix}_spots.csv"
    write_pgm(pgm, result.mask)
    with open(meta, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    mean = result.intensities.mean()
    with open(spots, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "row", "col", "target_weight", "intensity", "relative_intensity"])
        for i, ((r, c), wt, inten) in enumerate(zip(result.target.spots, result.target.weights, result.intensities)):
            wr.writerow([i, r, c, repr(wt), repr(float(inten)), repr(float(inten / mean))])
    return [pgm, meta, spots]


def neighbourhood_fraction(intensity, spot, radius=1):
    """Fraction of total far-field power within the (2r+1)^2 bins around ``spot``."""
    r, c = spot
    box = intensity[max(r - radius, 0):r + radius + 1, max(c - radius, 0):c + radius + 1]
    return float(box.sum() / intensity.sum())

