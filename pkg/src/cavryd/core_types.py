"""Unit conventions, species data, tweezer geometry and the experiment config.

Frequencies are ordinary frequencies in Hz everywhere in the public API; a
value printed as "2pi x 0.84 MHz" is stored as ``0.84e6``.  Dynamics code
converts to rad/s with :func:`to_angular` at the boundary.  Lengths are SI
meters internally.  The JSON config carries explicit unit suffixes in its
field names (``kappa_mhz``, ``length_mm``, ...) and the record classes below
keep those names, exposing SI values through properties.
"""
from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import constants as _sc

C_LIGHT = _sc.c
TWO_PI = 2.0 * math.pi

MHZ = 1e6
GHZ = 1e9
KHZ = 1e3
UM = 1e-6
MM = 1e-3
NM = 1e-9


def to_angular(f):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * f


def from_angular(w):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return w / TWO_PI


class ConfigError(ValueError):
    """Raised by :func:`validate_config`; ``errors`` holds ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{p}: {m}" for p, m in self.errors)
        super().__init__(f"invalid config ({len(self.errors)} error(s)): {lines}")


# --------------------------------------------------------------------------
# species
# --------------------------------------------------------------------------

DEFAULT_LEVEL_LABELS = {
    "g'": "5S1/2 F=2 mF=-2",
    "g": "5S1/2 F=1 mF=-1",
    "e": "5P3/2 F=3",
    "i": "6P3/2 F=3",
    "r": "53S1/2",
}


@dataclass(frozen=True)
class AtomSpecies:
    """Atomic constants used by the cavity and Rydberg models.

    ``gamma_e_mhz`` and ``d2_wavelength_nm`` default to the standard Rb D2
    values.  ``c6_ghz_um6`` defaults to the effective coefficient implied by a
    4.8 um blockade radius at a 2.72 MHz Rabi frequency.  The Rydberg
    polarizability has no default; it is a calibration input (``None`` means
    "calibrate from the measured Stark shift").
    """

    name: str = "Rb87"
    gamma_e_mhz: float = 6.065
    d2_wavelength_nm: float = 780.241
    c6_ghz_um6: float = 33.27
    rydberg_state: str = "53S1/2"
    polarizability_hz_per_v2m2: Optional[float] = None
    level_labels: dict = field(default_factory=lambda: dict(DEFAULT_LEVEL_LABELS))

    @property
    def gamma_e(self):
        return self.gamma_e_mhz * MHZ

    @property
    def d2_wavelength(self):
        return self.d2_wavelength_nm * NM

    @property
    def c6(self):
        """van der Waals coefficient in Hz m^6."""
        return self.c6_ghz_um6 * GHZ * UM**6


RB87 = AtomSpecies()


# --------------------------------------------------------------------------
# tweezer array
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TweezerArray:
    """Trap sites in micrometers (JSON units); ``positions`` gives meters."""

    sites_um: tuple = ()
    occupancy: Optional[tuple] = None
    trap_depth_mk: float = 1.2

    @property
    def positions(self):
        return np.asarray(self.sites_um, dtype=float).reshape(-1, 3) * UM

    @property
    def n_sites(self):
        return len(self.sites_um)

    @classmethod
    def grid(cls, rows, cols, spacing_um, trap_depth_mk=1.2, origin_um=(0.0, 0.0, 0.0)):
        """Rectangular ``rows x cols`` array in the z=0 plane, centred on ``origin_um``."""
        ys = (np.arange(rows) - (rows - 1) / 2) * spacing_um + origin_um[1]
        xs = (np.arange(cols) - (cols - 1) / 2) * spacing_um + origin_um[0]
        sites = tuple((float(x), float(y), float(origin_um[2])) for y in ys for x in xs)
        return cls(sites_um=sites, trap_depth_mk=trap_depth_mk)

    def occupied_positions(self):
        pos = self.positions
        if self.occupancy is None:
            return pos
        return pos[np.asarray(self.occupancy, dtype=bool)]


def _array_errors(arr, path):
    errs = []
    pos = np.asarray(arr.sites_um, dtype=float)
    if pos.size and (pos.ndim != 2 or pos.shape[1] != 3):
        return [(f"{path}.sites_um", "each site needs three coordinates")]
    if not np.all(np.isfinite(pos)):
        errs.append((f"{path}.sites_um", "non-finite coordinate"))
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            if np.array_equal(pos[i], pos[j]):
                errs.append((f"{path}.sites_um[{j}]", f"duplicate site (same as site {i})"))
    if arr.occupancy is not None and len(arr.occupancy) != len(pos):
        errs.append((f"{path}.occupancy", "length must equal the number of sites"))
    if not arr.trap_depth_mk > 0:
        errs.append((f"{path}.trap_depth_mk", "trap depth must be > 0"))
    return errs


# --------------------------------------------------------------------------
# nested config records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeFamilyConfig:
    offsets_mhz: tuple = (0.0, 3.0, 6.0, 9.0)
    linewidths_mhz: tuple = (0.84, 0.84, 0.84, 0.84)
    amplitudes: tuple = (1.0, 0.45, 0.2, 0.1)
    background: float = 0.01


@dataclass(frozen=True)
class CavityConfig:
    mirror_radius_mm: float = 10.0
    length_mm: float = 19.25
    wavelength_nm: float = 780.241
    kappa_mhz: float = 0.84
    delta_ac_mhz: float = 73.2
    cooperativity: float = 0.51
    n_atoms: float = 23.3
    mode_family: ModeFamilyConfig = field(default_factory=ModeFamilyConfig)
    exposure_us: float = 100.0
    peak_rate_hz: float = 2.0e7
    scan_start_mhz: float = -2.5
    scan_stop_mhz: float = 4.5
    scan_points: int = 141
    fit_peaks: int = 2

    def geometry(self):
        from .cavity import CavityGeometry

        return CavityGeometry(
            mirror_radius=self.mirror_radius_mm * MM,
            length=self.length_mm * MM,
            wavelength=self.wavelength_nm * NM,
        )

    def family(self):
        from .cavity import ModeFamily

        mf = self.mode_family
        return ModeFamily(
            offsets=np.asarray(mf.offsets_mhz) * MHZ,
            linewidths=np.asarray(mf.linewidths_mhz) * MHZ,
            amplitudes=np.asarray(mf.amplitudes, dtype=float),
            background=mf.background,
        )


@dataclass(frozen=True)
class DriveConfig:
    """Rydberg drive and the blockade-group scan."""

    omega_mhz: float = 2.72
    detuning_mhz: float = 0.0
    omega_lower_mhz: float = 104.3
    omega_upper_mhz: float = 104.3
    delta_intermediate_ghz: float = 2.0
    group_spacing_um: float = 2.5
    group_sizes: tuple = (1, 2, 3, 4)
    t_max_us: float = 1.5
    n_times: int = 151
    shots: int = 1


@dataclass(frozen=True)
class NoiseConfig:
    sigma_delta_mhz: float = 0.0
    sigma_omega_rel: float = 0.0
    # quality-factor comparison under a piezo ramp
    quality_sigma_delta_mhz: float = 1.5
    quality_shots: int = 200
    piezo_scan_v: float = 65.0
    stark_shift_khz_at_125v: float = -400.0


@dataclass(frozen=True)
class SolverConfig:
    grid_points: int = 129
    extent_mm: float = 40.0
    sor_omega: float = 1.9
    tol: float = 1e-6
    max_iters: int = 20000
    voltages_v: tuple = (0.0, 25.0, 50.0, 75.0, 100.0, 125.0)
    calibration_voltage_v: float = 125.0
    calibration_shift_khz: float = -400.0


@dataclass(frozen=True)
class HolographyConfig:
    grid_size: int = 256
    iterations: int = 30
    rows: int = 7
    cols: int = 7
    spacing_bins: int = 8
    offset_bins: tuple = (24, 24)
    spots: Optional[tuple] = None


@dataclass(frozen=True)
class DetectionConfig:
    loading: float = 0.52
    imaging_fidelity: float = 0.99988
    survival: float = 0.9988
    n_records: int = 1_000_000
    background_mean: float = 20.0
    atom_mean: float = 200.0
    histogram_samples: int = 20000
    lifetime_s: float = 322.0
    lifetime_atoms: int = 500
    lifetime_points: int = 8
    lifetime_t_max_s: float = 600.0


def _default_array():
    return TweezerArray.grid(7, 7, 5.0)


@dataclass(frozen=True)
class ExperimentConfig:
    species: AtomSpecies = field(default_factory=AtomSpecies)
    cavity: CavityConfig = field(default_factory=CavityConfig)
    array: TweezerArray = field(default_factory=_default_array)
    drive: DriveConfig = field(default_factory=DriveConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    holography: HolographyConfig = field(default_factory=HolographyConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    rng_seed: int = 0

    def to_dict(self):
        return _to_plain(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        return validate_config(data)

    @classmethod
    def from_json(cls, text):
        return validate_config(json.loads(text))

    def replace(self, **sections):
        return dataclasses.replace(self, **sections)


# --------------------------------------------------------------------------
# (de)serialization
# --------------------------------------------------------------------------

def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


def _build(cls, data, path, errors, defaults):
    if not isinstance(data, dict):
        errors.append((path or "<root>", "expected an object"))
        return None
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            errors.append((f"{path}.{key}".lstrip("."), "unknown field"))
    kwargs = {}
    for name, f in known.items():
        sub = f"{path}.{name}".lstrip(".")
        if name not in data:
            defaults.append(sub)
            continue
        value = data[name]
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            built = _build(tp, value, sub, errors, defaults)
            if built is not None:
                kwargs[name] = built
            continue
        base = typing.get_args(tp)[0] if typing.get_origin(tp) is typing.Union else tp
        if value is None:
            if typing.get_origin(tp) is typing.Union:
                kwargs[name] = None
            else:
                errors.append((sub, "must not be null"))
            continue
        if base is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                errors.append((sub, "expected a number"))
                continue
            value = float(value)
        elif base is int:
            if isinstance(value, bool) or not isinstance(value, int):
                errors.append((sub, "expected an integer"))
                continue
        elif base is str and not isinstance(value, str):
            errors.append((sub, "expected a string"))
            continue
        elif base is tuple:
            if not isinstance(value, (list, tuple)):
                errors.append((sub, "expected a list"))
                continue
            value = _freeze(list(value))
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:  # pragma: no cover - guarded by the checks above
        errors.append((path or "<root>", str(exc)))
        return None


def _positive(errors, path, value, label=None):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        errors.append((path, f"{label or path.rsplit('.', 1)[-1]} must be > 0"))


def _probability(errors, path, value):
    if not (0.0 <= value <= 1.0):
        errors.append((path, "must lie in [0, 1]"))


def _semantic_errors(cfg):
    errs = []
    sp = cfg.species
    _positive(errs, "species.gamma_e_mhz", sp.gamma_e_mhz, "gamma_e")
    _positive(errs, "species.d2_wavelength_nm", sp.d2_wavelength_nm, "wavelength")
    _positive(errs, "species.c6_ghz_um6", sp.c6_ghz_um6, "c6")
    if sp.polarizability_hz_per_v2m2 is not None and sp.polarizability_hz_per_v2m2 < 0:
        errs.append(("species.polarizability_hz_per_v2m2", "polarizability must be >= 0"))

    cav = cfg.cavity
    _positive(errs, "cavity.mirror_radius_mm", cav.mirror_radius_mm, "R")
    _positive(errs, "cavity.length_mm", cav.length_mm, "L")
    _positive(errs, "cavity.wavelength_nm", cav.wavelength_nm, "wavelength")
    _positive(errs, "cavity.kappa_mhz", cav.kappa_mhz, "kappa")
    _positive(errs, "cavity.exposure_us", cav.exposure_us, "exposure")
    _positive(errs, "cavity.peak_rate_hz", cav.peak_rate_hz, "peak_rate")
    if cav.length_mm > 0 and cav.mirror_radius_mm > 0 and not cav.length_mm < 2 * cav.mirror_radius_mm:
        errs.append(("cavity.length_mm", "unstable resonator: need L < 2R"))
    if cav.delta_ac_mhz == 0:
        errs.append(("cavity.delta_ac_mhz", "atom-cavity detuning must be non-zero"))
    if cav.cooperativity < 0:
        errs.append(("cavity.cooperativity", "must be >= 0"))
    if cav.n_atoms < 0:
        errs.append(("cavity.n_atoms", "must be >= 0"))
    mf = cav.mode_family
    if not (len(mf.offsets_mhz) == len(mf.linewidths_mhz) == len(mf.amplitudes)) or not mf.offsets_mhz:
        errs.append(("cavity.mode_family", "offsets, linewidths and amplitudes need equal, non-zero length"))
    if any(w <= 0 for w in mf.linewidths_mhz):
        errs.append(("cavity.mode_family.linewidths_mhz", "linewidths must be > 0"))
    if any(a < 0 for a in mf.amplitudes) or mf.background < 0:
        errs.append(("cavity.mode_family.amplitudes", "amplitudes must be >= 0"))
    if cav.scan_points < 2 or not cav.scan_stop_mhz > cav.scan_start_mhz:
        errs.append(("cavity.scan_points", "need >= 2 points over an increasing range"))
    if cav.fit_peaks < 1:
        errs.append(("cavity.fit_peaks", "must be >= 1"))

    errs += _array_errors(cfg.array, "array")

    dr = cfg.drive
    _positive(errs, "drive.omega_mhz", dr.omega_mhz, "omega")
    _positive(errs, "drive.group_spacing_um", dr.group_spacing_um, "spacing")
    _positive(errs, "drive.t_max_us", dr.t_max_us, "t_max")
    if dr.delta_intermediate_ghz == 0:
        errs.append(("drive.delta_intermediate_ghz", "intermediate detuning must be non-zero"))
    if not dr.group_sizes or any((not isinstance(n, int)) or n < 1 or n > 12 for n in dr.group_sizes):
        errs.append(("drive.group_sizes", "group sizes must be integers in 1..12"))
    if dr.n_times < 6:
        errs.append(("drive.n_times", "need >= 6 time points"))
    if dr.shots < 1:
        errs.append(("drive.shots", "must be >= 1"))

    nz = cfg.noise
    for name in ("sigma_delta_mhz", "sigma_omega_rel", "quality_sigma_delta_mhz"):
        if getattr(nz, name) < 0:
            errs.append((f"noise.{name}", "must be >= 0"))
    if nz.quality_shots < 1:
        errs.append(("noise.quality_shots", "must be >= 1"))

    so = cfg.solver
    if so.grid_points < 5:
        errs.append(("solver.grid_points", "need at least 5 grid points"))
    _positive(errs, "solver.extent_mm", so.extent_mm, "extent")
    if not 0 < so.sor_omega < 2:
        errs.append(("solver.sor_omega", "relaxation factor must lie in (0, 2)"))
    _positive(errs, "solver.tol", so.tol, "tol")
    if any(abs(v) > 1000 for v in so.voltages_v):
        errs.append(("solver.voltages_v", "|V| must be <= 1 kV"))

    ho = cfg.holography
    n = ho.grid_size
    if n < 2 or n & (n - 1):
        errs.append(("holography.grid_size", "must be a power of two"))
    if ho.iterations < 1:
        errs.append(("holography.iterations", "must be >= 1"))

    de = cfg.detection
    for name in ("loading", "imaging_fidelity", "survival"):
        _probability(errs, f"detection.{name}", getattr(de, name))
    if de.n_records < 1:
        errs.append(("detection.n_records", "must be >= 1"))
    _positive(errs, "detection.lifetime_s", de.lifetime_s, "lifetime")
    if isinstance(cfg.rng_seed, bool) or not isinstance(cfg.rng_seed, int) or cfg.rng_seed < 0:
        errs.append(("rng_seed", "must be a non-negative integer"))
    return errs


def validate_config(cfg, *, return_defaults=False):
    """Validate a config record or its plain-dict form.

    Returns the :class:`ExperimentConfig` (and, with ``return_defaults``, the
    list of dotted field paths that were filled from defaults).  Raises
    :class:`ConfigError` listing every problem found.
    """
    defaults = []
    if isinstance(cfg, ExperimentConfig):
        # round-trip through the plain form so nested lists become tuples
        cfg = cfg.to_dict()
    errors = []
    built = _build(ExperimentConfig, cfg, "", errors, defaults)
    if built is not None:
        try:
            errors += _semantic_errors(built)
        except (TypeError, ValueError) as exc:
            errors.append(("<root>", f"malformed values: {exc}"))
    if errors:
        raise ConfigError(errors)
    return (built, defaults) if return_defaults else built


def load_config(path=None):
    """Read a JSON config file; ``None`` gives the all-defaults config."""
    if path is None:
        return validate_config({}, return_defaults=True)
    with open(path) as fh:
        return validate_config(json.load(fh), return_defaults=True)


def assumed_constants(cfg):
    """Constants the model relies on that the source measurements never state."""
    sp = cfg.species
    out = {
        "gamma_e_mhz": sp.gamma_e_mhz,
        "d2_wavelength_nm": sp.d2_wavelength_nm,
        "c6_ghz_um6": sp.c6_ghz_um6,
    }
    if sp.polarizability_hz_per_v2m2 is None:
        out["polarizability_hz_per_v2m2"] = "calibrated from solver.calibration_shift_khz"
    return out
