import json
import math

import numpy as np
import pytest

from cavryd.core_types import (
    RB87,
    ConfigError,
    ExperimentConfig,
    TweezerArray,
    assumed_constants,
    from_angular,
    load_config,
    to_angular,
    validate_config,
)


def test_angular_round_trip():
    assert to_angular(1.0) == pytest.approx(2 * math.pi)
    assert from_angular(to_angular(2.72e6)) == pytest.approx(2.72e6, rel=1e-15)


def test_species_si_units():
    assert RB87.gamma_e == pytest.approx(6.065e6)
    assert RB87.d2_wavelength == pytest.approx(780.241e-9)
    assert RB87.c6 == pytest.approx(33.27e9 * 1e-36)


def test_defaults_validate_and_report_filled_paths():
    cfg, defaults = validate_config({}, return_defaults=True)
    assert isinstance(cfg, ExperimentConfig)
    assert "cavity" in defaults and "rng_seed" in defaults


def test_partial_config_fills_nested_defaults():
    cfg, defaults = validate_config({"cavity": {"length_mm": 19.0}}, return_defaults=True)
    assert cfg.cavity.length_mm == 19.0
    assert cfg.cavity.kappa_mhz == 0.84
    assert "cavity.kappa_mhz" in defaults
    assert "cavity.length_mm" not in defaults


def test_json_round_trip_is_identity():
    cfg = ExperimentConfig()
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again.to_json() == cfg.to_json()
    assert json.loads(cfg.to_json())["cavity"]["length_mm"] == 19.25


def test_negative_length_rejected_with_path():
    with pytest.raises(ConfigError) as exc:
        validate_config({"cavity": {"length_mm": -1.0}})
    assert ("cavity.length_mm", "L must be > 0") in exc.value.errors


def test_unstable_resonator_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config({"cavity": {"length_mm": 25.0, "mirror_radius_mm": 10.0}})
    assert any("unstable" in m for _, m in exc.value.errors)


def test_unknown_and_mistyped_fields_all_reported():
    with pytest.raises(ConfigError) as exc:
        validate_config({"cavity": {"bogus": 1, "kappa_mhz": "wide"}, "drive": {"n_times": 2}})
    paths = {p for p, _ in exc.value.errors}
    assert {"cavity.bogus", "cavity.kappa_mhz", "drive.n_times"} <= paths


def test_duplicate_sites_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config({"array": {"sites_um": [[0, 0, 0], [0, 0, 0]]}})
    assert any("duplicate" in m for _, m in exc.value.errors)


def test_tweezer_grid_positions():
    arr = TweezerArray.grid(2, 2, 2.5)
    pos = arr.positions
    assert pos.shape == (4, 3)
    d = np.linalg.norm(pos[0] - pos[3])
    assert d == pytest.approx(2.5e-6 * math.sqrt(2))


def test_load_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"rng_seed": 7}))
    cfg, defaults = load_config(str(path))
    assert cfg.rng_seed == 7
    assert "rng_seed" not in defaults


def test_assumed_constants_lists_uncalibrated_polarizability():
    out = assumed_constants(ExperimentConfig())
    assert "polarizability_hz_per_v2m2" in out
    assert out["c6_ghz_um6"] == 33.27
