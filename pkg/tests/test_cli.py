import csv
import json
import os
import subprocess
import sys

import pytest

from cavryd.cli import COMMANDS, main

FAST = {
    "drive": {"n_times": 61},
    "noise": {"quality_shots": 20},
    "solver": {"grid_points": 33, "voltages_v": [0.0, 50.0, 100.0]},
    "holography": {"grid_size": 64, "rows": 3, "cols": 3, "spacing_bins": 4, "offset_bins": [6, 6], "iterations": 10},
    "detection": {"n_records": 20000, "histogram_samples": 5000},
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def load(out, cmd, label, name):
    with open(os.path.join(out, cmd, label, name)) as fh:
        return json.load(fh)


def hashes(out, cmd, label):
    return {o["path"]: o["sha256"] for o in load(out, cmd, label, "manifest.json")["outputs"]}


@pytest.mark.parametrize("cmd", COMMANDS)
def test_each_command_writes_manifest(tmp_path, cmd):
    cfg = write_config(tmp_path, FAST)
    out = str(tmp_path / "out")
    assert main([cmd, "--config", cfg, "--seed", "4", "--out", out, "--label", "a"]) == 0
    man = load(out, cmd, "a", "manifest.json")
    assert man["command"] == cmd and man["seed"] == 4 and man["ok"]
    assert man["config"]["rng_seed"] == 4
    assert man["version"] and man["outputs"]


def test_default_label_is_timestamp(tmp_path):
    cfg = write_config(tmp_path, FAST)
    out = tmp_path / "out"
    assert main(["holography", "--config", cfg, "--out", str(out)]) == 0
    (label,) = os.listdir(out / "holography")
    assert label.endswith("Z") and "T" in label


def test_unknown_field_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"cavity": {"kappa_mhz": -1, "nonsense": 3}})
    assert main(["cavity-spectrum", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "cavity.nonsense" in err and "cavity.kappa_mhz" in err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["holography", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


def test_infeasible_holography_flagged(tmp_path):
    cfg = write_config(tmp_path, {"holography": {"grid_size": 64, "spots": [[10, 10], [11, 10]]}})
    assert main(["holography", "--config", cfg, "--out", str(tmp_path / "o"), "--label", "x"]) == 1


def test_zero_atoms_gives_zero_shift(tmp_path):
    cfg = write_config(tmp_path, {"cavity": {"n_atoms": 0}})
    out = str(tmp_path / "out")
    assert main(["cavity-spectrum", "--config", cfg, "--seed", "2", "--out", out, "--label", "z"]) == 0
    s = load(out, "cavity-spectrum", "z", "summary.json")
    assert abs(s["measured_shift_hz"]) < 3 * s["measured_shift_sigma_hz"]
    assert s["inferred_cooperativity"] is None


def test_doubled_atom_number_doubles_shift(tmp_path):
    out = str(tmp_path / "out")
    shifts = []
    for n, label in ((23.3, "one"), (46.6, "two")):
        cfg = write_config(tmp_path, {"cavity": {"n_atoms": n}}, f"{label}.json")
        assert main(["cavity-spectrum", "--config", cfg, "--seed", "8", "--out", out, "--label", label]) == 0
        s = load(out, "cavity-spectrum", label, "summary.json")
        shifts.append((s["measured_shift_hz"], s["measured_shift_sigma_hz"], s["injected_shift_hz"]))
    (m1, s1, i1), (m2, s2, i2) = shifts
    assert i2 == pytest.approx(2 * i1)
    assert abs(m2 - 2 * m1) < 3 * (s2 ** 2 + 4 * s1 ** 2) ** 0.5


def test_cavity_defaults_within_nominal_band(tmp_path):
    out = str(tmp_path / "out")
    assert main(["cavity-spectrum", "--seed", "0", "--out", out, "--label", "d"]) == 0
    s = load(out, "cavity-spectrum", "d", "summary.json")
    assert 150e3 <= s["measured_shift_hz"] <= 263e3
    assert 0.33 <= s["inferred_cooperativity"] <= 0.69


def test_stark_sweep_zero_voltage_row(tmp_path):
    cfg = write_config(tmp_path, FAST)
    out = str(tmp_path / "out")
    assert main(["stark-sweep", "--config", cfg, "--out", out, "--label", "v"]) == 0
    with open(os.path.join(out, "stark-sweep", "v", "stark_sweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["voltage_v"]) == 0.0
    assert float(rows[0]["shift_shielded_hz"]) == 0.0 and float(rows[0]["shift_unshielded_hz"]) == 0.0


def test_single_spot_holography(tmp_path):
    cfg = write_config(tmp_path, {"holography": {"grid_size": 64, "spots": [[40, 20]], "iterations": 10}})
    out = str(tmp_path / "out")
    assert main(["holography", "--config", cfg, "--out", out, "--label", "s"]) == 0
    assert load(out, "holography", "s", "summary.json")["uniformity"] == 1.0


def test_arbitrary_49_spot_layout(tmp_path):
    spots = [[100 + 9 * (k // 7) + (k % 3), 90 + 8 * (k % 7)] for k in range(49)]
    cfg = write_config(tmp_path, {"holography": {"spots": spots, "iterations": 20}})
    out = str(tmp_path / "out")
    assert main(["holography", "--config", cfg, "--out", out, "--label", "s"]) == 0
    assert load(out, "holography", "s", "summary.json")["n_spots"] == 49


def test_replay_and_repeat_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, FAST)
    out = str(tmp_path / "out")
    assert main(["all", "--config", cfg, "--seed", "11", "--out", out, "--label", "r1"]) == 0
    assert main(["all", "--config", cfg, "--seed", "11", "--out", out, "--label", "r2"]) == 0
    for cmd in COMMANDS:
        assert hashes(out, cmd, "r1") == hashes(out, cmd, "r2")
        assert main(["replay", os.path.join(out, cmd, "r1", "manifest.json"), "--out", out]) == 0
        assert hashes(out, cmd, "r1") == hashes(out, cmd, "r1-replay")


def test_different_seed_changes_output(tmp_path):
    cfg = write_config(tmp_path, FAST)
    out = str(tmp_path / "out")
    main(["detection-stats", "--config", cfg, "--seed", "1", "--out", out, "--label", "a"])
    main(["detection-stats", "--config", cfg, "--seed", "2", "--out", out, "--label", "b"])
    assert hashes(out, "detection-stats", "a") != hashes(out, "detection-stats", "b")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cavryd", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "cavryd" in r.stdout
