"""Command-line runs: one subcommand per experiment, config in, CSV/JSON out.

Every run writes into ``<out>/<command>/<label>/`` and finishes with a
``manifest.json`` holding the resolved config, seed, toolkit version, output
hashes and wall time.  ``cavryd replay <manifest>`` reruns a manifest and
checks the outputs are byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .analysis import (
    DetectionParams,
    fit_survival_decay,
    fit_lorentzian_sum,
    histogram_threshold,
    survival_curve,
    synth_detection_data,
    three_image_stats,
    write_fit_json,
    write_series_csv,
)
from .cavity import (
    cooperativity_from_shift,
    dispersive_shift,
    fsr,
    mode_waist,
    simulate_spectrum,
    write_spectrum_csv,
)
from .core_types import KHZ, MHZ, MM, UM, ConfigError, ExperimentConfig, assumed_constants, load_config, validate_config
from .dynamics import NoiseModel, blockade_group, build_hamiltonian, collective_rabi_scan, write_trajectory_csv
from .electrostatics import build_assembly_scene, field_at, quadratic_r2, solve, stark_sweep, write_field_slice_csv
from .holography import TargetPattern, spot_grid, weighted_gs, write_hologram
from .atom_light import polarizability_from_shift, stark_shift

COMMANDS = ("cavity-spectrum", "blockade-rabi", "stark-sweep", "holography", "detection-stats")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_plain(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    outputs: list = field(default_factory=list)
    wall_time_s: float = 0.0
    ok: bool = True
    defaults_applied: list = field(default_factory=list)
    label: str = ""

    def write(self, path):
        write_json(path, asdict(self))

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))


def _children(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# --------------------------------------------------------------------------
# commands: each returns (summary, ok) after writing its files into outdir
# --------------------------------------------------------------------------

def cmd_cavity_spectrum(cfg, seed, outdir, threads=1):
    cav = cfg.cavity
    gamma = cfg.species.gamma_e
    kappa = cav.kappa_mhz * MHZ
    delta_ac = cav.delta_ac_mhz * MHZ
    shift = dispersive_shift(cav.n_atoms, cav.cooperativity, gamma, kappa, delta_ac)
    geom = cav.geometry()
    family = cav.family()
    scan = np.linspace(cav.scan_start_mhz, cav.scan_stop_mhz, cav.scan_points) * MHZ
    exposure = cav.exposure_us * 1e-6
    s_empty, s_atoms = _children(seed, 2)
    fits = {}
    for name, shift_in, s in (("empty", 0.0, s_empty), ("atoms", shift, s_atoms)):
        counts = simulate_spectrum(family, scan, exposure, cav.peak_rate_hz, shift_in, seed=s)
        write_spectrum_csv(os.path.join(outdir, f"spectrum_{name}.csv"), scan, counts, exposure)
        sigma = np.sqrt(np.maximum(counts, 1.0))
        fit = fit_lorentzian_sum(scan, counts.astype(float), cav.fit_peaks, sigma=sigma)
        write_fit_json(os.path.join(outdir, f"fit_{name}.json"), fit, seed=s)
        fits[name] = fit
    measured = fits["atoms"]["center_0"] - fits["empty"]["center_0"]
    sig = math.hypot(fits["atoms"].sigma("center_0"), fits["empty"].sigma("center_0"))
    inferred_c = (cooperativity_from_shift(measured, cav.n_atoms, kappa, gamma, delta_ac)
                  if cav.n_atoms > 0 else None)
    inferred_c_sigma = abs(inferred_c * sig / measured) if inferred_c is not None and measured else None
    ok = all(f.converged for f in fits.values())
    summary = {
        "fsr_hz": fsr(geom.length),
        "mode_waist_m": mode_waist(geom),
        "injected_shift_hz": shift,
        "measured_shift_hz": measured,
        "measured_shift_sigma_hz": sig,
        "inferred_cooperativity": inferred_c,
        "inferred_cooperativity_sigma": inferred_c_sigma,
        "fits_converged": ok,
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary, ok


def _stark_ramp(shift_at_125, amplitude_v):
    """Per-shot quasi-static Stark detuning from a triangle ramp of +-amplitude_v."""

    def draw(rng):
        v = amplitude_v * (2.0 * abs(2.0 * rng.random() - 1.0) - 1.0)
        return shift_at_125 * (v / 125.0) ** 2

    return draw


def _quality(result):
    f = result.fit
    q = result.quality_factor
    rel = math.hypot(f.sigma("omega") / f["omega"], f.sigma("tau") / f["tau"])
    return q, abs(q) * rel


def cmd_blockade_rabi(cfg, seed, outdir, threads=1):
    dr, nz = cfg.drive, cfg.noise
    omega = dr.omega_mhz * MHZ
    c6 = cfg.species.c6
    times = np.linspace(0.0, dr.t_max_us * 1e-6, dr.n_times)
    noise = NoiseModel(nz.sigma_delta_mhz * MHZ, nz.sigma_omega_rel)
    seeds = _children(seed, len(dr.group_sizes) + 1)
    results = []
    for n, s in zip(dr.group_sizes, seeds):
        h = build_hamiltonian(blockade_group(n, dr.group_spacing_um * UM), c6, omega, dr.detuning_mhz * MHZ)
        results.append(collective_rabi_scan(h, times, noise, dr.shots, s, threads=threads))
    write_trajectory_csv(os.path.join(outdir, "trajectories.csv"), results)
    base = next((r.omega for r in results if r.n_atoms == 1), omega)
    groups = []
    for r in results:
        d = r.summary()
        d["ratio_to_n1"] = r.omega / base
        d["sqrt_n"] = math.sqrt(r.n_atoms)
        groups.append(d)

    # quality factor with and without the quasi-static piezo-ramp Stark shift
    n_q = max(dr.group_sizes)
    h = build_hamiltonian(blockade_group(n_q, dr.group_spacing_um * UM), c6, omega, dr.detuning_mhz * MHZ)
    qnoise = NoiseModel(nz.quality_sigma_delta_mhz * MHZ, nz.sigma_omega_rel)
    ramp = _stark_ramp(nz.stark_shift_khz_at_125v * KHZ, nz.piezo_scan_v)
    plain = collective_rabi_scan(h, times, qnoise, nz.quality_shots, seeds[-1], threads=threads)
    scanned = collective_rabi_scan(h, times, qnoise, nz.quality_shots, seeds[-1], extra_detuning=ramp,
                                   threads=threads)
    write_trajectory_csv(os.path.join(outdir, "quality_trajectories.csv"), [plain, scanned])
    q0, s0 = _quality(plain)
    q1, s1 = _quality(scanned)
    quality = {
        "n_group": n_q,
        "sigma_delta_hz": qnoise.sigma_delta,
        "piezo_scan_v": nz.piezo_scan_v,
        "max_stark_shift_hz": nz.stark_shift_khz_at_125v * KHZ * (nz.piezo_scan_v / 125.0) ** 2,
        "unscanned": {"quality_factor": q0, "sigma": s0, "fit": plain.fit.to_dict()},
        "scanned": {"quality_factor": q1, "sigma": s1, "fit": scanned.fit.to_dict()},
        "difference": q1 - q0,
        "within_ci": abs(q1 - q0) <= 2.0 * math.hypot(s0, s1),
    }
    ok = all(r.fit.converged for r in results) and plain.fit.converged and scanned.fit.converged
    summary = {"omega_hz": omega, "c6_hz_m6": c6, "groups": groups, "quality": quality, "fits_converged": ok}
    write_json(os.path.join(outdir, "rabi_summary.json"), summary)
    return summary, ok


def cmd_stark_sweep(cfg, seed, outdir, threads=1):
    so = cfg.solver
    kw = dict(tol=so.tol, max_iters=so.max_iters, omega=so.sor_omega)
    voltages = list(so.voltages_v)

    def builder(shielded):
        return lambda v: build_assembly_scene(shielded, (v, 0.0), so.grid_points, so.extent_mm * MM)

    raw = {name: stark_sweep(builder(sh), voltages, 0.0, **kw)
           for name, sh in (("unshielded", False), ("shielded", True))}
    alpha = cfg.species.polarizability_hz_per_v2m2
    cal_grid = solve(builder(True)(so.calibration_voltage_v), **kw)
    if alpha is None:
        e_cal = field_at(cal_grid, (0.0, 0.0, 0.0)).magnitude
        alpha = polarizability_from_shift(so.calibration_shift_khz * KHZ, e_cal)
    write_field_slice_csv(os.path.join(outdir, "field_slice_shielded.csv"), cal_grid, axis=2)

    rows = {"voltage_v": voltages}
    for name, pts in raw.items():
        rows[f"field_{name}_v_per_m"] = [p.field for p in pts]
        rows[f"shift_{name}_hz"] = [stark_shift(alpha, p.field) for p in pts]
    write_series_csv(os.path.join(outdir, "stark_sweep.csv"), rows)

    iref = int(np.argmax(np.abs(voltages)))
    pu, ps = raw["unshielded"][iref], raw["shielded"][iref]
    lower = ps.field <= ps.field_floor
    ratio = pu.field / (ps.field_floor if lower else ps.field)
    converged = all(p.converged for pts in raw.values() for p in pts) and cal_grid.converged
    summary = {
        "alpha_hz_per_v2m2": alpha,
        "reference_voltage_v": voltages[iref],
        "shielding_factor": ratio,
        "shielding_factor_is_lower_bound": bool(lower),
        "shift_suppression": ratio**2,
        "shielded_shift_at_calibration_hz": stark_shift(alpha, field_at(cal_grid, (0, 0, 0)).magnitude),
        "quadratic_r2_shielded": quadratic_r2(voltages, rows["shift_shielded_hz"]),
        "quadratic_r2_unshielded": quadratic_r2(voltages, rows["shift_unshielded_hz"]),
        "solver_converged": converged,
        "iterations": {name: [p.iterations for p in pts] for name, pts in raw.items()},
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary, converged


def cmd_holography(cfg, seed, outdir, threads=1):
    ho = cfg.holography
    if ho.spots:
        target = TargetPattern(tuple(tuple(s) for s in ho.spots))
    else:
        target = spot_grid(ho.rows, ho.cols, ho.spacing_bins, ho.offset_bins, ho.grid_size)
    res = weighted_gs(target, ho.iterations, ho.grid_size, seed=seed)
    write_hologram(os.path.join(outdir, "mask"), res)
    summary = {"uniformity": res.uniformity, "efficiency": res.efficiency, "n_spots": len(target)}
    write_json(os.path.join(outdir, "summary.json"), summary)
    return summary, True


def cmd_detection_stats(cfg, seed, outdir, threads=1):
    de = cfg.detection
    params = DetectionParams(de.loading, de.imaging_fidelity, de.survival, de.background_mean, de.atom_mean)
    s_rec, s_life = _children(seed, 2)
    records, counts = synth_detection_data(params, de.n_records, seed=s_rec)
    stats = three_image_stats(records)
    truth = {"loading_probability": de.loading, "imaging_fidelity": de.imaging_fidelity,
             "survival_probability": de.survival}
    est = stats.to_dict()
    for key, val in truth.items():
        prop = getattr(stats, key)
        est[key]["truth"] = val
        est[key]["within_2sigma"] = prop.covers(val, z=2.0)

    hist = counts[: de.histogram_samples, 0]
    thr = histogram_threshold(hist)
    vals, occ = np.unique(hist, return_counts=True)
    write_series_csv(os.path.join(outdir, "histogram.csv"), {"counts": vals, "occurrences": occ})

    times = np.linspace(0.0, de.lifetime_t_max_s, de.lifetime_points)
    frac = survival_curve(times, de.lifetime_s, de.lifetime_atoms, seed=s_life)
    fit = fit_survival_decay(times, frac, de.lifetime_atoms)
    write_series_csv(os.path.join(outdir, "survival.csv"), {"time_s": times, "surviving_fraction": frac})
    write_fit_json(os.path.join(outdir, "lifetime_fit.json"), fit, seed=s_life)
    life = {
        "lifetime_s": fit["T"],
        "sigma_s": fit.sigma("T"),
        "truth_s": de.lifetime_s,
        "within_3sigma": abs(fit["T"] - de.lifetime_s) <= 3 * fit.sigma("T"),
    }
    summary = {
        "n_records": de.n_records,
        "estimates": est,
        "histogram": {"threshold": thr.threshold, "fidelity": thr.fidelity, "unimodal": thr.unimodal,
                      "means": thr.means, "sigmas": thr.sigmas, "weights": thr.weights},
        "lifetime": life,
    }
    write_json(os.path.join(outdir, "detection_stats.json"), summary)
    return summary, bool(fit.converged and not thr.unimodal)


HANDLERS = {
    "cavity-spectrum": cmd_cavity_spectrum,
    "blockade-rabi": cmd_blockade_rabi,
    "stark-sweep": cmd_stark_sweep,
    "holography": cmd_holography,
    "detection-stats": cmd_detection_stats,
}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def run_command(command, cfg, seed, out_root, label, threads=1, defaults=()):
    """Run one command into ``out_root/command/label`` and write its manifest."""
    outdir = os.path.join(out_root, command, label)
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    summary, ok = HANDLERS[command](cfg, seed, outdir, threads)
    wall = time.perf_counter() - t0
    outputs = [{"path": name, "sha256": sha256(os.path.join(outdir, name))}
               for name in sorted(os.listdir(outdir)) if name != "manifest.json"]
    manifest = RunManifest(command, cfg.to_dict(), seed, __version__, outputs, wall, bool(ok), list(defaults), label)
    manifest.write(os.path.join(outdir, "manifest.json"))
    return manifest, summary, outdir


def _timestamp():
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def build_parser():
    p = argparse.ArgumentParser(prog="cavryd", description="Cavity-Rydberg tweezer array simulations.")
    p.add_argument("--version", action="version", version=f"cavryd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("all",):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file (defaults for missing fields)")
        sp.add_argument("--seed", type=int, help="RNG seed (overrides rng_seed in the config)")
        sp.add_argument("--out", default="out", help="output root directory")
        sp.add_argument("--label", help="run label (default: UTC timestamp)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap")
    rp = sub.add_parser("replay", help="rerun a manifest and compare output hashes")
    rp.add_argument("manifest")
    rp.add_argument("--out", default="out")
    rp.add_argument("--label")
    rp.add_argument("--threads", type=int, default=1)
    return p


def _report(manifest, summary, outdir):
    print(f"[{manifest.command}] {'ok' if manifest.ok else 'FLAGGED'} in {manifest.wall_time_s:.2f} s -> {outdir}")
    print(json.dumps(_plain(_headline(manifest.command, summary)), indent=2, sort_keys=True))


def _headline(command, s):
    if command == "cavity-spectrum":
        keys = ("injected_shift_hz", "measured_shift_hz", "measured_shift_sigma_hz", "inferred_cooperativity")
        return {k: s[k] for k in keys}
    if command == "blockade-rabi":
        return {"omega_n_hz": [g["omega_hz"] for g in s["groups"]],
                "ratio_to_n1": [g["ratio_to_n1"] for g in s["groups"]],
                "quality_unscanned": s["quality"]["unscanned"]["quality_factor"],
                "quality_scanned": s["quality"]["scanned"]["quality_factor"]}
    if command == "stark-sweep":
        keys = ("shielding_factor", "shift_suppression", "shielded_shift_at_calibration_hz", "alpha_hz_per_v2m2")
        return {k: s[k] for k in keys}
    if command == "detection-stats":
        return {k: v["value"] for k, v in s["estimates"].items()} | {"lifetime_s": s["lifetime"]["lifetime_s"]}
    return s


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args)
        cfg, defaults = load_config(args.config)
        if args.config is None:
            defaults = ["*"]
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path or '<root>'}: {msg}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seed = cfg.rng_seed if args.seed is None else args.seed
    if seed < 0:
        print("config error: seed must be >= 0", file=sys.stderr)
        return 2
    cfg = cfg.replace(rng_seed=seed)
    label = args.label or _timestamp()
    commands = COMMANDS if args.command == "all" else (args.command,)
    ok = True
    for cmd in commands:
        try:
            manifest, summary, outdir = run_command(cmd, cfg, seed, args.out, label, args.threads, defaults)
        except ValueError as exc:
            print(f"[{cmd}] error: {exc}", file=sys.stderr)
            ok = False
            continue
        _report(manifest, summary, outdir)
        ok &= manifest.ok
    return 0 if ok else 1


def _replay(args):
    old = RunManifest.read(args.manifest)
    cfg = validate_config(old.config)
    label = args.label or f"{old.label}-replay"
    manifest, summary, outdir = run_command(old.command, cfg, old.seed, args.out, label, args.threads,
                                            old.defaults_applied)
    before = {o["path"]: o["sha256"] for o in old.outputs}
    after = {o["path"]: o["sha256"] for o in manifest.outputs}
    same = before == after
    print(f"[replay {old.command}] outputs {'identical' if same else 'DIFFER'} -> {outdir}")
    if not same:
        for name in sorted(set(before) | set(after)):
            if before.get(name) != after.get(name):
                print(f"  {name}", file=sys.stderr)
    return 0 if same and manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
