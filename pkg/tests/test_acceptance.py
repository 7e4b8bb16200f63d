"""End-to-end acceptance gate: one test (and one printed line) per criterion.

Run with `python3 -m pytest tests/test_acceptance.py -v`.  The Monte Carlo
sweep test dominates the runtime (~15-25 min single-core); everything else
finishes in a few minutes.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from vasense.bounds import MeanModel, bound_report, crb_known_position, fisher_blocks
from vasense.config import load_config
from vasense.exposure import coverage_estimate, eirp_baseline, eirp_proposed, watt_to_dbm
from vasense.trajectory import (Trajectory, error_covariance, generate_trajectory,
                                imu_preset, simulate_imu)
from vasense.experiments import (build_scene, run_eirp_vs_distance,
                                 run_imaging_demo, run_rmse_vs_snr, trial_rng)

from test_bounds import assemble, fd_fisher, small_model

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")


def test_1_fisher_blocks_match_finite_differences():
    """Analytic information blocks vs. a full-pipeline central-difference
    oracle, 20 randomized scenes, relative error < 1e-4, < 1 min."""
    t0 = time.time()
    worst = 0.0
    for seed in range(20):
        model = small_model(seed)
        sigma2 = 1e-12
        J_fd = fd_fisher(model, sigma2)
        J_an = assemble(fisher_blocks(model, sigma2))
        rel = np.linalg.norm(J_an - J_fd) / np.linalg.norm(J_fd)
        worst = max(worst, rel)
    elapsed = time.time() - t0
    ok = worst < 1e-4 and elapsed < 60.0
    report(1, ok, f"max relative error {worst:.2e} over 20 scenes "
                  f"(tol 1e-4), {elapsed:.1f}s (< 60s)")
    assert worst < 1e-4
    assert elapsed < 60.0


def test_2_imu_covariance_law():
    """Monte Carlo drift covariance over 1e4 runs vs. the closed form,
    every entry within 5% relative, M = 50, both presets, < 1 min."""
    t0 = time.time()
    M, runs = 50, 10**4
    traj = Trajectory(q=np.zeros((M, 3)), T=0.026, aperture=0.05)
    worst = {}
    for name in ("consumer", "high"):
        spec = imu_preset(name, T=0.026)
        C = error_covariance(spec, M).C_t
        rng = trial_rng(123, 2, 1)
        acc = np.zeros((M - 1, M - 1))
        for _ in range(runs):
            d = simulate_imu(traj, spec, rng).delta[1:]       # (M-1, 3)
            acc += d @ d.T
        C_mc = acc / (3.0 * runs)
        worst[name] = float(np.max(np.abs(C_mc - C) / C))
    elapsed = time.time() - t0
    ok = max(worst.values()) < 0.05 and elapsed < 60.0
    report(2, ok, "max entrywise relative deviation "
                  + ", ".join(f"{k}: {v:.3f}" for k, v in worst.items())
                  + f" (tol 0.05), {elapsed:.1f}s (< 60s)")
    assert max(worst.values()) < 0.05
    assert elapsed < 60.0


def test_3_bound_scaling():
    """CRB trace scales exactly as 1/SNR over a 40 dB sweep (< 1e-9
    relative); Bayesian bound monotone nonincreasing with a < 1% change
    over the last 10 dB (high-SNR floor)."""
    cfg = load_config()
    radio = cfg.radio()
    traj = generate_trajectory(cfg.trajectory_kind, cfg.aperture, radio,
                               T=cfg.slow_time_interval)
    prior = error_covariance(cfg.imu_spec(), traj.M)
    snrs = np.arange(0.0, 41.0, 5.0)
    crbs, bcrbs = [], []
    for snr in snrs:
        scene, alpha, s2 = build_scene(cfg, snr)
        model = MeanModel(alpha, cfg.target, traj.q, radio, cfg.array())
        rep = bound_report(model, s2, prior)
        crbs.append(np.trace(crb_known_position(fisher_blocks(model, s2))))
        bcrbs.append(rep.sqrt_trace_bcrb)
    crbs, bcrbs = np.array(crbs), np.array(bcrbs)
    scaling_dev = float(np.max(np.abs(
        crbs / crbs[0] * 10.0 ** (snrs / 10.0) - 1.0)))
    monotone = bool(np.all(np.diff(bcrbs) <= 1e-6 * bcrbs[:-1]))
    floor_change = float(abs(bcrbs[-1] - bcrbs[-3]) / bcrbs[-1])
    ok = scaling_dev < 1e-9 and monotone and floor_change < 0.01
    report(3, ok, f"1/SNR scaling deviation {scaling_dev:.2e} (tol 1e-9); "
                  f"monotone={monotone}; floor change over last 10 dB "
                  f"{100 * floor_change:.2f}% (< 1%)")
    assert scaling_dev < 1e-9
    assert monotone
    assert floor_change < 0.01


def test_4_monte_carlo_rmse_behavior():
    """Three-arm RMSE sweep, 100 trials/point, 5 cm aperture, 4 elements,
    consumer-grade IMU: (a) drift-free arm within [1, 2]x the known-
    trajectory bound for SNR in [0, 20] dB; (b) raw-IMU arm at 30 dB
    within [0.5, 2]x the prior-limited floor; (c) filtered arm <= 0.3x
    raw-IMU for SNR >= 10 dB; (d) filtered arm floors out: RMSE ratio
    30 dB / 20 dB > 0.7 while the bound ratio is ~0.32.  < 30 min."""
    t0 = time.time()
    cfg = load_config()
    recs = run_rmse_vs_snr(cfg, trials=100,
                           snr_grid_db=np.array([0.0, 10.0, 20.0, 30.0]))
    elapsed = time.time() - t0
    by = {r.snr_db: r for r in recs}
    floor = by[30.0].sqrt_bcrb

    a = {s: by[s].rmse_oracle_af / by[s].sqrt_crb for s in (0.0, 10.0, 20.0)}
    ok_a = all(1.0 <= v <= 2.0 for v in a.values())
    b = by[30.0].rmse_imu_af / floor
    ok_b = 0.5 <= b <= 2.0
    c = {s: by[s].rmse_ekf_af / by[s].rmse_imu_af for s in (10.0, 20.0, 30.0)}
    ok_c = all(v <= 0.3 for v in c.values())
    d_rmse = by[30.0].rmse_ekf_af / by[20.0].rmse_ekf_af
    d_crb = by[30.0].sqrt_crb / by[20.0].sqrt_crb
    ok_d = d_rmse > 0.7 and abs(d_crb - 10.0 ** -0.5) < 0.01
    ok = ok_a and ok_b and ok_c and ok_d and elapsed < 1800.0
    report(4, ok,
           "(a) drift-free/bound "
           + ", ".join(f"{s:g}dB: {v:.2f}" for s, v in a.items())
           + f" (band [1, 2]); (b) raw-IMU/floor {b:.2f} (band [0.5, 2]); "
             "(c) filtered/raw "
           + ", ".join(f"{s:g}dB: {v:.2f}" for s, v in c.items())
           + f" (<= 0.3); (d) filtered 30/20 {d_rmse:.2f} (> 0.7) vs bound "
             f"{d_crb:.2f}; {elapsed:.0f}s (< 1800s)")
    assert ok_a, a
    assert ok_b, b
    assert ok_c, c
    assert ok_d, (d_rmse, d_crb)
    assert elapsed < 1800.0


def test_5_imaging_orderings(tmp_path):
    """Single matched-seed realization at 10 dB: image peaks ordered
    drift-free >= filtered >= 0.9x drift-free >= raw-IMU, and the raw-IMU
    localization error exceeds the filtered one.  < 5 min."""
    t0 = time.time()
    cfg = load_config()
    out = run_imaging_demo(cfg, out_dir=str(tmp_path / "demo"))
    elapsed = time.time() - t0
    pk, er = out["peaks"], out["localization_errors"]
    ok = (pk["oracle"] >= pk["ekf"] >= 0.9 * pk["oracle"] >= pk["imu"]
          and er["imu"] > er["ekf"] and elapsed < 300.0)
    report(5, ok, f"peaks oracle {pk['oracle']:.3e} >= ekf {pk['ekf']:.3e} "
                  f">= 0.9*oracle >= imu {pk['imu']:.3e}; errors imu "
                  f"{er['imu']:.2e} m > ekf {er['ekf']:.2e} m; "
                  f"{elapsed:.0f}s (< 300s)")
    assert pk["oracle"] >= pk["ekf"]
    assert pk["ekf"] >= 0.9 * pk["oracle"]
    assert 0.9 * pk["oracle"] >= pk["imu"]
    assert er["imu"] > er["ekf"]
    assert elapsed < 300.0


def test_6_power_policy_gain():
    """Bound-driven power policy for the 50 cm aperture at 5 dB SNR:
    exceeds the fixed 25 dBm baseline by 8 +/- 2 dB somewhere in
    r in [10, 20] cm and saturates at 34 dBm for r >= 20 cm.  < 2 min."""
    t0 = time.time()
    cfg = load_config()
    out = run_eirp_vs_distance(cfg)
    elapsed = time.time() - t0
    pol = out["policy"]
    r = np.asarray(out["distances"])
    var = np.asarray(out["range_variance"]["A50cm"])
    prop = np.array([eirp_proposed(ri, vi, pol) for ri, vi in zip(r, var)])
    base = np.array([eirp_baseline(ri, pol) for ri in r])
    prop_dbm = np.array([watt_to_dbm(p) for p in prop])
    base_dbm = np.array([watt_to_dbm(p) for p in base])
    window = (r >= 0.10) & (r <= 0.20)
    best = float(np.max((prop_dbm - base_dbm)[window]))
    sat = bool(np.all(np.abs(prop_dbm[r >= 0.20] - 34.0) < 1e-9))
    ok = 6.0 <= best <= 10.0 and sat and elapsed < 120.0
    report(6, ok, f"max gain in [10, 20] cm: {best:.2f} dB (band [6, 10]); "
                  f"saturation at 34 dBm for r >= 20 cm: {sat}; "
                  f"{elapsed:.0f}s (< 120s)")
    assert 6.0 <= best <= 10.0
    assert sat
    assert elapsed < 120.0


def test_7_guard_band_coverage():
    """1e4 Gaussian range-error draws with guard factor 2.58: empirical
    coverage Pr{true >= guarded estimate} within [0.985, 0.995].  < 10 s."""
    t0 = time.time()
    cfg = load_config()
    cov = coverage_estimate(0.3, 0.005, 2.58, 10**4, trial_rng(cfg.seed, 7))
    elapsed = time.time() - t0
    ok = 0.985 <= cov <= 0.995 and elapsed < 10.0
    report(7, ok, f"coverage {cov:.4f} (band [0.985, 0.995]), "
                  f"{elapsed:.2f}s (< 10s)")
    assert 0.985 <= cov <= 0.995
    assert elapsed < 10.0


CLI_INI = """\
[experiment]
trials = 2
snr_grid_db = 10

[eirp]
apertures_m = 0.05
distances_m = 0.1, 0.3, 0.5
"""


def test_8_cli_determinism(tmp_path):
    """Every CLI subcommand run twice with the same seed produces
    byte-identical output files."""
    ini = tmp_path / "cli.ini"
    ini.write_text(CLI_INI)
    env = dict(os.environ, PYTHONPATH=os.path.join(REPO, "src"))

    def run(cmd, out):
        r = subprocess.run([sys.executable, "-m", "vasense.cli", cmd,
                            "--config", str(ini), "--seed", "11",
                            "--out", str(out)],
                           capture_output=True, text=True, env=env, cwd=REPO)
        assert r.returncode == 0, r.stdout + r.stderr

    def collect(out):
        if out.is_dir():
            return [(p.name, p.read_bytes()) for p in sorted(out.iterdir())]
        return [out.read_bytes()]

    mismatches = []
    for cmd in ("rmse-sweep", "eirp-curves", "imaging-demo",
                "bounds-table", "selftest"):
        suffix = "" if cmd == "imaging-demo" else ".csv"
        a, b = tmp_path / f"a_{cmd}{suffix}", tmp_path / f"b_{cmd}{suffix}"
        run(cmd, a)
        run(cmd, b)
        if collect(a) != collect(b):
            mismatches.append(cmd)
    ok = not mismatches
    report(8, ok, "byte-identical outputs for all five subcommands"
                  if ok else f"mismatching subcommands: {mismatches}")
    assert not mismatches


def test_9_module_property_suites():
    """All per-module property suites pass in under 5 minutes."""
    t0 = time.time()
    r = subprocess.run([sys.executable, "-m", "pytest", "tests", "-q",
                        "--ignore", os.path.join("tests", "test_acceptance.py")],
                       capture_output=True, text=True, cwd=REPO)
    elapsed = time.time() - t0
    tail = r.stdout.strip().splitlines()[-1] if r.stdout.strip() else r.stderr
    ok = r.returncode == 0 and elapsed < 300.0
    report(9, ok, f"{tail}, {elapsed:.0f}s (< 300s)")
    assert r.returncode == 0, r.stdout + r.stderr
    assert elapsed < 300.0
