"""Benchmark the compiled imaging kernels against the pure-NumPy fallback.

Times backprojection and matched-field evaluation on a representative
workload (desk-scale aperture, 4-element array, 3-D voxel grid) and
reports the speedup.  Also cross-checks that both backends agree.

Run:  python3 benchmarks/benchmark_kernels.py [--voxels N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import vasense._kernels as kern
from vasense.config import load_config
from vasense.experiments import build_scene
from vasense.imaging import ImageGrid
from vasense.trajectory import generate_trajectory
from vasense.waveform import synthesize_cube


def timeit(fn, *args, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--voxels", type=int, default=20000,
                    help="approximate grid size (total voxels)")
    args = ap.parse_args()

    cfg = load_config()
    radio = cfg.radio()
    arr = cfg.array()
    scene, _, _ = build_scene(cfg, 20.0)
    traj = generate_trajectory(cfg.trajectory_kind, cfg.aperture, radio,
                               T=cfg.slow_time_interval)
    rng = np.random.default_rng(0)
    cube = synthesize_cube(scene, arr, traj.q, radio, rng)
    ant = arr.element_positions(traj.q)

    half = cfg.search_half_extent
    spacing = 2.0 * half / (round(args.voxels ** (1.0 / 3.0)) - 1)
    grid = ImageGrid.centered(cfg.target, np.full(3, half), spacing)
    pts = grid.voxel_centers()
    print(f"workload: M={traj.M} N={arr.N} K={radio.K}, {pts.shape[0]} voxels")

    pairs = [("backproject", kern._backproject_points_numpy,
              getattr(kern, "_backproject_points_jit", None)),
             ("matched-field", kern._matched_field_points_numpy,
              getattr(kern, "_matched_field_points_jit", None))]
    window = 8
    for name, f_np, f_jit in pairs:
        t_np, (v_np, _) = timeit(f_np, cube.values, ant, pts, radio.two_b_over_c,
                                 radio.kappa, window)
        line = f"{name:>14}: numpy {t_np * 1e3:8.1f} ms"
        if f_jit is not None:
            f_jit(cube.values, ant, pts[:8], radio.two_b_over_c, radio.kappa, window)
            t_jit, (v_jit, _) = timeit(f_jit, cube.values, ant, pts,
                                       radio.two_b_over_c, radio.kappa, window)
            dev = float(np.max(np.abs(v_np - v_jit)) / np.max(np.abs(v_np)))
            line += (f"   numba {t_jit * 1e3:8.1f} ms   speedup {t_np / t_jit:6.1f}x"
                     f"   max rel dev {dev:.2e}")
        else:
            line += "   (numba backend unavailable)"
        print(line)
    print(f"active backend: {kern.backend_name()}")


if __name__ == "__main__":
    main()
