"""Command-line interface for the simulation experiments.

Subcommands:
  rmse-sweep    localization RMSE vs SNR for the three estimator arms
  eirp-curves   bound-driven transmit-power policy vs target distance
  imaging-demo  single-realization image comparison (oracle / IMU / EKF)
  bounds-table  CRB / BCRB position bounds over the SNR grid
  selftest      fast internal consistency checks

All outputs are CSV (plus PGM previews for imaging-demo) and are
byte-reproducible for a fixed configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import sys

from vasense import experiments
from vasense.config import load_config
from vasense.exposure import watt_to_dbm


def _add_common(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("--config", default=None, help="INI configuration file")
    p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    p.add_argument("--out", default=default_out, help="output path")
    p.add_argument("--trials", type=int, default=None, help="override the trial count")
    p.add_argument("--threads", type=int, default=1, help="worker threads for trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vasense", description="virtual-aperture sensing simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, out in [("rmse-sweep", "rmse_sweep.csv"),
                      ("eirp-curves", "eirp_curves.csv"),
                      ("imaging-demo", "imaging_demo"),
                      ("bounds-table", "bounds_table.csv"),
                      ("selftest", "selftest.csv")]:
        p = sub.add_parser(name)
        _add_common(p, out)
    return parser


def _config(args) -> "experiments.ExperimentConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)

    if args.command == "rmse-sweep":
        records = experiments.run_rmse_vs_snr(cfg, threads=args.threads, out=args.out)
        for r in records:
            print(f"SNR {r.snr_db:6.1f} dB  oracle {r.rmse_oracle_af:.3e}  "
                  f"imu {r.rmse_imu_af:.3e}  ekf {r.rmse_ekf_af:.3e}  "
                  f"sqrt(CRB) {r.sqrt_crb:.3e}  sqrt(BCRB) {r.sqrt_bcrb:.3e}")
        print(f"wrote {args.out}")
        return 0

    if args.command == "eirp-curves":
        out = experiments.run_eirp_vs_distance(cfg, out=args.out)
        base = watt_to_dbm(out["policy"].eirp_base)
        print(f"baseline {base:.1f} dBm, curves: {', '.join(out['range_variance'])}")
        print(f"wrote {args.out}")
        return 0

    if args.command == "imaging-demo":
        summary = experiments.run_imaging_demo(cfg, out_dir=args.out)
        for name in ("oracle", "imu", "ekf"):
            print(f"{name:>6}: peak {summary['peaks'][name]:.4e}  "
                  f"localization error {summary['localization_errors'][name]:.3e} m")
        print(f"wrote {args.out}/")
        return 0

    if args.command == "bounds-table":
        rows = experiments.run_bounds_table(cfg, out=args.out)
        for row in rows:
            print(f"SNR {row['snr_db']:6.1f} dB  sqrt(CRB) {row['sqrt_crb']:.3e}  "
                  f"sqrt(BCRB) {row['sqrt_bcrb']:.3e}")
        print(f"wrote {args.out}")
        return 0

    if args.command == "selftest":
        checks = experiments.run_selftest(cfg)
        with open(args.out, "w", newline="") as fh:
            for line in cfg.metadata():
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["check", "passed", "detail"])
            for name, ok, detail in checks:
                writer.writerow([name, int(ok), detail])
                print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        print(f"wrote {args.out}")
        return 0 if all(ok for _, ok, _ in checks) else 1

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
