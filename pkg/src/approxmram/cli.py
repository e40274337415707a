"""``approxmram`` command line: calibration, energy curve, training sweeps.

Exit codes: 0 success, 2 configuration error, 3 calibration failure,
4 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, default_config_text, load_config
from .energy import (
    ENERGY_CURVE_HEADER,
    calibrate_all,
    dump_energy_model,
    dump_variability_model,
    energy_curve_rows,
)
from .experiments import RunLog, Sweep, tier_grid, uniform_grid, write_reports
from .memory import TwoTier, Uniform
from .mnist import DatasetError, IdxError, load_dataset
from .switching import CalibrationError, dump_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_DATA = 4


class DataError(RuntimeError):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file ([section] key = value)")
    common.add_argument("--out", type=Path, help="output file (directory for calibrate)")
    common.add_argument("--seed", type=int, help="seed base; run i uses seed + i")
    common.add_argument("--no-variability", action="store_true", help="size pulses without device variability")

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--jobs", type=int, default=1, help="parallel training runs")
    train_opts.add_argument("--epochs", type=int, help="override training epochs")
    train_opts.add_argument("--seeds", type=int, help="override number of seeds per point")
    train_opts.add_argument("--resume", action="store_true", help="reuse finished runs from OUT.runs.csv")
    train_opts.add_argument("--mnist-dir", type=Path, help="directory holding the MNIST IDX files")

    p = argparse.ArgumentParser(prog="approxmram", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="fit switching, energy and variability models")
    sub.add_parser("energy-curve", parents=[common], help="bit programming energy versus target BER")
    sub.add_parser("sweep-ber", parents=[common, train_opts], help="recognition versus uniform BER")
    sub.add_parser("sweep-tier", parents=[common, train_opts], help="recognition versus two-tier profile")
    t = sub.add_parser("train", parents=[common, train_opts], help="train one profile")
    t.add_argument("--ber", type=float, default=1e-10, help="HSB (or uniform) BER")
    t.add_argument("--n-lsb", type=int, default=0)
    t.add_argument("--ber-lsb", type=float, help="LSB BER (defaults to --ber)")
    sub.add_parser("default-config", help="print a config file holding every default")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else load_config()
    if args.seed is not None:
        cfg = replace(cfg, seed_base=args.seed)
    if args.no_variability:
        cfg = replace(cfg, use_variability=False)
    if getattr(args, "epochs", None) is not None:
        if args.epochs < 1:
            raise ConfigError("--epochs must be >= 1")
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg = replace(cfg, train=replace(cfg.train, n_seeds=args.seeds))
    if getattr(args, "mnist_dir", None) is not None:
        cfg = replace(cfg, mnist_dir=args.mnist_dir)
    if getattr(args, "jobs", 1) < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def _models(cfg: ExperimentConfig):
    return calibrate_all(cfg.device, cfg.anchors, cfg.energy_anchor, cfg.variability_anchor,
                         cfg.use_variability, cfg.v_pulse)


def _emit(text: str, path: Path | None):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def cmd_calibrate(cfg: ExperimentConfig) -> int:
    models = _models(cfg)
    out = cfg.out or Path("calibration")
    out.mkdir(parents=True, exist_ok=True)
    (out / "switching.txt").write_text(dump_model(models.switching))
    (out / "energy.txt").write_text(dump_energy_model(models.energy))
    (out / "variability.txt").write_text(dump_variability_model(models.variability))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target_ber", "anchor_t_pulse_ns", "fitted_t_pulse_ns", "relative_residual"])
    anchors = dict((b, t) for t, b in cfg.anchors)
    for ber, rel in models.switching.fit_residuals:
        t = anchors[ber]
        writer.writerow([repr(ber), repr(t), repr(t * (1 + rel)), f"{rel:+.6f}"])
    (out / "residuals.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_energy_curve(cfg: ExperimentConfig) -> int:
    rows = energy_curve_rows(_models(cfg))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ENERGY_CURVE_HEADER)
    for ber, t, e, flag, saving, inc in rows:
        writer.writerow([f"{ber:.0e}", f"{t:.6f}", f"{e:.6f}", flag, f"{saving:.6f}", f"{inc:.6f}"])
    _emit(buf.getvalue(), cfg.out)
    return EXIT_OK


def _datasets(cfg: ExperimentConfig):
    try:
        return load_dataset(cfg.mnist_dir, "train"), load_dataset(cfg.mnist_dir, "test")
    except (DatasetError, IdxError, OSError) as exc:
        raise DataError(f"{exc} (set --mnist-dir, [train] mnist_dir or MNIST_DIR)") from None


def _sweep(cfg: ExperimentConfig, schemes, args) -> int:
    models = _models(cfg)
    train, test = _datasets(cfg)
    tc = cfg.train_config()
    run_log = None
    if args.resume:
        if cfg.out is None:
            raise ConfigError("--resume needs --out")
    if cfg.out is not None:
        run_log = RunLog(cfg.out.with_name(cfg.out.name + ".runs.csv"), tc.epochs)
        if not args.resume:
            run_log.path.unlink(missing_ok=True)
            run_log.done.clear()

    def progress(msg):
        print(msg, file=sys.stderr, flush=True)

    reports = Sweep(tc, models, train, test, jobs=args.jobs, run_log=run_log, progress=progress).run(schemes)
    text = write_reports(reports)
    _emit(text, cfg.out)
    return EXIT_OK


def cmd_sweep_ber(cfg, args) -> int:
    return _sweep(cfg, uniform_grid(cfg.uniform_bers), args)


def cmd_sweep_tier(cfg, args) -> int:
    return _sweep(cfg, tier_grid(cfg.n_lsb_list, cfg.lsb_bers, cfg.hsb_ber), args)


def cmd_train(cfg, args) -> int:
    if args.n_lsb == 0 and args.ber_lsb is None:
        scheme = Uniform(args.ber)
    else:
        scheme = TwoTier(args.n_lsb, args.ber, args.ber if args.ber_lsb is None else args.ber_lsb)
    if not 0 < args.ber < 1 or not 0 <= args.n_lsb <= 16:
        raise ConfigError("--ber must lie in (0, 1) and --n-lsb in [0, 16]")
    return _sweep(cfg, [scheme], args)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(default_config_text())
        return EXIT_OK
    try:
        cfg = _resolve(args)
        handler = {
            "calibrate": lambda: cmd_calibrate(cfg),
            "energy-curve": lambda: cmd_energy_curve(cfg),
            "sweep-ber": lambda: cmd_sweep_ber(cfg, args),
            "sweep-tier": lambda: cmd_sweep_tier(cfg, args),
            "train": lambda: cmd_train(cfg, args),
        }[args.command]
        return handler()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
