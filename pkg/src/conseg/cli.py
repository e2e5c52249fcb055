"""``conseg`` command line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import io as vio
from . import pipeline
from .config import ConfigError, RunConfig, load_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("conseg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, *, in_help=None, out_help=None, split=None):
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    if in_help:
        p.add_argument("--in", dest="inp", type=Path, help=in_help)
    if out_help:
        p.add_argument("--out", type=Path, help=out_help)
    if split:
        p.add_argument("--split", default=split, choices=vio.SPLITS)
    p.add_argument("--workers", type=int, help="parallel case workers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conseg", description="Conformal uncertainty for binary segmentation.")
    parser.add_argument("--version", action="version", version=f"conseg {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic cohort and manifest")
    _common(p, out_help="cohort directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-cases", type=int)

    p = sub.add_parser("split", help="reassign manifest splits by seeded shuffle")
    _common(p, in_help="input manifest", out_help="output manifest")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("sweep", help="choose the base-model optimal threshold")
    _common(p, in_help="manifest", out_help="run directory", split="validation")
    p.add_argument("--model", type=Path, help="model file to write")

    p = sub.add_parser("calibrate", help="compute the conformal threshold")
    _common(p, in_help="manifest", out_help="run directory", split="calibration")
    p.add_argument("--model", type=Path, help="model file to complete")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("predict", help="classify voxels and write case metrics")
    _common(p, in_help="manifest", out_help="run directory", split="test")
    p.add_argument("--model", type=Path)

    p = sub.add_parser("validate", help="UR/DSC correlation, UR threshold, group tests")
    _common(p, in_help="test metrics CSV", out_help="output directory")
    p.add_argument("--calibration-metrics", type=Path)
    p.add_argument("--threshold", type=Path, help="existing threshold.json to reuse")

    p = sub.add_parser("report", help="consolidate a run directory")
    _common(p, in_help="run directory")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(workers=args.workers, model=getattr(args, "model", None),
                             alpha=getattr(args, "alpha", None))
    return cfg


def _run(args) -> None:
    cfg = _config(args)
    cmd = args.command
    inp = getattr(args, "inp", None)
    out = getattr(args, "out", None)
    if cmd == "synth":
        syn = cfg.synth
        if args.seed is not None:
            syn = replace(syn, seed=args.seed)
        if args.n_cases is not None:
            syn = replace(syn, n_cases=args.n_cases)
        path = pipeline.cmd_synth(replace(cfg, synth=syn), out)
        print(path)
    elif cmd == "split":
        if args.seed is not None:
            cfg = replace(cfg, split=replace(cfg.split, seed=args.seed))
        src = inp or cfg.manifest_path
        print(pipeline.cmd_split(cfg, src, out or src))
    elif cmd == "sweep":
        run_dir = out or cfg.output_dir
        if args.model is None and cfg.model is None:
            cfg = replace(cfg, model=run_dir / "model.json")
        bmot = pipeline.cmd_sweep(cfg, inp or cfg.manifest_path, run_dir, split=args.split)
        print(f"bmot {bmot:.2f}")
    elif cmd == "calibrate":
        if args.model is None and cfg.model is None and out is not None:
            cfg = replace(cfg, model=out / "model.json")
        model = pipeline.cmd_calibrate(cfg, inp or cfg.manifest_path, split=args.split)
        print(f"ncst {model.ncst:.6g} (n={model.n_cal})")
    elif cmd == "predict":
        run_dir = out or cfg.output_dir
        if args.model is None and cfg.model is None:
            cfg = replace(cfg, model=run_dir / "model.json")
        _, summary = pipeline.cmd_predict(cfg, inp or cfg.manifest_path, run_dir,
                                          split=args.split)
        cov = summary["coverage"]
        print(f"{summary['n_cases']} cases, {summary['n_failed']} failed, coverage "
              + ("n/a" if cov is None else f"{cov:.6g}"))
    elif cmd == "validate":
        run_dir = out or cfg.output_dir
        metrics = inp or run_dir / "metrics_test.csv"
        cal = args.calibration_metrics
        if cal is None and args.threshold is None:
            default = run_dir / "metrics_calibration.csv"
            cal = default if default.is_file() else None
        res = pipeline.cmd_validate(cfg, metrics, run_dir, calibration_metrics=cal,
                                    threshold_path=args.threshold)
        sp = res["correlation"].get("spearman", {})
        print(f"threshold {res['threshold']['threshold']:.6g}, spearman r "
              f"{sp.get('r', float('nan')):.6g}")
    elif cmd == "report":
        rep = pipeline.cmd_report(cfg, inp or cfg.output_dir)
        print(f"report written ({len(rep)} keys)")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except ConfigError as exc:
        print(f"conseg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.DataError, vio.ManifestError, vio.NiftiError, vio.ModelFileError,
            FileNotFoundError) as exc:
        print(f"conseg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"conseg: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
