"""Command line front end: run experiments, check guarantees, sweep axes.

    onebitfl run    --config exp.ini [--seed N] [--out DIR]
    onebitfl verify --suite all [--trials N] [--seed N] [--dp-no-margin]
    onebitfl sweep  --config exp.ini --axis beta --values 0,0.1,0.2 [--out DIR]

Exit codes: 0 success, 1 runtime or failed check, 2 usage/config error.
ONEBITFL_OUTDIR supplies the output directory when --out is absent.
"""

import argparse
import copy
import json
import os
import subprocess
import sys
from dataclasses import replace

from .config import ConfigError, config_to_dict, load_config
from .engine import run_training
from .privacy import PrivacySpec
from .verify import CSV_HEADER, run_suites

OUTDIR_ENV = "ONEBITFL_OUTDIR"
SWEEP_AXES = ("M", "beta", "epsilon")


def _resolve_out(cli_out, cfg_out="") -> str:
    return cli_out or cfg_out or os.environ.get(OUTDIR_ENV) or "."


def _code_version() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        proc = subprocess.run(["git", "describe", "--always", "--dirty"],
                              capture_output=True, text=True, timeout=5, cwd=here)
        if proc.returncode == 0 and proc.stdout.strip():
            return proc.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = _resolve_out(args.out, cfg.out)
    os.makedirs(out, exist_ok=True)
    result = run_training(cfg, out_dir=out)
    manifest = {
        "config": config_to_dict(cfg),
        "seed": cfg.seed,
        "code_version": _code_version(),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"scheme={cfg.scheme} rounds={cfg.schedule.rounds} "
          f"final_test_acc={result.final_test_acc!r} out={out}")
    return 0


def cmd_verify(args) -> int:
    names = []
    for item in args.suite or []:
        names.extend(part.strip() for part in item.split(",") if part.strip())
    if not names:
        print("error: no suites requested (use --suite, e.g. --suite all)",
              file=sys.stderr)
        return 2
    try:
        reports = run_suites(names, trials=args.trials, seed=args.seed,
                             dp_with_margin=not args.dp_no_margin)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(CSV_HEADER)
    for rep in reports:
        print(rep.csv_line())
    out = args.out or os.environ.get(OUTDIR_ENV)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "verify_report.csv"), "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for rep in reports:
                fh.write(rep.csv_line() + "\n")
    failed = [r.name for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not raw_values:
        print("error: --values is empty", file=sys.stderr)
        return 2
    rows = []
    for raw in raw_values:
        run_cfg = copy.deepcopy(cfg)
        try:
            if args.axis == "M":
                run_cfg.m_clients = int(raw)
            elif args.axis == "beta":
                run_cfg.attack = replace(run_cfg.attack, beta=float(raw))
            else:
                run_cfg.privacy = PrivacySpec(
                    epsilon=float(raw), delta1=run_cfg.privacy.delta1, enabled=True)
        except ValueError as exc:
            raise ConfigError(f"bad {args.axis} value '{raw}': {exc}") from exc
        if args.seed is not None:
            run_cfg.seed = args.seed
        run_cfg.validate()
        result = run_training(run_cfg)
        rows.append((raw, result.final_test_acc))
        print(f"{args.axis}={raw}: final_test_acc={result.final_test_acc!r}")
    out = args.out or cfg.out or os.environ.get(OUTDIR_ENV)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "sweep.csv"), "w") as fh:
            fh.write(f"{args.axis},final_test_acc\n")
            for raw, acc in rows:
                fh.write(f"{raw},{acc!r}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onebitfl",
        description="One-bit federated aggregation: experiments and guarantee checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True, help="path to an INI config")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run statistical guarantee checks")
    p_ver.add_argument("--suite", action="append", default=None,
                       help="suite name (repeatable, comma-separable): "
                            "unbiasedness, variance, byzantine, dp, decay, all")
    p_ver.add_argument("--trials", type=int, default=None,
                       help="Monte Carlo trials per check (default: per-suite)")
    p_ver.add_argument("--seed", type=int, default=0, help="base seed")
    p_ver.add_argument("--dp-no-margin", action="store_true",
                       help="drop the privacy slack from the quantization range "
                            "(the dp suite is then expected to fail)")
    p_ver.add_argument("--out", default=None, help="directory for verify_report.csv")
    p_ver.set_defaults(func=cmd_verify)

    p_sw = sub.add_parser("sweep", help="repeat a run over one axis")
    p_sw.add_argument("--config", required=True, help="path to the base INI config")
    p_sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sw.add_argument("--values", required=True,
                      help="comma-separated values for the chosen axis")
    p_sw.add_argument("--seed", type=int, default=None, help="override config seed")
    p_sw.add_argument("--out", default=None, help="output directory")
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
