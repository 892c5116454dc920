"""Command-line front end: ``chainqfi <mode> [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import EXTENDED_N, MODES, load_file, resolve
from .errors import ChainQfiError, ConfigurationError
from .experiments import RUNNERS, estimate_runtime

log = logging.getLogger("chainqfi")

# flag -> config key, type
FLAGS = {
    "--chain-length": ("chain_length", int),
    "--coupling": ("coupling", float),
    "--time": ("time", float),
    "--time-grid": ("time_grid", str),
    "--slots": ("slots", int),
    "--lambda-true": ("lambda_true", float),
    "--lambda-init": ("lambda_init", float),
    "--epsilon": ("epsilon", float),
    "--restarts": ("restarts", int),
    "--seed": ("seed", int),
    "--runs": ("runs", int),
    "--max-iterations": ("max_iterations", int),
    "--workers": ("workers", int),
    "--arm": ("arm", str),
    "--pulse-file": ("pulse_file", str),
    "--theta": ("theta", float),
    "--phi": ("phi", float),
    "--samples": ("bound_samples", int),
    "--c-strong": ("c_strong", float),
    "--output-dir": ("output_dir", str),
}
SWITCHES = {
    "--extended": "extended",
    "--uncontrolled": "uncontrolled",
    "--subsample-stop": "subsample_stop",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with flat key = value settings; flags override it")
    for flag, (key, typ) in FLAGS.items():
        common.add_argument(flag, dest=key, type=typ, default=None)
    for flag, key in SWITCHES.items():
        common.add_argument(flag, dest=key, action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="chainqfi", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    helps = {
        "qfi-sweep": "optimised vs uncontrolled QFI/T^2 over a grid of probing times",
        "populations": "site populations along an optimised (or uncontrolled) evolution",
        "estimate": "Monte-Carlo runs of the adaptive estimation protocol",
        "oracle": "two-spin closed forms next to their simulations",
        "bound-check": "QFI <= 4 T^2 on random pulses",
    }
    for mode in MODES:
        sub.add_parser(mode, parents=[common], help=helps[mode])
    return parser


def error_record(exc: BaseException) -> dict:
    kind = getattr(exc, "kind", "internal")
    return {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, key) for key, _ in FLAGS.values()}
    overrides.update({key: getattr(args, key) for key in SWITCHES.values()})
    overrides["mode"] = args.mode
    try:
        file_values = load_file(args.config) if args.config else {}
        file_values.pop("mode", None)
        cfg = resolve(file_values, overrides)
        if cfg.mode == "qfi-sweep" and cfg.chain_length >= EXTENDED_N:
            print(f"extended sweep: roughly {estimate_runtime(cfg) / 60:.1f} min upper estimate",
                  file=sys.stderr)
        RUNNERS[cfg.mode](cfg)
    except ChainQfiError as exc:
        print(json.dumps(error_record(exc)), file=sys.stderr)
        return 2 if isinstance(exc, ConfigurationError) else 1
    print(json.dumps({"status": "ok", "mode": cfg.mode, "output_dir": cfg.output_dir}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
