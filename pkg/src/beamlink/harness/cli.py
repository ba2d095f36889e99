"""Command line front end.

Exit codes: 0 on success, 2 when the scenario config fails validation
(including unreadable config files and pilot-capacity conflicts), 1 for
anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..estimation import PilotCapacityError
from .config import (PRESETS, ConfigError, ScenarioConfig, config_hash,
                     load_config, preset, validate)
from .results import write_result
from .runners import (DEFAULT_NMSE_SNR_DB, DEFAULT_SE_SNR_DB,
                      run_mu_trajectory, run_nmse_sweep, run_se_vs_snr,
                      run_su_trajectory)


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1; code 2 is reserved for config validation.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, with_output: bool = True) -> None:
    p.add_argument("--config", help="path to a scenario config JSON file")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named scenario preset (default: desk)")
    if with_output:
        p.add_argument("--seed", type=int, help="override the config master seed")
        p.add_argument("--trials",
                       help="trial count N, or shard START:STOP (default: config)")
        p.add_argument("--out", help="output path (default: <command>.<format>)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="beamlink",
                     description="Link-level simulator for wideband MIMO with "
                                 "two-stage digital combining")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nmse-sweep", parents=[], help="estimator NMSE vs pilot SNR")
    _add_common(p)
    p.add_argument("--snr", help="comma-separated SNR grid in dB")

    p = sub.add_parser("su-trajectory", help="single-user SE along the trajectory")
    _add_common(p)

    p = sub.add_parser("mu-trajectory", help="multi-user SE along the trajectory")
    _add_common(p)

    p = sub.add_parser("se-vs-snr", help="first-block SE vs SNR")
    _add_common(p)
    p.add_argument("--snr", help="comma-separated SNR grid in dB")

    p = sub.add_parser("validate-config", help="check a scenario config")
    _add_common(p, with_output=False)
    return parser


def _parse_trials(spec: str | None):
    if spec is None:
        return None
    txt = spec.strip()
    if ":" in txt:
        a, b = txt.split(":", 1)
        return (int(a), int(b))
    return (0, int(txt))


def _parse_snr(spec: str | None, default):
    if spec is None:
        return default
    return tuple(float(v) for v in spec.split(","))


def _load(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise ConfigError(["--config and --preset are mutually exclusive"])
    if args.config:
        try:
            return load_config(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read config {args.config}: {exc}"]) from exc
    return preset(args.preset or "desk")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load(args)
        if args.command == "validate-config":
            violations = validate(cfg)
            if violations:
                print("invalid scenario config:", file=sys.stderr)
                for v in violations:
                    print(f"- {v}", file=sys.stderr)
                return 2
            print(f"ok {config_hash(cfg)}")
            return 0

        trials = _parse_trials(args.trials)
        if args.command == "nmse-sweep":
            result = run_nmse_sweep(cfg, snr_db=_parse_snr(args.snr, DEFAULT_NMSE_SNR_DB),
                                    seed=args.seed, trial_range=trials)
        elif args.command == "se-vs-snr":
            result = run_se_vs_snr(cfg, snr_db=_parse_snr(args.snr, DEFAULT_SE_SNR_DB),
                                   seed=args.seed, trial_range=trials)
        elif args.command == "su-trajectory":
            result = run_su_trajectory(cfg, seed=args.seed, trial_range=trials)
        elif args.command == "mu-trajectory":
            result = run_mu_trajectory(cfg, seed=args.seed, trial_range=trials)
        else:  # unreachable; subparsers are required
            raise ValueError(f"unknown command {args.command!r}")

        out = args.out or f"{args.command}.{args.format}"
        paths = write_result(result, out, args.format)
        print(f"wrote {paths[0]} (sidecar {paths[1]})")
        return 0
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except PilotCapacityError as exc:
        print(f"invalid scenario config:\n- {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
