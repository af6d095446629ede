"""Command-line entry point: ``erach simulate | sweep-* | calibrate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .agents import PROTOCOLS

log = logging.getLogger("erach")

SWEEPS = {
    "sweep-sigma": (harness.sweep_position_error, "sigma2", "final_reward"),
    "sweep-rho": (harness.sweep_rho, "rho", "throughput_bps"),
    "sweep-state": (harness.sweep_state_mask, "mask", "final_reward"),
    "sweep-density": (harness.sweep_density, "mean_spacing", "throughput_bps"),
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, type=Path, help="YAML experiment config")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int, help="training episodes per replica")
    p.add_argument("--replicas", type=int)
    p.add_argument("--out", type=Path, default=Path("runs/latest"))
    p.add_argument("--print-config", action="store_true", help="echo the resolved config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erach", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="train (if needed) and evaluate one protocol"))
    for name in SWEEPS:
        _common(sub.add_parser(name, help=f"ablation sweep ({name[6:]})"))
    cal = sub.add_parser("calibrate", help="fit ref_gain so RACH reaches a target throughput")
    cal.add_argument("--config", required=True, type=Path)
    cal.add_argument("--target-mbps", type=float, default=harness.TARGET_RACH_THROUGHPUT / 1e6)
    cal.add_argument("--episodes", type=int, default=2)
    return parser


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "protocol", None):
        o["protocol"] = args.protocol
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "replicas", None) is not None:
        o["replicas"] = args.replicas
    if getattr(args, "episodes", None) is not None and args.command != "calibrate":
        o["training"] = {"episodes": args.episodes}
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = harness.load_config(args.config, _overrides(args))
    except (OSError, harness.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "calibrate":
        gain, got = harness.calibrate_link_budget(cfg, args.target_mbps * 1e6, args.episodes)
        print(json.dumps({"ref_gain": gain, "rach_throughput_bps": got}))
        return 0

    if args.print_config:
        sys.stdout.write(harness.dump_config(cfg))
        return 0

    if args.command == "simulate":
        def progress(replica, ep):
            if ep.episode % 50 == 0:
                log.info("replica %d episode %d reward %.3f", replica, ep.episode, ep.cumulative_reward.mean())

        record = harness.run(cfg, args.out, callback=progress)
        s = record.summary
        print(f"{cfg.protocol} config={record.config_hash} out={args.out}")
        for key in harness.SUMMARY_METRICS:
            print(f"  {key:24s} {s[key]['mean']:.6g} +/- {s[key]['max_dev']:.3g}")
        if not record.ok:
            for r in record.replicas:
                if r.diverged:
                    print(f"replica {r.replica} diverged: {r.diverged}", file=sys.stderr)
            return 1
        return 0

    fn, key, value = SWEEPS[args.command]
    result = fn(cfg, out=args.out)
    for point, (mean, dev) in result.table(key, value).items():
        print(f"{key}={point}  {value}={mean:.6g} +/- {dev:.3g}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
