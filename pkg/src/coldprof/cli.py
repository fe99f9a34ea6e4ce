"""coldprof command line: gate / report / diff / simulate.

Exit codes: 0 success (for ``gate``: below threshold), 1 error, 2 for
``gate`` means the app is profile-worthy. Option values resolve as
flags > environment > config file > defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .detector import DetectorConfig, detect
from .ingest import (
    IngestError,
    bundle_to_dict,
    ingest,
    load_root_config,
)
from .metrics import DEFAULT_RATIO_THRESHOLD, InsufficientSamplesError
from .package_mapper import RootConfig
from .report import diff_phases, diff_to_dict, render_diff, render_report
from .simulate import (
    SimSpec,
    check_rare_detectability,
    render_report as render_sim_report,
    report_to_dict,
    simulate,
)
from .trace_model import TraceError

_ENV_PREFIX = "COLDPROF_"

_DEFAULTS = {
    "threshold_ratio": DEFAULT_RATIO_THRESHOLD,
    "overhead_pct": 5.0,
    "rare_util_pct": 1.0,
    "min_samples": 1000,
    "top_k": 3,
}


def _resolve(name: str, flag_value, config_thresholds: dict, cast):
    """flags > environment > config file > defaults."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(_ENV_PREFIX + name.upper())
    if env is not None:
        return cast(env)
    if name in config_thresholds:
        return cast(config_thresholds[name])
    return _DEFAULTS[name]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--traces", required=True, help="trace directory")
    parser.add_argument("--roots", help="config file with source roots")
    parser.add_argument("--threshold-ratio", type=float, default=None)
    parser.add_argument("--lenient", action="store_true")


def _add_detector_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--overhead-pct", type=float, default=None)
    parser.add_argument("--rare-util-pct", type=float, default=None)
    parser.add_argument("--min-samples", type=int, default=None)
    parser.add_argument("--top-k", type=int, default=None)
    parser.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coldprof",
        description="cold-start library usage profiler (post-mortem analyzer)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gate = sub.add_parser("gate", help="screen an app by its init/exec ratio")
    _add_common(gate)

    report = sub.add_parser("report", help="full inefficiency report")
    _add_common(report)
    _add_detector_flags(report)

    diff = sub.add_parser("diff", help="before/after latency comparison")
    diff.add_argument("before", help="trace directory before optimization")
    diff.add_argument("after", help="trace directory after optimization")
    diff.add_argument("--roots", help="config file with source roots")
    diff.add_argument("--lenient", action="store_true")
    diff.add_argument("--format", choices=("text", "json"), default="text")

    sim = sub.add_parser("simulate", help="Monte-Carlo accuracy validation")
    sim.add_argument("--p", required=True, help="comma-separated true frequencies")
    sim.add_argument("--n", type=int, default=10000)
    sim.add_argument("--trials", type=int, default=2000)
    sim.add_argument("--z", type=float, default=1.96)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--format", choices=("text", "json"), default="text")
    return parser


def _load_config(args) -> tuple[RootConfig, dict]:
    roots_file = getattr(args, "roots", None) or os.environ.get(_ENV_PREFIX + "ROOTS")
    if roots_file:
        return load_root_config(roots_file)
    return RootConfig(), {}


def _ingest(args, roots: RootConfig, thresholds: dict):
    threshold = _resolve(
        "threshold_ratio", getattr(args, "threshold_ratio", None), thresholds, float
    )
    return ingest(
        args.traces, roots, threshold=threshold, lenient=args.lenient
    )


def cmd_gate(args) -> int:
    roots, thresholds = _load_config(args)
    bundle = _ingest(args, roots, thresholds)
    gate = bundle.gate
    verdict = (
        "profile-worthy" if gate.profile_worthy else "insignificant cold-start impact"
    )
    print(
        f"init/exec ratio {gate.ratio:.4f} vs threshold {gate.threshold:.2f}: {verdict}"
    )
    return 2 if gate.profile_worthy else 0


def cmd_report(args) -> int:
    roots, thresholds = _load_config(args)
    bundle = _ingest(args, roots, thresholds)
    cfg = DetectorConfig(
        overhead_floor=_resolve("overhead_pct", args.overhead_pct, thresholds, float)
        / 100.0,
        rare_utilization=_resolve(
            "rare_util_pct", args.rare_util_pct, thresholds, float
        )
        / 100.0,
        min_samples=_resolve("min_samples", args.min_samples, thresholds, int),
        top_k_paths=_resolve("top_k", args.top_k, thresholds, int),
    )
    try:
        bundle.findings = detect(bundle.stats, bundle.module_tree, bundle.cct, cfg)
    except InsufficientSamplesError as exc:
        bundle.findings = []
        bundle.warnings.append(f"detection skipped: {exc}")
    if args.format == "json":
        print(json.dumps(bundle_to_dict(bundle), indent=2))
    else:
        for warning in bundle.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        sys.stdout.write(render_report(bundle, top_k=cfg.top_k_paths))
    return 0


def cmd_diff(args) -> int:
    roots, thresholds = _load_config(args)
    before = ingest(args.before, roots, lenient=args.lenient)
    after = ingest(args.after, roots, lenient=args.lenient)
    diffs = diff_phases(before.metas, after.metas)
    if args.format == "json":
        print(json.dumps(diff_to_dict(diffs), indent=2))
    else:
        sys.stdout.write(render_diff(diffs))
    return 0


def cmd_simulate(args) -> int:
    p_values = tuple(float(p) for p in args.p.split(",") if p.strip())
    spec = SimSpec(
        p_true=p_values, n_samples=args.n, trials=args.trials, z=args.z, seed=args.seed
    )
    report = simulate(spec)
    detection = {
        p: check_rare_detectability(p, args.n, args.trials, seed=args.seed)
        for p in p_values
    }
    if args.format == "json":
        obj = report_to_dict(report)
        obj["detection_rate"] = [
            {"p_true": p, "detected": detection[p]} for p in p_values
        ]
        print(json.dumps(obj, indent=2))
    else:
        print(render_sim_report(report))
        for p in p_values:
            print(f"detection rate at p={p:g}: {detection[p]:.4f}")
    return 0


_COMMANDS = {
    "gate": cmd_gate,
    "report": cmd_report,
    "diff": cmd_diff,
    "simulate": cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (IngestError, TraceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
