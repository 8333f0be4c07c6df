"""Command-line entry points.

collect      snapshot the host into a canonical bundle
appraise     evaluate a bundle (optionally against a previous one)
diff         structural comparison of two bundles
policy-init  derive a baseline policy from the running host
worker       internal: run one sub-collector and emit its partial bundle

Exit codes: 0 = pass/ok, 1 = appraisal produced alerts, 2 = operational
error (unreadable input, malformed bundle or policy, collection failure).
Findings never exit 2; operational errors never exit 1.
"""

from __future__ import annotations

import argparse
import sys

from .appraiser import appraise, render_text, serialize_report
from .bundlediff import diff_graphs, render_diff_text, serialize_diff
from .collect import (
    ALL_MODULES,
    collect_bundle,
    read_bundle,
    run_worker_module,
    write_bundle,
)
from .errors import UspectError
from .policy import derive_host_policy, load_policy, save_policy
from .sysinfo import hash_files

EXIT_PASS = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2


def _scope_arg(value):
    if value == "root":
        return "root_only"
    if value == "all":
        return value
    if value.startswith("uid:"):
        parts = value[4:].split(",")
        if parts and all(p.isdigit() for p in parts):
            return value
    raise argparse.ArgumentTypeError(
        f"scope must be root, all, or uid:<n>[,<n>...], not {value!r}"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uspect",
        description="Userspace integrity measurement: collect and appraise "
        "snapshots of system, process, and loader state.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="snapshot the host into a bundle")
    p.add_argument("--scope", type=_scope_arg, default="root",
                   help="root (default), all, or uid:<n>[,<n>...]")
    p.add_argument("--out", default="-", help="bundle path, - for stdout")
    p.add_argument("--modules", default=",".join(ALL_MODULES),
                   help=f"comma-separated subset of {','.join(ALL_MODULES)}")
    p.add_argument("--manifest", default=None,
                   help="file of hash-target patterns, one per line")
    p.add_argument("--in-process", action="store_true",
                   help="run sub-collectors in this process (no fan-out)")

    p = sub.add_parser("appraise", help="evaluate a bundle against policy")
    p.add_argument("--snapshot", required=True, help="bundle to appraise")
    p.add_argument("--previous", default=None,
                   help="earlier bundle enabling the cross-snapshot rules")
    p.add_argument("--policy", required=True, help="policy document path")
    p.add_argument("--format", choices=("text", "machine"), default="text")

    p = sub.add_parser("diff", help="structural difference of two bundles")
    p.add_argument("bundle_a")
    p.add_argument("bundle_b")
    p.add_argument("--format", choices=("text", "machine"), default="text")

    p = sub.add_parser("policy-init",
                       help="write a baseline policy derived from this host")
    p.add_argument("--out", required=True)
    p.add_argument("--pin", action="append", default=[],
                   help="path to measure now and pin in critical_files "
                        "(repeatable, glob patterns allowed)")

    p = sub.add_parser("worker")  # internal fan-out target, takes internal scope form
    p.add_argument("module", choices=("system", "hashes", "processes"))
    p.add_argument("--scope", default="root_only")
    p.add_argument("--manifest", default=None)
    p.add_argument("--no-elf", action="store_true")
    return parser


def cmd_collect(args):
    graph = collect_bundle(
        scope=args.scope,
        modules=tuple(m for m in args.modules.split(",") if m),
        manifest=args.manifest,
        use_subprocesses=not args.in_process,
    )
    size = write_bundle(graph, args.out)
    print(
        f"wrote {args.out} ({size} bytes, {len(graph)} nodes, "
        f"{len(graph.edges())} edges, {len(graph.meta.warnings)} warnings)",
        file=sys.stderr,
    )
    return EXIT_PASS


def cmd_appraise(args):
    current = read_bundle(args.snapshot)
    previous = read_bundle(args.previous) if args.previous else None
    policy = load_policy(args.policy)
    report = appraise(current, previous, policy)
    if args.format == "machine":
        sys.stdout.buffer.write(serialize_report(report))
    else:
        sys.stdout.write(render_text(report))
    return EXIT_FINDINGS if report.alerts() else EXIT_PASS


def cmd_diff(args):
    before = read_bundle(args.bundle_a)
    after = read_bundle(args.bundle_b)
    diff = diff_graphs(before, after)
    if args.format == "machine":
        sys.stdout.buffer.write(serialize_diff(diff))
    else:
        sys.stdout.write(render_diff_text(diff))
    return EXIT_PASS


def cmd_policy_init(args):
    policy, warnings = derive_host_policy()
    if args.pin:
        measurements, errors = hash_files(args.pin)
        for m in measurements:
            policy.critical_files[m.path] = m.digest
        for e in errors:
            warnings.append(f"pin skipped {e.path}: {e.reason}")
    save_policy(policy, args.out)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_PASS


def cmd_worker(args):
    graph = run_worker_module(
        args.module,
        scope=args.scope,
        manifest=args.manifest,
        with_elf=not args.no_elf,
    )
    write_bundle(graph, "-")
    return EXIT_PASS


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "collect": cmd_collect,
        "appraise": cmd_appraise,
        "diff": cmd_diff,
        "policy-init": cmd_policy_init,
        "worker": cmd_worker,
    }
    try:
        return handlers[args.command](args)
    except UspectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
