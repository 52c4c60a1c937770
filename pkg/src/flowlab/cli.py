"""Command-line entry point: ``flowlab run|stability|oracles|sweep``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import FlowlabError
from .harness import DEFAULTS_HELP, analyze_stability, parse_config, run_experiment, sweep, worker_count


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    bundle = run_experiment(cfg, args.output)
    st = bundle.status
    print(f"{st['status']}: {st['reason']}  steps={st['steps']}  t={st['t']:.6g}  -> {bundle.directory}")
    if "fit" in st:
        print("fit: " + json.dumps(st["fit"], sort_keys=True))
    return bundle.exit_code


def _cmd_stability(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.output) if args.output else cfg.output_dir() / "stability.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    res = analyze_stability(cfg, out)
    for w in res["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    verdict = res.get("verdict")
    low = res.get("eigenvalues", [])[:4]
    print(f"verdict: {verdict}  lowest: {', '.join(f'{v:.6g}' for v in low)}  -> {out}")
    return 0


def _cmd_oracles(args) -> int:
    from .oracles import run_all, write_manifest

    results = run_all(args.M)
    write_manifest(results, args.output)
    for r in results:
        print(f"{r.name}: resolutions {r.resolution}")
    print(f"wrote {args.output}")
    return 0


def _cmd_sweep(args) -> int:
    results = sweep(args.directory, args.output, worker_count())
    bad = [r for r in results if r["exit_code"] != 0]
    for r in results:
        print(f"{r['config']}: {r['status']}")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flowlab",
        description="Surface diffusion and Mullins-Sekerka flows of periodic planar sets.",
        epilog=DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate a flow and write a report bundle", epilog=DEFAULTS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("config")
    r.add_argument("-o", "--output", help="bundle directory (overrides the config)")
    r.set_defaults(func=_cmd_run)
    s = sub.add_parser("stability", help="constrained spectrum of the second variation")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="JSON report path")
    s.set_defaults(func=_cmd_stability)
    o = sub.add_parser("oracles", help="run the reference computations and write oracles.json")
    o.add_argument("-o", "--output", default="oracles.json")
    o.add_argument("-M", type=int, default=512, help="grid size of the transmission oracle")
    o.set_defaults(func=_cmd_oracles)
    w = sub.add_parser("sweep", help="run every *.cfg in a directory (FLOWLAB_THREADS caps the pool)")
    w.add_argument("directory")
    w.add_argument("-o", "--output", help="root of the per-config output directories")
    w.set_defaults(func=_cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FlowlabError, FileNotFoundError) as exc:
        print(f"flowlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
