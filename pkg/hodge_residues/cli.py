"""
cli.py – Scenario runner for the residual-current Hodge decomposition.

Usage:
    python -m hodge_residues run --config configs/fermat-cubic-homotopy.json --out outputs/cubic
    python -m hodge_residues validate --config configs/nonreduced-double-line.json
    python -m hodge_residues cache inspect
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from hodge_residues.hefer import HeferCache
from hodge_residues.models import Operation, ScenarioError
from hodge_residues.pipeline import (
    EXIT_OK,
    EXIT_SCHEMA,
    apply_overrides,
    load_scenario,
    run_scenario,
)

logger = logging.getLogger(__name__)


def _print_separator(title: str = ""):
    width = 72
    if title:
        pad = (width - len(title) - 4) // 2
        print(f"\n{'='*pad} [{title}] {'='*pad}")
    else:
        print("=" * width)


def _print_summary(summary: Dict[str, Any]):
    _print_separator("RUN SUMMARY")
    print(f"Scenario        : {summary['scenario']}")
    print(f"Seed / workers  : {summary['seed']} / {summary['workers']}")
    print(f"Tolerance scale : {summary['tolerance_scale']}")
    print(f"Excluded measure: {summary['excluded_measure']:.3e}")
    print()

    _print_separator("OPERATIONS")
    if not summary["operations"]:
        print("  No operations requested.")
    for op in summary["operations"]:
        print(f"  {op['operation']:<10} {op['verdict']:<16} {op['seconds']:>9.3f}s  flags={op['flags']}")
        for key in ("homotopy", "exactness", "rank", "projector", "witnesses_failed"):
            if key in op and op[key]:
                print(f"      {key}: {json.dumps(op[key], default=str)}")
    print()

    _print_separator("RESULT")
    print(f"  failed={summary['failed']}  exit code {summary.get('exit_code', EXIT_OK)}")
    _print_separator()


def _run(args: argparse.Namespace, validate_only: bool = False) -> int:
    try:
        scenario = load_scenario(args.config)
    except ScenarioError as exc:
        logger.error("Schema error at %s", exc)
        return EXIT_SCHEMA
    scenario = apply_overrides(scenario, args.workers, args.seed)
    if validate_only:
        scenario = scenario.model_copy(update={"operations": [Operation.validate]})
    out = args.out or os.path.join("outputs", scenario.name)
    logger.info("Scenario: %s", scenario.name)
    logger.info("Output:   %s", out)
    try:
        summary = run_scenario(scenario, out, args.tolerance_scale, HeferCache())
    except ScenarioError as exc:
        logger.error("Schema error at %s", exc)
        return EXIT_SCHEMA
    _print_summary(summary)
    return summary["exit_code"]


def _cache(args: argparse.Namespace) -> int:
    cache = HeferCache(args.cache_dir)
    if args.action == "clear":
        removed = cache.clear()
        logger.info("Removed %d Hefer cache entries from %s", removed, cache.directory)
        return EXIT_OK
    entries = cache.entries()
    _print_separator("HEFER CACHE")
    print(f"Directory: {cache.directory}")
    if not entries:
        print("  (empty)")
    for e in entries:
        print(f"  {e['file']}  vars={e.get('num_vars')} degree={e.get('degree')} bytes={e.get('bytes')}")
    _print_separator()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Hodge decomposition of residual currents on projective complete intersections"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "Run the scenario's operations"),
                            ("validate", "Run witnesses and closedness checks only")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", required=True, help="Path to scenario JSON file")
        p.add_argument("--out", "-o", default=None, help="Output directory (default outputs/<scenario>)")
        p.add_argument("--workers", type=int, default=None, help="Worker threads (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="Random seed (overrides config)")
        p.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="Multiplier applied to every acceptance tolerance")

    p = sub.add_parser("cache", help="Inspect or clear the Hefer decomposition cache")
    p.add_argument("action", choices=["inspect", "clear"])
    p.add_argument("--cache-dir", default=None, help="Cache directory (default $HODGE_RESIDUES_CACHE_DIR)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    if args.command == "cache":
        return _cache(args)
    return _run(args, validate_only=args.command == "validate")


if __name__ == "__main__":
    sys.exit(main())
