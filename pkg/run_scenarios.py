#!/usr/bin/env python3
"""Scenario runner: execute every shipped config and print a summary table."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
)
logger = logging.getLogger("run_scenarios")


def main(config_dir: str = "configs", out_root: str = "outputs") -> int:
    from hodge_residues.hefer import HeferCache
    from hodge_residues.models import ScenarioError
    from hodge_residues.pipeline import EXIT_SCHEMA, load_scenario, run_scenario

    configs = sorted(Path(config_dir).glob("*.json"))
    if not configs:
        logger.error("No scenario files in %s", config_dir)
        return 1

    rows = []
    for path in configs:
        logger.info("Running %s", path.name)
        try:
            scenario = load_scenario(str(path))
        except ScenarioError as exc:
            logger.error("%s: schema error at %s", path.name, exc)
            rows.append((path.stem, EXIT_SCHEMA, "schema error"))
            continue
        summary = run_scenario(scenario, str(Path(out_root) / scenario.name), cache=HeferCache())
        verdicts = ", ".join(f"{op['operation']}={op['verdict']}" for op in summary["operations"]) or "-"
        rows.append((scenario.name, summary["exit_code"], verdicts))

    print("\n" + "=" * 72)
    print("SCENARIO SUMMARY")
    print("=" * 72)
    for name, code, verdicts in rows:
        print(f"  {name:<28} exit={code}  {verdicts}")
    print("=" * 72)
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
