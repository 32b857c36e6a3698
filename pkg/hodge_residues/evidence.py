"""Report emission: full run report, constants provenance and a compact summary."""

from __future__ import annotations

import json
import os
from typing import Any, Dict, List

from .models import OperationResult, RunReport


def write_run_report(output_dir: str, report: RunReport) -> Dict[str, str]:
    """Write run_report.json and constants.json."""
    os.makedirs(output_dir, exist_ok=True)
    paths: Dict[str, str] = {}

    report_path = os.path.join(output_dir, "run_report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(report.model_dump_json(indent=2))
    paths["run_report"] = report_path

    if report.constants:
        constants_path = os.path.join(output_dir, "constants.json")
        with open(constants_path, "w", encoding="utf-8") as f:
            json.dump([c.model_dump() for c in report.constants], f, indent=2, ensure_ascii=False)
        paths["constants"] = constants_path

    return paths


def _result_summary(result: OperationResult) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "verdict": result.verdict.value,
        "seconds": round(result.seconds, 3),
        "flags": len(result.flags),
    }
    if result.pairings:
        out["pairings"] = {
            k: {"value": [r.extrapolated.re, r.extrapolated.im], "error": r.error_estimate}
            for k, r in result.pairings.items()
        }
    if result.projector:
        out["projector"] = {
            p.current: "structural-zero" if p.structural_zero else [[m.re, m.im] for m in p.moments]
            for p in result.projector
        }
    if result.solver:
        out["solver_max_error"] = {s.current: max(s.error_estimates, default=0.0) for s in result.solver}
    if result.homotopy:
        out["homotopy"] = {f"{h.current}|{h.section}": {"residual": h.residual, "solver_bound": h.solver_bound,
                                                         "verdict": h.verdict.value}
                           for h in result.homotopy}
    if result.exactness:
        out["exactness"] = {e.current: e.verdict.value for e in result.exactness}
    if result.rank is not None:
        out["rank"] = {"rank": result.rank.rank, "gap": result.rank.gap}
    if result.witnesses:
        out["witnesses_failed"] = [w.name for w in result.witnesses if w.verdict.value == "fail"]
    return out


def build_summary(report: RunReport) -> Dict[str, Any]:
    operations: List[Dict[str, Any]] = []
    for result in report.results:
        operations.append({"operation": result.operation.value, **_result_summary(result)})
    return {
        "scenario": report.scenario,
        "seed": report.seed,
        "workers": report.workers,
        "tolerance_scale": report.tolerance_scale,
        "failed": report.failed,
        "excluded_measure": report.excluded_measure,
        "operations": operations,
        "flags_count": len(report.flags) + sum(len(r.flags) for r in report.results),
        "timing": report.timing,
    }


def write_summary(output_dir: str, summary: Dict[str, Any]) -> str:
    path = os.path.join(output_dir, "run_summary.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, ensure_ascii=False, default=str)
    return path
