"""Scenario orchestrator.

Runs: load → variety + Hefer data → samples → requested operations →
      report + summary on disk.
"""

from __future__ import annotations

import json
import logging
import os
import time
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from .currents import (
    DualizingSection,
    ResidualCurrent,
    check_closed,
    compatibility_report,
    current_from_spec,
    make_dualizing_section,
    pair_current,
    section_basis,
    transition_report,
)
from .evidence import build_summary, write_run_report, write_summary
from .forms import projector_constant, solver_constant
from .hefer import HeferCache
from .models import (
    ArgumentError,
    ConstantProvenance,
    CutoffError,
    DiagnosticFlag,
    FlagCategory,
    HodgeResiduesError,
    NotClosedError,
    Operation,
    OperationResult,
    RunReport,
    Scenario,
    ScenarioError,
    SingularKernelError,
    Verdict,
    WitnessReport,
)
from .operators import (
    OperatorContext,
    evaluation_points,
    exactness_test,
    hodge_project,
    homotopy_check,
    pairing_rank,
    projector_model,
    solver_values,
)
from .polycore import (
    Variety,
    cutoff_witness,
    fiber_axis_choices,
    plane_grid,
    polynomial_from_spec,
    reducedness_witness,
    sample_variety,
    variety_from_spec,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2
EXIT_SCHEMA = 3


def _dotted(loc: Tuple) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts) or "<root>"


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario file; schema problems carry the offending field path."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("<root>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        return Scenario(**raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ScenarioError(_dotted(tuple(first["loc"])), first["msg"]) from exc


def apply_overrides(
    scenario: Scenario,
    workers: Optional[int] = None,
    seed: Optional[int] = None,
) -> Scenario:
    updates: Dict[str, Any] = {}
    if workers is not None:
        updates["workers"] = max(1, workers)
    if seed is not None:
        updates["seed"] = seed
    if not updates:
        return scenario
    return scenario.model_copy(update={"quadrature": scenario.quadrature.model_copy(update=updates)})


# ── Scenario objects ────────────────────────────────────────────────────────
def build_currents(scenario: Scenario, variety: Variety) -> List[ResidualCurrent]:
    out = []
    for i, spec in enumerate(scenario.currents):
        try:
            out.append(current_from_spec(variety, spec))
        except ArgumentError as exc:
            raise ScenarioError(f"currents[{i}]", str(exc)) from exc
    return out


def build_sections(scenario: Scenario, variety: Variety) -> List[DualizingSection]:
    """Declared sections, or the monomial basis when none are declared."""
    if not scenario.sections:
        return section_basis(variety)
    degree = variety.total_degree - variety.n - 1
    out = []
    for i, spec in enumerate(scenario.sections):
        try:
            h = polynomial_from_spec(spec.h, variety.n + 1, degree)
            out.append(make_dualizing_section(variety, h, spec.name))
        except ArgumentError as exc:
            raise ScenarioError(f"sections[{i}]", str(exc)) from exc
    return out


def collect_constants(variety: Variety, currents: List[ResidualCurrent]) -> List[ConstantProvenance]:
    n, m, d = variety.n, variety.m, variety.total_degree
    out = [projector_constant(n, m, d, r).provenance for r in range(max(d - n, 1))]
    for q in sorted({c.q for c in currents if 1 <= c.q <= n - m}):
        out.append(solver_constant(n, m, q)[1])
    return out


# ── Validation ──────────────────────────────────────────────────────────────
def validate_scenario(
    scenario: Scenario,
    variety: Variety,
    currents: List[ResidualCurrent],
    sections: List[DualizingSection],
    tolerance_scale: float = 1.0,
) -> OperationResult:
    """Reducedness and cutoff witnesses, closedness, chart compatibility and section transitions."""
    cfg = scenario.quadrature
    grid = plane_grid(variety.n - variety.m, max(cfg.radial_nodes // 4, 4), max(cfg.angular_nodes // 4, 4),
                      cfg.radial_scale)
    witnesses: List[WitnessReport] = []
    flags: List[DiagnosticFlag] = []
    points: Dict[int, np.ndarray] = {}
    for alpha in range(variety.n + 1):
        samples = [s for S in fiber_axis_choices(variety)
                   for s in sample_variety(variety, alpha, grid, S, cfg.root_tol, cfg.degeneracy_tol, cfg.seed + alpha)]
        reduced = reducedness_witness(variety, samples)
        reduced.name = f"reducedness_chart_{alpha}"
        witnesses.append(reduced)
        witnesses.append(cutoff_witness(variety, samples, cfg.eta))
        pts = [s.points for s in samples if len(s.fiber_roots)]
        points[alpha] = np.concatenate(pts) if pts else np.zeros((0, variety.n), dtype=complex)
    if any(w.verdict == Verdict.failed for w in witnesses if w.name.startswith("reducedness")):
        flags.append(DiagnosticFlag(flag_id="variety-nonreduced", category=FlagCategory.reducedness,
                                    message="Jacobian rank drops on V; the residue calculus needs a reduced complete intersection"))
    for current in currents:
        closed = check_closed(current, points, cfg.closedness_tol * tolerance_scale, cfg.ideal_fit_radius, cfg.seed)
        witnesses.append(WitnessReport(
            name=f"closedness:{current.name}",
            verdict=Verdict.passed if closed.closed else Verdict.failed,
            residual=closed.tangential_residual,
            details=closed.model_dump(),
        ))
        report, compat_flags = compatibility_report(current, points, cfg.compatibility_tol * tolerance_scale)
        witnesses.append(report)
        flags.extend(compat_flags)
    for section in sections:
        witnesses.append(transition_report(section, points))
    verdict = Verdict.failed if any(w.verdict == Verdict.failed for w in witnesses) else Verdict.passed
    return OperationResult(operation=Operation.validate, verdict=verdict, witnesses=witnesses, flags=flags)


# ── Operations ──────────────────────────────────────────────────────────────
def _top_currents(currents: List[ResidualCurrent], variety: Variety) -> List[ResidualCurrent]:
    return [c for c in currents if c.q == variety.n - variety.m]


def _run_pair(ctx: OperatorContext, currents, sections) -> OperationResult:
    result = OperationResult(operation=Operation.pair, verdict=Verdict.passed)
    for current in _top_currents(currents, ctx.variety):
        for section in sections:
            report = pair_current(current, section, ctx.samples, ctx.config.eta, ctx.config.eta_halvings)
            result.pairings[f"{current.name}|{section.name}"] = report
    return result


def _run_project(ctx: Optional[OperatorContext], variety: Variety, currents) -> OperationResult:
    result = OperationResult(operation=Operation.project, verdict=Verdict.passed)
    points = [] if ctx is None else evaluation_points(ctx, ctx.config.eval_points)
    for current in _top_currents(currents, variety):
        try:
            result.projector.append(hodge_project(current, ctx, points))
        except NotClosedError as exc:
            result.verdict = Verdict.failed
            result.flags.append(DiagnosticFlag(flag_id=f"{current.name}-not-closed", category=FlagCategory.closedness,
                                               message=str(exc)))
    if ctx is None:
        result.verdict = Verdict.structural_zero
    else:
        result.flags.extend(projector_model(ctx).flags)
    return result


def _run_solve(ctx: OperatorContext, currents) -> OperationResult:
    result = OperationResult(operation=Operation.solve, verdict=Verdict.passed)
    n, m = ctx.variety.n, ctx.variety.m
    for current in currents:
        if not 1 <= current.q <= n - m:
            continue
        try:
            output = solver_values(current, ctx)
        except (CutoffError, SingularKernelError) as exc:
            result.verdict = Verdict.failed
            category = FlagCategory.cutoff if isinstance(exc, CutoffError) else FlagCategory.degenerate_sample
            result.flags.append(DiagnosticFlag(flag_id=f"{current.name}-solver", category=category, message=str(exc)))
            continue
        result.solver.append(output)
        if output.flags:
            result.flags.extend(output.flags)
    return result


def _run_homotopy(ctx: OperatorContext, currents, sections) -> OperationResult:
    result = OperationResult(operation=Operation.homotopy, verdict=Verdict.passed)
    for current in _top_currents(currents, ctx.variety):
        for section in sections:
            try:
                report = homotopy_check(current, section, ctx)
            except NotClosedError as exc:
                result.verdict = Verdict.failed
                result.flags.append(DiagnosticFlag(flag_id=f"{current.name}-not-closed",
                                                   category=FlagCategory.closedness, message=str(exc)))
                continue
            result.homotopy.append(report)
            result.flags.extend(report.flags)
            if report.verdict == Verdict.failed:
                result.verdict = Verdict.failed
                result.flags.append(DiagnosticFlag(
                    flag_id=f"{current.name}-{section.name}-homotopy", category=FlagCategory.acceptance,
                    message=f"homotopy residual {report.residual:.3e} above tolerance"))
    return result


def _run_exactness(ctx: OperatorContext, currents) -> OperationResult:
    result = OperationResult(operation=Operation.exactness, verdict=Verdict.passed)
    rows = []
    for current in _top_currents(currents, ctx.variety):
        try:
            report = exactness_test(current, ctx)
        except NotClosedError as exc:
            result.verdict = Verdict.failed
            result.flags.append(DiagnosticFlag(flag_id=f"{current.name}-not-closed", category=FlagCategory.closedness,
                                               message=str(exc)))
            continue
        result.exactness.append(report)
        if report.pairings:
            rows.append([p.to_complex() for p in report.pairings])
    if rows:
        result.rank = pairing_rank(np.array(rows), ctx.config.rank_tol)
        logger.info("pairing matrix %dx%d has numerical rank %d", len(rows), len(rows[0]), result.rank.rank)
    return result


def execute(
    scenario: Scenario,
    tolerance_scale: float = 1.0,
    cache: Optional[HeferCache] = None,
) -> RunReport:
    """Run every requested operation of a validated scenario."""
    cfg = scenario.quadrature
    report = RunReport(scenario=scenario.name, seed=cfg.seed, workers=cfg.workers, tolerance_scale=tolerance_scale)
    if not scenario.operations:
        logger.info("Scenario %s requests no operations", scenario.name)
        return report

    # ── Step 1: Variety, currents and sections ──────────────────────────
    logger.info("Step 1: Building variety, currents and sections")
    start = time.perf_counter()
    try:
        variety = variety_from_spec(scenario.variety)
    except ArgumentError as exc:
        raise ScenarioError("variety", str(exc)) from exc
    currents = build_currents(scenario, variety)
    sections = build_sections(scenario, variety)
    report.constants = collect_constants(variety, currents)
    report.timing["setup"] = time.perf_counter() - start
    structural = variety.total_degree <= variety.n
    if structural:
        report.notes.append(f"d = {variety.total_degree} ≤ n = {variety.n}: the projector is a structural zero")

    # ── Step 2: Samples and Hefer data ──────────────────────────────────
    needs_context = any(
        op not in (Operation.validate,) and not (op == Operation.project and structural)
        for op in scenario.operations
    )
    ctx: Optional[OperatorContext] = None
    if needs_context:
        logger.info("Step 2: Sampling V in %d charts", variety.n + 1)
        start = time.perf_counter()
        ctx = OperatorContext.build(variety, cfg, cache, tolerance_scale)
        report.timing["sampling"] = time.perf_counter() - start
        report.excluded_measure = ctx.excluded_measure
        for chart in ctx.samples.values():
            report.flags.extend(chart.flags)

    # ── Step 3: Operations ──────────────────────────────────────────────
    for i, op in enumerate(scenario.operations):
        logger.info("Step 3.%d: %s", i + 1, op.value)
        start = time.perf_counter()
        try:
            if op == Operation.validate:
                result = validate_scenario(scenario, variety, currents, sections, tolerance_scale)
            elif op == Operation.pair:
                result = _run_pair(ctx, currents, sections)
            elif op == Operation.project:
                result = _run_project(None if structural else ctx, variety, currents)
            elif op == Operation.solve:
                result = _run_solve(ctx, currents)
            elif op == Operation.homotopy:
                result = _run_homotopy(ctx, currents, sections)
            else:
                result = _run_exactness(ctx, currents)
        except HodgeResiduesError as exc:
            logger.error("%s failed: %s", op.value, exc)
            result = OperationResult(operation=op, verdict=Verdict.failed, flags=[
                DiagnosticFlag(flag_id=f"{op.value}-error", category=FlagCategory.acceptance, message=str(exc))])
        result.seconds = time.perf_counter() - start
        report.timing[op.value] = result.seconds
        report.results.append(result)
        if ctx is not None and ctx._projector is not None and not any(
            c.label == "projector-kappa" for c in report.constants
        ):
            report.constants.append(ctx._projector.provenance)

    report.failed = any(r.verdict == Verdict.failed for r in report.results)
    return report


def exit_code(report: RunReport) -> int:
    if not report.failed:
        return EXIT_OK
    if any(r.operation == Operation.validate and r.verdict == Verdict.failed for r in report.results):
        return EXIT_VALIDATION
    return EXIT_CONVERGENCE


def run_scenario(
    scenario: Scenario,
    output_dir: str,
    tolerance_scale: float = 1.0,
    cache: Optional[HeferCache] = None,
) -> Dict[str, Any]:
    """Execute a scenario and write report + summary; returns the summary."""
    os.makedirs(output_dir, exist_ok=True)
    report = execute(scenario, tolerance_scale, cache)

    # ── Step 4: Report emission ─────────────────────────────────────────
    logger.info("Step 4: Writing run report")
    paths = write_run_report(output_dir, report)
    summary = build_summary(report)
    summary["exit_code"] = exit_code(report)
    summary["output_files"] = {**paths, "run_summary": os.path.join(output_dir, "run_summary.json")}
    write_summary(output_dir, summary)
    logger.info("Scenario %s complete. Output at: %s", scenario.name, output_dir)
    return summary
