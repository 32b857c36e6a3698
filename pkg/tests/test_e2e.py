"""
test_e2e.py – End-to-end runs of the shipped scenarios.

Representative cases:
  1) Line z2 = 0: validation passes, the projector is a structural zero
  2) Conic: no dualizing sections, every closed current is exact
  3) Double line z1² = 0: non-reduced, validation fails with exit code 1
  4) Fermat cubic: homotopy identity, solver and exactness on a coarse grid
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from pathlib import Path

import pytest

from hodge_residues import cli
from hodge_residues.hefer import HeferCache
from hodge_residues.models import Operation, Verdict
from hodge_residues.pipeline import (
    EXIT_OK,
    EXIT_SCHEMA,
    EXIT_VALIDATION,
    apply_overrides,
    execute,
    exit_code,
    load_scenario,
    run_scenario,
)

CONFIGS = Path(__file__).parent.parent / "configs"


# ── Fixtures ────────────────────────────────────────────────────────────────

@pytest.fixture
def tmp_dir():
    d = tempfile.mkdtemp()
    yield d
    shutil.rmtree(d, ignore_errors=True)


def _config(name: str) -> str:
    return str(CONFIGS / f"{name}.json")


def _run(name: str, out: str, cache_dir: str):
    return run_scenario(load_scenario(_config(name)), out, cache=HeferCache(cache_dir))


class TestShippedConfigs:
    @pytest.mark.parametrize("name", sorted(p.stem for p in CONFIGS.glob("*.json")))
    def test_every_config_loads(self, name):
        scenario = load_scenario(_config(name))
        assert scenario.name == name
        assert scenario.operations


# ── Case 1: line ────────────────────────────────────────────────────────────

class TestCase1Line:
    @classmethod
    def setup_class(cls):
        cls.tmpdir = tempfile.mkdtemp()
        cls.summary = _run("line-structural-zero", os.path.join(cls.tmpdir, "out"), os.path.join(cls.tmpdir, "cache"))

    @classmethod
    def teardown_class(cls):
        shutil.rmtree(cls.tmpdir, ignore_errors=True)

    def test_exit_code(self):
        assert self.summary["exit_code"] == EXIT_OK
        assert not self.summary["failed"]

    def test_validation_passes(self):
        validate = self.summary["operations"][0]
        assert validate["operation"] == "validate"
        assert validate["verdict"] == Verdict.passed.value
        assert validate["witnesses_failed"] == []

    def test_projector_is_structural_zero(self):
        project = self.summary["operations"][1]
        assert project["verdict"] == Verdict.structural_zero.value
        assert set(project["projector"].values()) == {"structural-zero"}

    def test_every_current_is_exact(self):
        exactness = self.summary["operations"][2]
        assert set(exactness["exactness"].values()) == {Verdict.exact.value}

    def test_hefer_data_was_cached(self):
        assert HeferCache(os.path.join(self.tmpdir, "cache")).entries()


# ── Case 2: conic ───────────────────────────────────────────────────────────

class TestCase2Conic:
    @classmethod
    def setup_class(cls):
        cls.tmpdir = tempfile.mkdtemp()
        cls.summary = _run("conic-structural-zero", os.path.join(cls.tmpdir, "out"), os.path.join(cls.tmpdir, "cache"))

    @classmethod
    def teardown_class(cls):
        shutil.rmtree(cls.tmpdir, ignore_errors=True)

    def test_exit_code(self):
        assert self.summary["exit_code"] == EXIT_OK

    def test_projector_and_exactness(self):
        project, exactness = self.summary["operations"]
        assert project["verdict"] == Verdict.structural_zero.value
        assert set(exactness["exactness"]) == {"exact-z1bar-z2", "antiholomorphic", "ideal"}
        assert set(exactness["exactness"].values()) == {Verdict.exact.value}

    def test_constants_file(self):
        with open(self.summary["output_files"]["constants"], "r", encoding="utf-8") as f:
            constants = json.load(f)
        projector = [c for c in constants if c["label"] == "projector"]
        assert projector and projector[0]["factors"][0]["name"] == "empty_range"


# ── Case 3: double line ─────────────────────────────────────────────────────

class TestCase3DoubleLine:
    def test_validation_fails(self, tmp_dir):
        summary = _run("nonreduced-double-line", os.path.join(tmp_dir, "out"), os.path.join(tmp_dir, "cache"))
        assert summary["exit_code"] == EXIT_VALIDATION
        failed = summary["operations"][0]["witnesses_failed"]
        assert any(name.startswith("reducedness") for name in failed)


# ── Case 4: Fermat cubic ────────────────────────────────────────────────────

def _coarse(name: str, **quadrature):
    scenario = load_scenario(_config(name))
    return scenario.model_copy(update={"quadrature": scenario.quadrature.model_copy(update=quadrature)})


class TestCase4CubicHomotopy:
    @classmethod
    def setup_class(cls):
        cls.tmpdir = tempfile.mkdtemp()
        scenario = _coarse("fermat-cubic-homotopy", radial_nodes=24, angular_nodes=24, eval_points=2)
        cls.report = execute(scenario, cache=HeferCache(os.path.join(cls.tmpdir, "cache")))
        cls.results = {r.operation: r for r in cls.report.results}

    @classmethod
    def teardown_class(cls):
        shutil.rmtree(cls.tmpdir, ignore_errors=True)

    def test_exit_code(self):
        assert exit_code(self.report) == EXIT_OK

    def test_homotopy_uses_recipe_constant(self):
        kappa = [c for c in self.report.constants if c.label == "projector-kappa"]
        assert kappa and kappa[0].calibration == "recipe"
        homotopy = self.results[Operation.homotopy]
        assert homotopy.verdict == Verdict.passed
        by_current = {h.current: h for h in homotopy.homotopy}
        anti = by_current["antiholomorphic"]
        assert anti.residual < 5e-2
        assert anti.solver_norm is not None and anti.solver_norm > 0
        assert anti.solver_bound / anti.scale < 5e-2

    def test_exactness_separates_the_class(self):
        exactness = {e.current: e.verdict for e in self.results[Operation.exactness].exactness}
        assert exactness == {"exact": Verdict.exact, "antiholomorphic": Verdict.non_exact, "ideal": Verdict.exact}

    def test_solver_runs_for_every_current(self):
        solve = self.results[Operation.solve]
        assert solve.verdict == Verdict.passed
        assert sorted(s.current for s in solve.solver) == ["antiholomorphic", "exact", "ideal"]


# ── Determinism ─────────────────────────────────────────────────────────────

class TestDeterminism:
    def test_same_seed_same_report(self, tmp_dir):
        scenario = load_scenario(_config("line-structural-zero"))
        skip = {"timing": True, "results": {"__all__": {"seconds"}}}
        first = execute(scenario, cache=HeferCache(os.path.join(tmp_dir, "a"))).model_dump(exclude=skip)
        second = execute(scenario, cache=HeferCache(os.path.join(tmp_dir, "b"))).model_dump(exclude=skip)
        assert first == second

    def test_seed_is_recorded(self, tmp_dir):
        scenario = apply_overrides(load_scenario(_config("line-structural-zero")), seed=7)
        report = execute(scenario, cache=HeferCache(tmp_dir))
        assert report.seed == 7


# ── Command line ────────────────────────────────────────────────────────────

class TestCli:
    def test_validate_command(self, tmp_dir, capsys):
        code = cli.main(["validate", "--config", _config("line-structural-zero"), "--out", tmp_dir])
        assert code == EXIT_OK
        assert "RUN SUMMARY" in capsys.readouterr().out
        with open(os.path.join(tmp_dir, "run_summary.json"), "r", encoding="utf-8") as f:
            summary = json.load(f)
        assert [op["operation"] for op in summary["operations"]] == ["validate"]

    def test_double_line_exit_code(self, tmp_dir):
        assert cli.main(["run", "-c", _config("nonreduced-double-line"), "-o", tmp_dir]) == EXIT_VALIDATION

    def test_schema_error_exit_code(self, tmp_dir):
        path = os.path.join(tmp_dir, "bad.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"name": "bad"}, f)
        assert cli.main(["run", "--config", path, "--out", tmp_dir]) == EXIT_SCHEMA

    def test_cache_inspect_and_clear(self, tmp_dir, capsys, monkeypatch):
        cache_dir = os.path.join(tmp_dir, "cache")
        monkeypatch.setenv("HODGE_RESIDUES_CACHE_DIR", cache_dir)
        assert cli.main(["run", "-c", _config("line-structural-zero"), "-o", os.path.join(tmp_dir, "out")]) == EXIT_OK
        capsys.readouterr()
        assert cli.main(["cache", "inspect"]) == EXIT_OK
        assert "degree=1" in capsys.readouterr().out
        assert cli.main(["cache", "clear"]) == EXIT_OK
        assert HeferCache(cache_dir).entries() == []
