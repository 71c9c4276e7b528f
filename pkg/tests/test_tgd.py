import math

import numpy as np
import pytest

from bgcosim.tgd import (
    Constraint,
    ConstraintReport,
    CrashingExecutor,
    ManifestEntry,
    ManifestExecutor,
    ProgramArtifact,
    RequirementSpec,
    TgdComponents,
    TgdError,
    code_score,
    component_presence_constraints,
    convergence_scores,
    evaluate,
    manifest_complete_check,
    manifest_unique_check,
    project,
    run_tgd,
    scripted_fault_components,
)

REQUIRED = tuple(
    ManifestEntry.make(name, stage=stage)
    for name, stage in [
        ("load_network", "scenario"),
        ("load_fleet", "scenario"),
        ("build_environment", "simulation"),
        ("run_episode", "simulation"),
        ("summarize_kpis", "analysis"),
        ("export_csv", "reporting"),
        ("screen_operating_limits", "analysis"),
        ("count_contingency_failures", "analysis"),
    ]
)


def static_constraint(cid, value):
    return Constraint(
        id=cid, description=cid, evaluator=lambda a, r: value, requires_execution=False
    )


class TestEvaluate:
    def test_all_satisfied_zero_loss(self):
        artifact = ProgramArtifact(body="x", manifest=REQUIRED)
        constraints = component_presence_constraints(REQUIRED)
        report = evaluate(artifact, ManifestExecutor(), constraints)
        assert report.loss == 0.0
        assert all(c <= 0 for c in report.values.values())

    def test_hinge_sum(self):
        constraints = (
            static_constraint("a", 0.3),
            static_constraint("b", 0.5),
            static_constraint("c", -0.2),
        )
        report = evaluate(ProgramArtifact("x"), ManifestExecutor(), constraints)
        assert report.loss == pytest.approx(0.8)

    def test_randomized_magnitudes_match_summation_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            values = rng.uniform(-1.0, 1.0, size=int(rng.integers(1, 12)))
            constraints = tuple(
                static_constraint(f"c{i}", float(v)) for i, v in enumerate(values)
            )
            report = evaluate(ProgramArtifact("x"), ManifestExecutor(), constraints)
            oracle = math.fsum(max(0.0, float(v)) for v in values)
            assert abs(report.loss - oracle) < 1e-12

    def test_executor_crash_pins_execution_constraints(self):
        constraints = (
            Constraint("dyn", "", lambda a, r: -1.0, requires_execution=True),
            Constraint("static", "", lambda a, r: -0.5, requires_execution=False),
        )
        report = evaluate(ProgramArtifact("x"), CrashingExecutor(), constraints)
        assert report.executor_failed
        assert report.values["dyn"] == 1.0
        assert report.values["static"] == -0.5


class TestRunTgd:
    def test_immediately_feasible_returns_at_iteration_zero(self):
        components = scripted_fault_components(REQUIRED, faults=())
        result = run_tgd("demo", None, components)
        assert result.converged
        assert result.refinement_rounds == 0
        assert result.loss_history == (0.0,)
        assert len(result.log.entries) == 1
        assert result.log.entries[0].iteration_reason == "all constraints satisfied"

    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_k_faults_need_exactly_k_rounds(self, k):
        faults = tuple(e.component for e in REQUIRED[:k])
        components = scripted_fault_components(REQUIRED, faults=faults)
        result = run_tgd("demo", None, components, max_rounds=k + 2)
        assert result.converged
        assert result.refinement_rounds == k
        assert len(result.loss_history) == k + 1
        assert all(a > b for a, b in zip(result.loss_history, result.loss_history[1:]))
        assert result.loss_history[-1] == 0.0
        # verified against the stub's own fault ledger
        assert result.loss_history[0] == float(len(faults))

    def test_unrepairable_fault_stops_at_budget(self):
        components = scripted_fault_components(
            REQUIRED, faults=(), unrepairable=("export_csv",)
        )
        result = run_tgd("demo", None, components, max_rounds=5)
        assert not result.converged
        assert result.refinement_rounds == 5
        assert len(result.log.entries) == 5
        assert result.loss_history == (1.0,) * 5
        assert "export_csv" not in result.artifact.manifest_ids()
        # minimum-loss artifact: everything else is present
        assert set(result.artifact.manifest_ids()) == {
            e.component for e in REQUIRED
        } - {"export_csv"}

    def test_never_patches_a_feasible_artifact(self):
        calls = []

        class SpyFeedback:
            def build(self, artifact, report, results):
                calls.append("feedback")
                raise AssertionError("must not be called")

        components = scripted_fault_components(REQUIRED, faults=())
        components = TgdComponents(
            generator=components.generator,
            executor=components.executor,
            constraints=components.constraints,
            feedback=SpyFeedback(),
            projection=components.projection,
        )
        result = run_tgd("demo", None, components)
        assert result.converged and not calls

    def test_component_failure_names_role_and_iteration(self):
        components = scripted_fault_components(REQUIRED, faults=("load_fleet",))

        class ExplodingFeedback:
            def build(self, artifact, report, results):
                raise RuntimeError("llm adapter offline")

        broken = TgdComponents(
            generator=components.generator,
            executor=components.executor,
            constraints=components.constraints,
            feedback=ExplodingFeedback(),
            projection=components.projection,
        )
        with pytest.raises(TgdError, match="feedback_generator failed at iteration 0"):
            run_tgd("demo", None, broken)

    def test_log_has_all_four_sections(self):
        faults = ("load_network", "run_episode")
        components = scripted_fault_components(REQUIRED, faults=faults)
        result = run_tgd("demo", None, components)
        text = result.log.to_text()
        for section in (
            "iteration_reason",
            "convergence_assessment",
            "next_iteration_focus",
            "agent_adjustments",
        ):
            assert section in text
        assert len(result.log.entries) == result.refinement_rounds + 1

    def test_bit_reproducible_runs(self):
        def run_once():
            components = scripted_fault_components(
                REQUIRED, faults=("load_fleet", "export_csv")
            )
            return run_tgd("demo", None, components, max_rounds=6)

        a, b = run_once(), run_once()
        assert a.artifact == b.artifact
        assert a.loss_history == b.loss_history
        assert a.log.to_text() == b.log.to_text()

    def test_scores_in_unit_interval_and_rubric(self):
        constraints = (
            Constraint("s1", "", lambda a, r: -1.0, requires_execution=False),
            Constraint("s2", "", lambda a, r: 0.5, requires_execution=False),
            Constraint("d1", "", lambda a, r: -1.0, requires_execution=True),
        )
        report = ConstraintReport(values={"s1": -1.0, "s2": 0.5, "d1": -1.0})
        scores = convergence_scores(report, constraints)
        assert scores.code_quality == pytest.approx(0.5)
        assert scores.model_accuracy == pytest.approx(1.0)
        assert scores.overall == pytest.approx(0.75)


class TestProject:
    def test_identity_on_feasible(self):
        artifact = ProgramArtifact("x", manifest=REQUIRED[:3])
        result = project(artifact, [manifest_unique_check()])
        assert result.artifact == artifact
        assert result.applied_rules == ()
        assert result.unresolved == ()

    def test_duplicate_removed_everything_else_untouched(self):
        artifact = ProgramArtifact(
            "body text", manifest=REQUIRED[:3] + (REQUIRED[1],)
        )
        result = project(artifact, [manifest_unique_check()])
        assert result.artifact.manifest == REQUIRED[:3]
        assert result.artifact.body == "body text"
        assert result.applied_rules == ("dedupe_manifest:manifest_unique",)

    def test_restore_from_template(self):
        artifact = ProgramArtifact("x", manifest=(REQUIRED[0], REQUIRED[4]))
        checks = [manifest_unique_check(), manifest_complete_check(REQUIRED[:5])]
        result = project(artifact, checks, template_manifest=REQUIRED[:5])
        assert set(result.artifact.manifest_ids()) == {
            e.component for e in REQUIRED[:5]
        }
        assert result.unresolved == ()

    def test_unfixable_check_recorded_not_raised(self):
        impossible = Constraint(
            id="never",
            description="",
            evaluator=lambda a, r: 1.0,
            requires_execution=False,
            projectable=True,
            repair=None,
        )
        artifact = ProgramArtifact("x", manifest=REQUIRED[:2])
        result = project(artifact, [impossible])
        assert result.artifact == artifact
        assert result.unresolved == ("never",)

    def test_non_projectable_check_rejected(self):
        check = Constraint("dyn", "", lambda a, r: 1.0)
        with pytest.raises(TgdError, match="not marked projectable"):
            project(ProgramArtifact("x"), [check])

    def test_randomized_corruption_matches_minimal_repair_oracle(self):
        rng = np.random.default_rng(5)
        template = REQUIRED[:6]
        checks = [manifest_unique_check(), manifest_complete_check(template)]
        for _ in range(200):
            pool = list(template) + [
                ManifestEntry.make("stray_component", n=int(rng.integers(0, 3)))
            ]
            size = int(rng.integers(0, 10))
            manifest = tuple(pool[int(i)] for i in rng.integers(0, len(pool), size))
            artifact = ProgramArtifact("x", manifest=manifest)
            got = project(artifact, checks, template_manifest=template).artifact

            # closed-form oracle: first occurrences, then missing template
            # entries appended in template order
            seen = set()
            expect = []
            for entry in manifest:
                if entry.component not in seen:
                    seen.add(entry.component)
                    expect.append(entry)
            for entry in template:
                if entry.component not in seen:
                    expect.append(entry)
                    seen.add(entry.component)
            assert got.manifest == tuple(expect)


class TestCodeScore:
    def spec(self, n=10):
        return RequirementSpec(
            tuple(ManifestEntry.make(f"component_{i}", mode=i) for i in range(n))
        )

    def test_perfect_score_fixed_point(self):
        spec = self.spec()
        assert code_score(spec.requirements, spec) == 1.0

    def test_partial_with_extras(self):
        spec = self.spec(10)
        manifest = spec.requirements[:8] + (
            ManifestEntry.make("extra_a"),
            ManifestEntry.make("extra_b"),
        )
        assert code_score(manifest, spec) == pytest.approx(8 / 12)

    def test_zero_when_nothing_matches(self):
        spec = self.spec(4)
        assert code_score((ManifestEntry.make("other"),), spec) == 0.0

    def test_wrong_config_is_neither_correct_nor_extra(self):
        spec = RequirementSpec((ManifestEntry.make("a", mode=1),))
        manifest = (ManifestEntry.make("a", mode=2),)
        assert code_score(manifest, spec) == 0.0

    def test_empty_spec_rejected(self):
        with pytest.raises(TgdError, match="no requirements defined"):
            code_score((), RequirementSpec(()))

    def test_monotonicity(self):
        rng = np.random.default_rng(17)
        spec = self.spec(6)
        for _ in range(200):
            size = int(rng.integers(0, 6))
            manifest = tuple(
                spec.requirements[int(i)] for i in rng.integers(0, 6, size)
            )
            base = code_score(manifest, spec)
            with_extra = code_score(
                manifest + (ManifestEntry.make("noise"),), spec
            )
            assert with_extra <= base + 1e-15
            missing = [r for r in spec.requirements
                       if r.component not in {e.component for e in manifest}]
            if missing:
                with_correct = code_score(manifest + (missing[0],), spec)
                assert with_correct >= base - 1e-15

    def test_duplicate_manifest_entries_count_once(self):
        spec = RequirementSpec((ManifestEntry.make("a"),))
        manifest = (ManifestEntry.make("a"), ManifestEntry.make("a"))
        assert code_score(manifest, spec) == 1.0
