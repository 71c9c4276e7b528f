"""Constraint-driven iterative program refinement.

The optimization variable is an opaque program artifact (body text plus a
component manifest). Constraints map (artifact, execution results) to a
violation magnitude; the hinge sum of positive magnitudes is the loss. The
refinement loop evaluates, converts violations into textual repair
directives, patches, projects back to feasibility, and logs one decision
entry per iteration. All shipped components are deterministic; language-
model adapters can implement the same five roles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from bgcosim import textdoc


class TgdError(RuntimeError):
    """Orchestration component failure (carries iteration and role)."""


# ---------------------------------------------------------------------------
# artifact and constraints

@dataclass(frozen=True)
class ManifestEntry:
    component: str
    config: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "config", tuple((str(k), str(v)) for k, v in self.config))

    @classmethod
    def make(cls, component: str, **config) -> "ManifestEntry":
        return cls(component=component, config=tuple(sorted((k, str(v)) for k, v in config.items())))


@dataclass(frozen=True)
class ProgramArtifact:
    body: str
    manifest: tuple[ManifestEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "manifest", tuple(self.manifest))

    def manifest_ids(self) -> tuple[str, ...]:
        return tuple(e.component for e in self.manifest)

    def has_duplicate_entries(self) -> bool:
        ids = self.manifest_ids()
        return len(set(ids)) != len(ids)


@dataclass(frozen=True)
class Constraint:
    """A requirement with a violation magnitude; c <= 0 means satisfied.

    ``requires_execution`` marks constraints that depend on executor results
    (they pin to the maximal violation 1.0 when the executor crashes);
    ``projectable`` marks constraints the projection step may repair via the
    named ``repair`` rule.
    """

    id: str
    description: str
    evaluator: Callable[[ProgramArtifact, Mapping | None], float]
    requires_execution: bool = True
    projectable: bool = False
    repair: str | None = None


MAX_VIOLATION = 1.0  # assigned to execution-dependent constraints on crash


@dataclass(frozen=True)
class ConstraintReport:
    values: dict[str, float]  # constraint id -> c_i(x)
    executor_failed: bool = False

    @property
    def loss(self) -> float:
        return sum(max(0.0, c) for c in self.values.values())

    def violated_ids(self) -> tuple[str, ...]:
        return tuple(cid for cid, c in self.values.items() if c > 0)


def _run_executor(artifact: ProgramArtifact, executor) -> tuple[Mapping | None, bool]:
    try:
        return executor.run(artifact), False
    except Exception:
        return None, True


def evaluate(
    artifact: ProgramArtifact,
    executor,
    constraints: Sequence[Constraint],
) -> ConstraintReport:
    """Run the executor once and score every constraint on the outcome."""
    results, failed = _run_executor(artifact, executor)
    return _score(artifact, results, failed, constraints)


def _score(artifact, results, failed, constraints) -> ConstraintReport:
    values: dict[str, float] = {}
    for constraint in constraints:
        if failed and constraint.requires_execution:
            values[constraint.id] = MAX_VIOLATION
        else:
            values[constraint.id] = float(constraint.evaluator(artifact, results))
    return ConstraintReport(values=values, executor_failed=failed)


# ---------------------------------------------------------------------------
# textual gradient and decision log

@dataclass(frozen=True)
class TextualGradient:
    violated_constraints: tuple[str, ...]
    located_components: tuple[str, ...]
    directives: tuple[str, ...]
    iteration: int


@dataclass(frozen=True)
class ConvergenceScores:
    code_quality: float
    model_accuracy: float
    overall: float


@dataclass(frozen=True)
class DecisionEntry:
    iteration: int
    iteration_reason: str
    convergence_assessment: ConvergenceScores
    next_iteration_focus: str
    agent_adjustments: str


@dataclass(frozen=True)
class DecisionLog:
    entries: tuple[DecisionEntry, ...] = ()

    def to_text(self) -> str:
        doc = {
            "iteration": [
                {
                    "index": e.iteration,
                    "iteration_reason": e.iteration_reason,
                    "convergence_assessment": [
                        e.convergence_assessment.code_quality,
                        e.convergence_assessment.model_accuracy,
                        e.convergence_assessment.overall,
                    ],
                    "next_iteration_focus": e.next_iteration_focus,
                    "agent_adjustments": e.agent_adjustments,
                }
                for e in self.entries
            ]
        }
        return textdoc.dumps(doc)


def convergence_scores(
    report: ConstraintReport, constraints: Sequence[Constraint]
) -> ConvergenceScores:
    """Deterministic linear rubric: satisfied share of static checks (code
    quality), of execution-dependent checks (model accuracy), and their mean
    (overall). Empty groups score 1.0."""

    def share(group: list[Constraint]) -> float:
        if not group:
            return 1.0
        ok = sum(1 for c in group if report.values[c.id] <= 0)
        return ok / len(group)

    static = [c for c in constraints if not c.requires_execution]
    dynamic = [c for c in constraints if c.requires_execution]
    quality = share(static)
    accuracy = share(dynamic)
    return ConvergenceScores(
        code_quality=quality,
        model_accuracy=accuracy,
        overall=(quality + accuracy) / 2.0,
    )


# ---------------------------------------------------------------------------
# projection

_DEDUPE = "dedupe_manifest"
_RESTORE = "restore_required"


@dataclass(frozen=True)
class ProjectionResult:
    artifact: ProgramArtifact
    applied_rules: tuple[str, ...] = ()
    unresolved: tuple[str, ...] = ()  # projectable checks still failing


def _dedupe_manifest(artifact: ProgramArtifact, _template) -> ProgramArtifact:
    seen = set()
    kept = []
    for entry in artifact.manifest:
        if entry.component in seen:
            continue
        seen.add(entry.component)
        kept.append(entry)
    return replace(artifact, manifest=tuple(kept))


def _restore_required(
    artifact: ProgramArtifact, template_manifest: tuple[ManifestEntry, ...] | None
) -> ProgramArtifact:
    if not template_manifest:
        return artifact
    present = set(artifact.manifest_ids())
    additions = tuple(e for e in template_manifest if e.component not in present)
    return replace(artifact, manifest=artifact.manifest + additions)


_RULES = {_DEDUPE: _dedupe_manifest, _RESTORE: _restore_required}


def project(
    artifact: ProgramArtifact,
    checks: Sequence[Constraint],
    template_manifest: tuple[ManifestEntry, ...] | None = None,
) -> ProjectionResult:
    """Minimal deterministic repair against projectable checks.

    Applies each failing check's named rule (duplicate-entry removal,
    restoring required manifest entries from the template) until every check
    passes or no rule changes the artifact; checks without an applicable
    rule are recorded as unresolved, never raised. Components unrelated to a
    failing check are left untouched.
    """
    for check in checks:
        if not check.projectable:
            raise TgdError(f"check {check.id!r} is not marked projectable")
    applied: list[str] = []
    current = artifact
    for _ in range(len(checks) * 2 + 1):
        failing = [c for c in checks if c.evaluator(current, None) > 0]
        if not failing:
            return ProjectionResult(current, tuple(applied), ())
        changed = False
        for check in failing:
            rule = _RULES.get(check.repair or "")
            if rule is None:
                continue
            repaired = rule(current, template_manifest)
            if repaired != current:
                current = repaired
                applied.append(f"{check.repair}:{check.id}")
                changed = True
        if not changed:
            break
    unresolved = tuple(c.id for c in checks if c.evaluator(current, None) > 0)
    return ProjectionResult(current, tuple(applied), unresolved)


def manifest_unique_check() -> Constraint:
    return Constraint(
        id="manifest_unique",
        description="component manifest must not repeat ids",
        evaluator=lambda artifact, _:
            float(len(artifact.manifest) - len(set(artifact.manifest_ids()))),
        requires_execution=False,
        projectable=True,
        repair=_DEDUPE,
    )


def manifest_complete_check(template_manifest: tuple[ManifestEntry, ...]) -> Constraint:
    required = tuple(e.component for e in template_manifest)

    def missing(artifact: ProgramArtifact, _results) -> float:
        present = set(artifact.manifest_ids())
        return float(sum(1 for r in required if r not in present))

    return Constraint(
        id="manifest_complete",
        description="every template component present in the manifest",
        evaluator=missing,
        requires_execution=False,
        projectable=True,
        repair=_RESTORE,
    )


# ---------------------------------------------------------------------------
# the refinement loop

@dataclass(frozen=True)
class TgdComponents:
    """The five collaborating roles; any can be swapped for an external
    adapter implementing the same call signature."""

    generator: object  # generate(task, template), patch(artifact, gradient)
    executor: object  # run(artifact) -> results mapping
    constraints: tuple[Constraint, ...]
    feedback: object  # build(artifact, report, results) -> TextualGradient
    projection: Callable[[ProgramArtifact], ProgramArtifact]


@dataclass(frozen=True)
class TgdResult:
    artifact: ProgramArtifact
    log: DecisionLog
    converged: bool
    loss_history: tuple[float, ...]
    refinement_rounds: int


def _call(role: str, iteration: int, fn, *args):
    try:
        return fn(*args)
    except TgdError:
        raise
    except Exception as exc:
        raise TgdError(f"{role} failed at iteration {iteration}: {exc}") from exc


def run_tgd(
    task,
    template,
    components: TgdComponents,
    max_rounds: int = 8,
) -> TgdResult:
    """Generate an initial artifact from the template, then iterate
    evaluate / feedback / patch / project until the loss reaches zero or the
    round budget runs out (then the lowest-loss artifact seen is returned,
    flagged non-converged)."""
    artifact = _call("code_generator", 0, components.generator.generate, task, template)

    entries: list[DecisionEntry] = []
    loss_history: list[float] = []
    best = artifact
    best_loss = float("inf")
    rounds = 0

    for t in range(max_rounds):
        results, failed = _run_executor(artifact, components.executor)
        report = _call(
            "result_evaluator", t, _score, artifact, results, failed,
            components.constraints,
        )
        loss = report.loss
        loss_history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = artifact
        scores = convergence_scores(report, components.constraints)

        if loss == 0.0:
            entries.append(
                DecisionEntry(
                    iteration=t,
                    iteration_reason="all constraints satisfied",
                    convergence_assessment=scores,
                    next_iteration_focus="none",
                    agent_adjustments="none",
                )
            )
            return TgdResult(
                artifact=artifact,
                log=DecisionLog(tuple(entries)),
                converged=True,
                loss_history=tuple(loss_history),
                refinement_rounds=rounds,
            )

        gradient = _call(
            "feedback_generator", t, components.feedback.build, artifact, report, results
        )
        patched = _call("code_generator", t, components.generator.patch, artifact, gradient)
        artifact = _call("projection", t, components.projection, patched)
        rounds += 1
        entries.append(
            DecisionEntry(
                iteration=t,
                iteration_reason="violated constraints: "
                + ", ".join(report.violated_ids()),
                convergence_assessment=scores,
                next_iteration_focus="; ".join(gradient.directives) or "unspecified",
                agent_adjustments=(
                    f"code_generator applied {len(gradient.directives)} directive(s); "
                    "projection re-checked manifest feasibility"
                ),
            )
        )

    return TgdResult(
        artifact=best,
        log=DecisionLog(tuple(entries)),
        converged=False,
        loss_history=tuple(loss_history),
        refinement_rounds=rounds,
    )


# ---------------------------------------------------------------------------
# code score

@dataclass(frozen=True)
class RequirementSpec:
    requirements: tuple[ManifestEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "requirements", tuple(self.requirements))
        ids = [e.component for e in self.requirements]
        if len(set(ids)) != len(ids):
            raise TgdError("duplicate requirement ids")

    @property
    def n_total(self) -> int:
        return len(self.requirements)


def code_score(manifest: Sequence[ManifestEntry], spec: RequirementSpec) -> float:
    """N_correct / (N_total + N_extra).

    Correct: a required component present with exactly the required
    configuration (several manifest copies of one requirement count once).
    Extra: manifest entries matching no required id.
    """
    if not spec.requirements:
        raise TgdError("no requirements defined")
    required = {e.component: e.config for e in spec.requirements}
    matched: set[str] = set()
    n_extra = 0
    for entry in manifest:
        want = required.get(entry.component)
        if want is None:
            n_extra += 1
        elif entry.config == want:
            matched.add(entry.component)
    return len(matched) / (spec.n_total + n_extra)


# ---------------------------------------------------------------------------
# deterministic scripted components (testing and offline demos)

class ScriptedGenerator:
    """Generator planting known manifest faults; each patch round repairs the
    single component named by the gradient, unless it is unrepairable."""

    def __init__(self, required: tuple[ManifestEntry, ...],
                 faults: tuple[str, ...], unrepairable: tuple[str, ...] = ()):
        missing = [f for f in faults if f not in {e.component for e in required}]
        if missing:
            raise TgdError(f"faults not in required set: {missing}")
        self.required = required
        self.faults = tuple(faults)
        self.unrepairable = tuple(unrepairable)

    def generate(self, task, template) -> ProgramArtifact:
        broken = set(self.faults) | set(self.unrepairable)
        manifest = tuple(e for e in self.required if e.component not in broken)
        return ProgramArtifact(body=f"# pipeline for {task}\n", manifest=manifest)

    def patch(self, artifact: ProgramArtifact, gradient: TextualGradient) -> ProgramArtifact:
        manifest = artifact.manifest
        for directive in gradient.directives:
            if not directive.startswith("add component "):
                continue
            component = directive[len("add component "):]
            if component in self.unrepairable:
                continue
            entry = next(e for e in self.required if e.component == component)
            if component not in {e.component for e in manifest}:
                manifest = manifest + (entry,)
        return replace(artifact, manifest=manifest)


class ManifestExecutor:
    """Trivial executor: reports which components the manifest claims."""

    def run(self, artifact: ProgramArtifact) -> dict:
        return {"components": artifact.manifest_ids(), "ok": True}


class CrashingExecutor:
    def run(self, artifact):
        raise RuntimeError("simulated executor crash")


class FirstViolationFeedback:
    """Emits one directive per round: repair the first violated component
    constraint (deterministic order)."""

    def __init__(self):
        self._iteration = -1

    def build(self, artifact, report: ConstraintReport, results) -> TextualGradient:
        self._iteration += 1
        violated = report.violated_ids()
        components = tuple(
            cid[len("has_"):] for cid in violated if cid.startswith("has_")
        )
        directives = tuple(
            [f"add component {components[0]}"] if components else []
        )
        return TextualGradient(
            violated_constraints=violated,
            located_components=components[:1],
            directives=directives,
            iteration=self._iteration,
        )


def component_presence_constraints(
    required: tuple[ManifestEntry, ...]
) -> tuple[Constraint, ...]:
    """One constraint per required component; alternating static/dynamic so
    the rubric exercises both groups."""

    def has(component: str):
        def check(artifact: ProgramArtifact, _results) -> float:
            return -1.0 if component in artifact.manifest_ids() else 1.0

        return check

    return tuple(
        Constraint(
            id=f"has_{entry.component}",
            description=f"manifest must include {entry.component}",
            evaluator=has(entry.component),
            requires_execution=bool(i % 2),
        )
        for i, entry in enumerate(required)
    )


def scripted_fault_components(
    required: tuple[ManifestEntry, ...],
    faults: tuple[str, ...],
    unrepairable: tuple[str, ...] = (),
) -> TgdComponents:
    """Bundle the scripted roles around a required-component set."""
    unique = manifest_unique_check()

    def projection(artifact: ProgramArtifact) -> ProgramArtifact:
        return project(artifact, [unique]).artifact

    return TgdComponents(
        generator=ScriptedGenerator(required, faults, unrepairable),
        executor=ManifestExecutor(),
        constraints=component_presence_constraints(required),
        feedback=FirstViolationFeedback(),
        projection=projection,
    )
