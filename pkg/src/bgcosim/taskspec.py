"""Task specifications and the end-to-end run pipeline.

A task spec is a structured text file naming a scenario (network + fleet +
simulation config), the control modes to evaluate, the grid analyses to run,
and the output formats. run() executes the stages in order -- optional
training, one evaluation episode per control mode, grid analyses on the
episode's worst-voltage and peak-load snapshots, serialization -- and
returns a RunManifest listing every produced file with its checksum.

Free-text task descriptions are carried through untouched for external
planner adapters; the pipeline itself consumes only the structured fields.
"""

from __future__ import annotations

import hashlib
import pathlib
from dataclasses import dataclass, field, replace
from typing import Mapping

from bgcosim import __version__, netfile, textdoc
from bgcosim.analysis import (
    SecurityLimits,
    contingencies_to_csv,
    n_minus_1,
    screen,
    screening_to_csv,
    short_circuit_current,
    thevenin_at,
)
from bgcosim.buildings import (
    BuildingModel,
    BusMapping,
    aggregate_bus_loads,
    expand_instances,
    load_fleet,
)
from bgcosim.cosim import CoSimEnv, EpisodeTrace, SimulationConfig, run_episode, write_trace_csvs
from bgcosim.network import PowerNetwork, Shunt, build_ieee33, solve_power_flow
from bgcosim.plots import emit_plots
from bgcosim.policy import (
    DroopPolicy,
    PolicyParams,
    TrainerConfig,
    load_params,
    no_control,
    save_params,
    train,
)


class TaskSpecError(ValueError):
    """Malformed or inconsistent task specification."""


CONTROL_NONE = "none"
CONTROL_DROOP = "droop"
CONTROL_TRAIN = "train"

_TOP_KEYS = {"format", "task_description", "scenario", "control", "analyses", "outputs"}
_SCENARIO_KEYS = {
    "network", "fleet", "horizon_steps", "dt_hours", "v_ref", "alpha",
    "voltage_tolerance_pu", "loading_threshold", "seed", "shunt",
}
_CONTROL_KEYS = {
    "name", "kind", "mode", "params", "deadband_pu", "slope", "seed",
    "population_size", "elite_fraction", "iterations", "episodes_per_candidate",
}
_ANALYSES_KEYS = {"screening", "n_minus_1", "short_circuit", "histograms"}
_OUTPUT_KEYS = {"directory", "formats"}

TASK_FORMAT = "bgcosim-task/1"


@dataclass(frozen=True)
class ControlSpec:
    name: str
    kind: str  # none | droop | train
    mode: str = "decentralized"
    params: PolicyParams | None = None  # droop
    trainer: TrainerConfig | None = None  # train


@dataclass(frozen=True)
class AnalysesSpec:
    screening: bool = False
    n_minus_1: bool = False
    short_circuit: tuple[int, ...] = ()
    histograms: bool = False

    @property
    def any(self) -> bool:
        return bool(self.screening or self.n_minus_1 or self.short_circuit or self.histograms)


@dataclass(frozen=True)
class TaskSpec:
    description: str
    network: PowerNetwork
    fleet: dict[str, BuildingModel]
    mapping: BusMapping
    config: SimulationConfig
    controls: tuple[ControlSpec, ...]
    analyses: AnalysesSpec
    out_dir: str
    formats: tuple[str, ...]


def _check_keys(entry: Mapping, allowed: set[str], what: str) -> None:
    unknown = sorted(set(entry) - allowed)
    if unknown:
        raise TaskSpecError(f"unknown keys in {what}: {', '.join(unknown)}")


def _resolve_network(name: str, base_dir: pathlib.Path) -> PowerNetwork:
    if name == "ieee33":
        return build_ieee33()
    path = base_dir / name
    if not path.exists():
        raise TaskSpecError(f"network file not found: {path}")
    return netfile.load_network(path)


def parse_task_spec(text: str, base_dir: pathlib.Path) -> TaskSpec:
    doc = textdoc.loads(text)
    _check_keys(doc, _TOP_KEYS, "task spec")
    if doc.get("format") != TASK_FORMAT:
        raise TaskSpecError(f"unsupported task format {doc.get('format')!r}")

    scenario = doc.get("scenario")
    if not isinstance(scenario, dict):
        raise TaskSpecError("task spec needs a [scenario] table")
    _check_keys(scenario, _SCENARIO_KEYS, "scenario")

    horizon = int(scenario.get("horizon_steps", 24))
    dt_hours = float(scenario.get("dt_hours", 1.0))
    net = _resolve_network(str(scenario.get("network", "ieee33")), base_dir)
    for entry in scenario.get("shunt", []):
        _check_keys(entry, {"bus", "q_mvar"}, "scenario shunt")
        net = net.with_shunt(Shunt(bus=int(entry["bus"]), q_mvar=float(entry["q_mvar"])))

    fleet: dict[str, BuildingModel] = {}
    mapping = BusMapping(())
    if "fleet" in scenario:
        fleet_path = base_dir / str(scenario["fleet"])
        if not fleet_path.exists():
            raise TaskSpecError(f"fleet file not found: {fleet_path}")
        fleet, mapping = load_fleet(fleet_path, horizon, dt_hours)

    limits = SecurityLimits.from_voltage_tolerance(
        float(scenario.get("voltage_tolerance_pu", 0.05)),
        float(scenario.get("loading_threshold", 1.0)),
    )
    config = SimulationConfig(
        horizon_steps=horizon,
        dt_hours=dt_hours,
        v_ref=float(scenario.get("v_ref", 1.0)),
        alpha=float(scenario.get("alpha", 10.0)),
        limits=limits,
        seed=int(scenario.get("seed", 0)),
    )

    controls = []
    seen_names = set()
    for entry in doc.get("control", []):
        _check_keys(entry, _CONTROL_KEYS, "control entry")
        kind = str(entry.get("kind", CONTROL_NONE))
        name = str(entry.get("name", kind))
        if name in seen_names:
            raise TaskSpecError(f"duplicate control name {name!r}")
        seen_names.add(name)
        mode = str(entry.get("mode", "decentralized"))
        if kind == CONTROL_NONE:
            controls.append(ControlSpec(name=name, kind=kind, mode=mode))
        elif kind == CONTROL_DROOP:
            if "params" in entry:
                params_path = base_dir / str(entry["params"])
                if not params_path.exists():
                    raise TaskSpecError(f"params file not found: {params_path}")
                params = load_params(params_path)
            else:
                params = PolicyParams(
                    deadband_pu=float(entry.get("deadband_pu", 0.01)),
                    slope=float(entry.get("slope", 10.0)),
                    mode=mode,
                )
            controls.append(ControlSpec(name=name, kind=kind, mode=mode, params=params))
        elif kind == CONTROL_TRAIN:
            trainer = TrainerConfig(
                population_size=int(entry.get("population_size", 12)),
                elite_fraction=float(entry.get("elite_fraction", 0.25)),
                iterations=int(entry.get("iterations", 5)),
                episodes_per_candidate=int(entry.get("episodes_per_candidate", 1)),
                seed=int(entry.get("seed", config.seed)),
            )
            controls.append(ControlSpec(name=name, kind=kind, mode=mode, trainer=trainer))
        else:
            raise TaskSpecError(f"unknown control kind {kind!r}")

    analyses_doc = doc.get("analyses", {})
    _check_keys(analyses_doc, _ANALYSES_KEYS, "analyses")
    analyses = AnalysesSpec(
        screening=bool(analyses_doc.get("screening", False)),
        n_minus_1=bool(analyses_doc.get("n_minus_1", False)),
        short_circuit=tuple(int(b) for b in analyses_doc.get("short_circuit", [])),
        histograms=bool(analyses_doc.get("histograms", False)),
    )

    outputs = doc.get("outputs", {})
    _check_keys(outputs, _OUTPUT_KEYS, "outputs")
    formats = tuple(outputs.get("formats", ["csv", "svg"]))
    for fmt in formats:
        if fmt not in ("csv", "svg"):
            raise TaskSpecError(f"unknown output format {fmt!r}")

    if not controls and not analyses.any:
        raise TaskSpecError("task requests neither an episode run nor any analysis")
    if controls and not fleet:
        raise TaskSpecError("control entries require a fleet")
    if analyses.histograms and not controls:
        raise TaskSpecError("histograms analysis requires at least one control entry")
    for bus in analyses.short_circuit:
        if bus not in net.bus_index:
            raise TaskSpecError(f"short_circuit bus {bus} not in network")

    return TaskSpec(
        description=str(doc.get("task_description", "")),
        network=net,
        fleet=fleet,
        mapping=mapping,
        config=config,
        controls=tuple(controls),
        analyses=analyses,
        out_dir=str(outputs.get("directory", "out")),
        formats=formats,
    )


def load_task_spec(path) -> TaskSpec:
    p = pathlib.Path(path)
    if not p.exists():
        raise TaskSpecError(f"task spec not found: {p}")
    return parse_task_spec(p.read_text(encoding="utf-8"), base_dir=p.parent)


# ---------------------------------------------------------------------------
# run pipeline

@dataclass
class RunManifest:
    seed: int
    resolved: dict
    completed_stages: list[str] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)  # rel path -> sha256
    failed_stage: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None

    def to_text(self) -> str:
        doc: dict = {
            "format": "bgcosim-manifest/1",
            "tool": "bgcosim",
            "version": __version__,
            "seed": self.seed,
            "resolved": self.resolved,
            "completed_stages": list(self.completed_stages),
        }
        if self.failed_stage is not None:
            doc["failed_stage"] = self.failed_stage
            doc["error"] = self.error or ""
        doc["file"] = [
            {"path": path, "sha256": digest}
            for path, digest in sorted(self.files.items())
        ]
        return textdoc.dumps(doc)


def _sha256(path: pathlib.Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _register(manifest: RunManifest, out_root: pathlib.Path, *paths) -> None:
    for path in paths:
        p = pathlib.Path(path)
        manifest.files[str(p.relative_to(out_root)).replace("\\", "/")] = _sha256(p)


def _snapshot_loads(spec: TaskSpec, trace: EpisodeTrace) -> dict[str, dict]:
    """Bus loads at the worst-voltage and peak-aggregate-load steps.

    Trace net loads are keyed by building instance, so aggregation uses the
    same instance expansion the environment applies.
    """
    instances, mapping = expand_instances(spec.fleet, spec.mapping)
    worst = min(trace.records, key=lambda r: min(r.bus_voltages.values()))
    peak = max(
        trace.records,
        key=lambda r: sum(
            pw for pw, _ in aggregate_bus_loads(
                instances, r.net_loads_kw, mapping
            ).values()
        ),
    )
    return {
        "worst_voltage": aggregate_bus_loads(instances, worst.net_loads_kw, mapping),
        "peak_load": aggregate_bus_loads(instances, peak.net_loads_kw, mapping),
    }


def _write_short_circuit_csv(spec: TaskSpec, path: pathlib.Path) -> None:
    rows = ["bus,r_th_ohm,x_th_ohm,i_kss_ka"]
    for bus in spec.analyses.short_circuit:
        thev = thevenin_at(spec.network, bus)
        i_kss = short_circuit_current(thev, spec.network.bus(bus).nominal_kv)
        rows.append(f"{bus},{thev.r_th_ohm!r},{thev.x_th_ohm!r},{i_kss!r}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _run_grid_analyses(
    spec: TaskSpec,
    loads_by_snapshot: dict[str, dict],
    out: pathlib.Path,
    manifest: RunManifest,
    out_root: pathlib.Path,
) -> None:
    limits = spec.config.limits
    for label, loads in loads_by_snapshot.items():
        if spec.analyses.screening:
            result = solve_power_flow(spec.network, loads)
            report = screen(result, spec.network, limits)
            path = out / f"screening_{label}.csv"
            path.write_text(
                screening_to_csv(report, result, spec.network, limits),
                encoding="utf-8",
            )
            _register(manifest, out_root, path)
        if spec.analyses.n_minus_1:
            _, outcomes = n_minus_1(spec.network, loads, limits)
            path = out / f"n_minus_1_{label}.csv"
            path.write_text(contingencies_to_csv(outcomes), encoding="utf-8")
            _register(manifest, out_root, path)
    if spec.analyses.short_circuit:
        path = out / "short_circuit.csv"
        _write_short_circuit_csv(spec, path)
        _register(manifest, out_root, path)


def _policy_for(spec: TaskSpec, control: ControlSpec,
                out: pathlib.Path, manifest: RunManifest,
                out_root: pathlib.Path) -> DroopPolicy:
    if control.kind == CONTROL_NONE:
        return DroopPolicy(no_control(control.mode))
    if control.kind == CONTROL_DROOP:
        return DroopPolicy(control.params)
    # training stage
    def factory():
        return CoSimEnv(spec.network, spec.fleet, spec.mapping, spec.config)

    result = train(factory, control.trainer, mode=control.mode)
    params_path = out / "trained.params"
    save_params(result.params, params_path)
    _register(manifest, out_root, params_path)
    history = ["iteration,elite_mean_reward"]
    history += [f"{i},{v!r}" for i, v in enumerate(result.elite_mean_history)]
    history_path = out / "training_history.csv"
    history_path.write_text("\n".join(history) + "\n", encoding="utf-8")
    _register(manifest, out_root, history_path)
    return DroopPolicy(result.params)


_KPI_COMPARISON_KEYS = (
    "mean_voltage",
    "min_voltage",
    "max_voltage",
    "voltage_std",
    "cumulative_reward",
    "over_voltage_steps",
    "under_voltage_steps",
    "nominal_steps",
    "voltage_violation_samples",
)


def run(spec: TaskSpec, out_dir=None, seed=None, formats=None) -> RunManifest:
    """Execute a task spec; optional overrides replace the spec's output
    directory, seed, and formats. Stage failures are recorded in the manifest
    (partial outputs retained), never raised."""
    if seed is not None:
        config = replace(spec.config, seed=int(seed))
        controls = tuple(
            replace(c, trainer=replace(c.trainer, seed=int(seed)))
            if c.kind == CONTROL_TRAIN else c
            for c in spec.controls
        )
        spec = replace(spec, config=config, controls=controls)
    if formats is not None:
        spec = replace(spec, formats=tuple(formats))
    out_root = pathlib.Path(out_dir if out_dir is not None else spec.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest(
        seed=spec.config.seed,
        resolved={
            "network": spec.network.name or "custom",
            "buses": len(spec.network.buses),
            "lines": len(spec.network.lines),
            "shunts": len(spec.network.shunts),
            "buildings": len(spec.fleet),
            "horizon_steps": spec.config.horizon_steps,
            "dt_hours": spec.config.dt_hours,
            "v_ref": spec.config.v_ref,
            "v_min": spec.config.limits.v_min,
            "v_max": spec.config.limits.v_max,
            "loading_threshold": spec.config.limits.loading_threshold,
            "controls": [c.name for c in spec.controls],
            "formats": list(spec.formats),
        },
    )

    kpis_by_control: dict[str, EpisodeTrace] = {}
    stage = "resolve"
    try:
        manifest.completed_stages.append(stage)

        for control in spec.controls:
            out = out_root / control.name
            out.mkdir(parents=True, exist_ok=True)
            if control.kind == CONTROL_TRAIN:
                stage = f"train:{control.name}"
            policy = _policy_for(spec, control, out, manifest, out_root)
            if control.kind == CONTROL_TRAIN:
                manifest.completed_stages.append(stage)

            stage = f"episode:{control.name}"
            env = CoSimEnv(spec.network, spec.fleet, spec.mapping, spec.config)
            trace = run_episode(env, policy)
            kpis_by_control[control.name] = trace
            if "csv" in spec.formats:
                names = write_trace_csvs(trace, spec.network, out)
                _register(manifest, out_root, *(out / n for n in names))
            manifest.completed_stages.append(stage)

            if spec.analyses.any:
                stage = f"analyses:{control.name}"
                snapshots = _snapshot_loads(spec, trace)
                _run_grid_analyses(spec, snapshots, out, manifest, out_root)
                if spec.analyses.histograms:
                    names = emit_plots(trace, spec.analyses, out, spec.formats)
                    _register(manifest, out_root, *(out / n for n in names))
                manifest.completed_stages.append(stage)

        if not spec.controls and spec.analyses.any:
            stage = "analyses:nominal"
            out = out_root / "analysis"
            out.mkdir(parents=True, exist_ok=True)
            nominal = {"nominal": spec.network.nominal_load_map()}
            _run_grid_analyses(spec, nominal, out, manifest, out_root)
            manifest.completed_stages.append(stage)

        if len(kpis_by_control) >= 2:
            stage = "comparison"
            rows = ["kpi," + ",".join(kpis_by_control)]
            for key in _KPI_COMPARISON_KEYS:
                values = [
                    repr(getattr(trace.kpis, key)) for trace in kpis_by_control.values()
                ]
                rows.append(f"{key}," + ",".join(values))
            path = out_root / "kpi_comparison.csv"
            path.write_text("\n".join(rows) + "\n", encoding="utf-8")
            _register(manifest, out_root, path)
            manifest.completed_stages.append(stage)
    except Exception as exc:
        manifest.failed_stage = stage
        manifest.error = f"{type(exc).__name__}: {exc}"

    (out_root / "run_manifest.txt").write_text(manifest.to_text(), encoding="utf-8")
    return manifest


def run_training_only(spec: TaskSpec, out_dir=None, seed=None) -> RunManifest:
    """Execute only the training stages of a spec (the `train` subcommand)."""
    trained = tuple(c for c in spec.controls if c.kind == CONTROL_TRAIN)
    if not trained:
        raise TaskSpecError("spec has no control entries with kind = \"train\"")
    spec = replace(spec, controls=trained, analyses=AnalysesSpec())
    if seed is not None:
        spec = replace(
            spec,
            controls=tuple(
                replace(c, trainer=replace(c.trainer, seed=int(seed))) for c in trained
            ),
        )
    out_root = pathlib.Path(out_dir if out_dir is not None else spec.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(seed=spec.config.seed, resolved={"controls": [c.name for c in spec.controls]})
    stage = "resolve"
    try:
        manifest.completed_stages.append(stage)
        for control in spec.controls:
            stage = f"train:{control.name}"
            out = out_root / control.name
            out.mkdir(parents=True, exist_ok=True)
            _policy_for(spec, control, out, manifest, out_root)
            manifest.completed_stages.append(stage)
    except Exception as exc:
        manifest.failed_stage = stage
        manifest.error = f"{type(exc).__name__}: {exc}"
    (out_root / "run_manifest.txt").write_text(manifest.to_text(), encoding="utf-8")
    return manifest
