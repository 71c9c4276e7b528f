"""Acceptance suite: one test per acceptance criterion, each printing a
PASS line (run with -s or -v to see them). Tolerances are pinned here and
nowhere else."""

import time
from importlib import resources

import numpy as np
import pytest

from bgcosim.analysis import (
    SecurityLimits,
    TheveninEquivalent,
    n_minus_1,
    screen,
    short_circuit_current,
)
from bgcosim.buildings import parse_fleet
from bgcosim.cli import main
from bgcosim.cosim import CoSimEnv, SimulationConfig, reward, run_episode
from bgcosim.dag import (
    CandidateSet,
    GreedyClosureRetriever,
    extract_template,
    repair_loop,
    validate,
)
from bgcosim.network import (
    Bus,
    ExternalGrid,
    Line,
    Load,
    PowerNetwork,
    build_ieee33,
    scale_loads,
    solve_power_flow,
)
from bgcosim.policy import DroopPolicy, TrainerConfig, no_control, train
from bgcosim.tgd import (
    ManifestEntry,
    RequirementSpec,
    code_score,
    run_tgd,
    scripted_fault_components,
)
from oracles import backward_forward_sweep, random_radial_network, reward_fsum, short_circuit_mp
from test_dag import closure_oracle, random_dag

V_TOL = 1e-6  # p.u., power-flow vs sweep oracle
REL_TOL = 1e-9  # relative, formula oracles


def test_criterion_power_flow_correctness(ieee33):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(200):
        n = int(rng.integers(3, 41))
        net = random_radial_network(rng, n)
        result = solve_power_flow(net)
        assert result.converged
        oracle = backward_forward_sweep(net, tol=1e-10)
        for bus in net.bus_ids:
            assert abs(result.voltage_magnitude(bus) - abs(oracle[bus])) < V_TOL
        checked += 1
    nominal = ieee33.nominal_load_map()
    for lam in (0.5, 1.0, 1.5):
        loads = scale_loads(nominal, lam)
        result = solve_power_flow(ieee33, loads)
        assert result.converged
        oracle = backward_forward_sweep(ieee33, loads, tol=1e-10)
        for bus in ieee33.bus_ids:
            assert abs(result.voltage_magnitude(bus) - abs(oracle[bus])) < V_TOL
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"runtime {elapsed:.2f}s exceeds 5s"
    print(
        f"\nPASS power-flow correctness: {checked} random radial networks + "
        f"33-bus at 0.5/1.0/1.5x within {V_TOL} p.u. in {elapsed:.2f}s"
    )


def _relative_error(got, want):
    scale = max(abs(want), 1e-30)
    return abs(got - want) / scale


def test_criterion_grid_metric_formulas(ieee33):
    rng = np.random.default_rng(31337)

    # screen: randomized voltages/flows against direct bound comparison
    base_result = solve_power_flow(ieee33)
    for _ in range(1000):
        vm = rng.uniform(0.85, 1.15, size=len(ieee33.buses))
        flows = {
            l.id: float(rng.uniform(0.0, 6.0)) for l in ieee33.in_service_lines()
        }
        fake = type(base_result)(
            bus_ids=ieee33.bus_ids,
            vm=np.array(vm),
            va=np.zeros(len(vm)),
            line_flow_mva=flows,
            converged=True,
            iterations=1,
            max_mismatch=0.0,
        )
        v_lo, v_hi = sorted(rng.uniform(0.9, 1.1, size=2))
        if v_hi - v_lo < 1e-3:
            v_hi = v_lo + 1e-3
        thr = float(rng.uniform(0.3, 1.2))
        limits = SecurityLimits(v_lo, v_hi, thr)
        report = screen(fake, ieee33, limits)
        want_v = {
            bus: float(v)
            for bus, v in zip(ieee33.bus_ids, vm)
            if not v_lo <= v <= v_hi
        }
        assert {x.bus: x.v_pu for x in report.voltage_violations} == want_v
        want_l = {
            l.id: flows[l.id]
            for l in ieee33.in_service_lines()
            if flows[l.id] > thr * l.rating_mva
        }
        assert {x.line: x.s_mva for x in report.loading_violations} == want_l

    # short-circuit current against the long-precision oracle
    for _ in range(1000):
        r = float(rng.uniform(0.001, 30.0))
        x = float(rng.uniform(0.0, 30.0))
        u = float(rng.uniform(0.4, 150.0))
        got = short_circuit_current(TheveninEquivalent(1, r, x), u)
        assert _relative_error(got, short_circuit_mp(r, x, u)) < REL_TOL

    # voltage-deviation reward against the compensated-summation oracle
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        v = {i: float(rng.uniform(0.8, 1.2)) for i in range(n)}
        alpha = float(rng.uniform(0.5, 20.0))
        v_ref = float(rng.uniform(0.95, 1.05))
        cfg = SimulationConfig(horizon_steps=1, v_ref=v_ref, alpha=alpha)
        got = reward(v, cfg)
        want = reward_fsum(v, v_ref, {i: alpha for i in v})
        assert _relative_error(got, want) < REL_TOL

    # code score against direct counting
    for _ in range(1000):
        n_req = int(rng.integers(1, 12))
        spec = RequirementSpec(
            tuple(ManifestEntry.make(f"c{i}", k=i) for i in range(n_req))
        )
        manifest = []
        for i in range(n_req):
            if rng.random() < 0.6:
                if rng.random() < 0.8:
                    manifest.append(spec.requirements[i])
                else:
                    manifest.append(ManifestEntry.make(f"c{i}", k=i + 1000))
        n_extra = int(rng.integers(0, 5))
        manifest += [ManifestEntry.make(f"x{i}") for i in range(n_extra)]
        got = code_score(tuple(manifest), spec)
        correct = sum(1 for e in spec.requirements if e in manifest)
        want = correct / (n_req + n_extra)
        assert _relative_error(got, want) < REL_TOL

    print("\nPASS grid-metric formulas: screen, short-circuit, reward, code "
          f"score each match oracles on 1000 random inputs within {REL_TOL} relative")


def test_criterion_n_minus_1_structure(ieee33):
    wide = SecurityLimits(v_min=0.5, v_max=1.4, loading_threshold=1.5)
    count, outcomes = n_minus_1(ieee33, limits=wide)
    assert count == 32
    assert all(o.classification == "unsafe" and o.cause == "islanding" for o in outcomes)

    triangle = PowerNetwork(
        buses=(
            Bus(1, "slack", nominal_kv=1.0),
            Bus(2, nominal_kv=1.0),
            Bus(3, nominal_kv=1.0),
        ),
        lines=(
            Line(1, 1, 2, 0.01, 0.05, rating_mva=10.0),
            Line(2, 2, 3, 0.01, 0.05, rating_mva=10.0),
            Line(3, 1, 3, 0.01, 0.05, rating_mva=10.0),
        ),
        external_grid=ExternalGrid(bus=1, source_r_ohm=0.01, source_x_ohm=0.02),
        base_mva=1.0,
        nominal_loads=(Load(3, 0.001, 0.0005),),
    )
    count3, outcomes3 = n_minus_1(triangle, limits=wide)
    assert count3 == 0
    assert all(o.classification == "safe" for o in outcomes3)
    print("\nPASS N-1 structural check: radial 33-bus gives R=32 all islanding; "
          "triangle gives R=0")


def _scenario(name, horizon=24):
    net = build_ieee33()
    text = (resources.files("bgcosim") / f"data/fleets/{name}.fleet").read_text(
        encoding="utf-8"
    )
    fleet, mapping = parse_fleet(text, horizon, 1.0)
    config = SimulationConfig(horizon_steps=horizon, seed=7)
    return lambda: CoSimEnv(net, fleet, mapping, config)


def test_criterion_qualitative_directionality():
    start = time.perf_counter()
    trainer = TrainerConfig(
        population_size=16, elite_fraction=0.25, iterations=6, seed=7
    )

    # high-PV scenario: spread reduction and the over-voltage load shift
    factory = _scenario("high_pv")
    baseline = run_episode(factory(), DroopPolicy(no_control()))
    trained_params = train(factory, trainer).params
    controlled = run_episode(factory(), DroopPolicy(trained_params))

    b_kpi, c_kpi = baseline.kpis, controlled.kpis
    assert c_kpi.voltage_std < b_kpi.voltage_std
    reduction = 1.0 - c_kpi.voltage_std / b_kpi.voltage_std
    assert reduction >= 0.30, f"std reduction {reduction:.1%} below 30%"

    b_over = b_kpi.net_load_by_regime["over_voltage"]
    c_over = c_kpi.net_load_by_regime["over_voltage"]
    assert b_over.total > 0 and c_over.total > 0
    assert c_over.bin_mass(1.0, 3.0) > b_over.bin_mass(1.0, 3.0)

    # low-PV variant: under-voltage load reduction into [-1, 1)
    factory = _scenario("low_pv")
    baseline_low = run_episode(factory(), DroopPolicy(no_control()))
    trained_low = train(factory, trainer).params
    controlled_low = run_episode(factory(), DroopPolicy(trained_low))
    b_under = baseline_low.kpis.net_load_by_regime["under_voltage"]
    c_under = controlled_low.kpis.net_load_by_regime["under_voltage"]
    assert b_under.total > 0 and c_under.total > 0
    assert c_under.bin_mass(-1.0, 1.0) > b_under.bin_mass(-1.0, 1.0)

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0, f"runtime {elapsed:.1f}s exceeds 2 min"
    print(
        f"\nPASS qualitative directionality: voltage-std reduction "
        f"{reduction:.1%} (>=30%), over-voltage [1,3) mass "
        f"{b_over.bin_mass(1.0, 3.0):.2f}->{c_over.bin_mass(1.0, 3.0):.2f}, "
        f"under-voltage [-1,1) mass {b_under.bin_mass(-1.0, 1.0):.2f}->"
        f"{c_under.bin_mass(-1.0, 1.0):.2f} in {elapsed:.1f}s"
    )


def test_criterion_workflow_dag_properties():
    rng = np.random.default_rng(777)
    solvable_checked = 0
    unsolvable_checked = 0
    for i in range(1000):
        phantom = i % 5 == 4
        dag = random_dag(rng, phantom=phantom)
        ids = list(dag.nodes)

        # validate vs brute-force closure oracle
        size = int(rng.integers(1, len(ids) + 1))
        picks = rng.choice(len(ids), size=size, replace=False)
        candidate = CandidateSet(tuple(ids[int(p)] for p in picks))
        report = validate(dag, candidate)
        got = {(m.node, m.key) for m in report.missing_dependencies}
        assert got == closure_oracle(dag, candidate)

        # template extraction respects every edge
        store = {nid: f"# {nid}" for nid in ids}
        template = extract_template(dag, CandidateSet(tuple(ids)), store)
        pos = {nid: p for p, nid in enumerate(template.node_ids)}
        for a, b in dag.edges:
            assert pos[a] < pos[b]

        # greedy repair: solvable tasks converge within DAG depth
        retriever = GreedyClosureRetriever(dag)
        if phantom:
            result = repair_loop(dag, ["needy"], retriever, t_dag_max=6)
            assert not result.converged
            assert result.rounds == 6
            assert "nowhere_key" in result.report.unmet_keys()
            unsolvable_checked += 1
        else:
            seeds = tuple(
                ids[int(p)]
                for p in rng.choice(len(ids), size=min(3, len(ids)), replace=False)
            )
            result = repair_loop(dag, seeds, retriever, t_dag_max=len(ids) + 1)
            assert result.converged
            assert result.rounds <= max(1, dag.depth())
            solvable_checked += 1
    print(
        f"\nPASS workflow-DAG properties: 1000 random DAGs "
        f"({solvable_checked} solvable, {unsolvable_checked} unsolvable tasks)"
    )


TGD_REQUIRED = tuple(
    ManifestEntry.make(name, stage=stage)
    for name, stage in [
        ("load_network", "scenario"),
        ("load_fleet", "scenario"),
        ("build_environment", "simulation"),
        ("run_episode", "simulation"),
        ("summarize_kpis", "analysis"),
        ("screen_operating_limits", "analysis"),
        ("count_contingency_failures", "analysis"),
        ("export_csv", "reporting"),
    ]
)


@pytest.mark.parametrize("k", [0, 1, 3, 7])
def test_criterion_tgd_k_fault_rounds(k):
    faults = tuple(e.component for e in TGD_REQUIRED[:k])
    components = scripted_fault_components(TGD_REQUIRED, faults=faults)
    result = run_tgd("acceptance", None, components, max_rounds=k + 3)
    assert result.converged
    assert result.refinement_rounds == k
    losses = result.loss_history
    assert losses[-1] == 0.0
    assert all(a > b for a, b in zip(losses, losses[1:]))
    print(f"\nPASS TGD loop: k={k} faults repaired in exactly {k} rounds, "
          f"loss {[float(l) for l in losses]}")


def test_criterion_tgd_unrepairable_and_reproducible():
    def run_once():
        components = scripted_fault_components(
            TGD_REQUIRED, faults=("load_fleet",), unrepairable=("export_csv",)
        )
        return run_tgd("acceptance", None, components, max_rounds=6)

    result = run_once()
    assert not result.converged
    assert result.refinement_rounds == 6
    assert min(result.loss_history) == result.loss_history[-1] == 1.0
    assert "export_csv" not in result.artifact.manifest_ids()
    assert "load_fleet" in result.artifact.manifest_ids()

    again = run_once()
    assert again.artifact == result.artifact
    assert again.loss_history == result.loss_history
    assert again.log.to_text() == result.log.to_text()
    print("\nPASS TGD loop: unrepairable fault stops at budget with minimum-loss "
          "artifact; fixed-seed rerun bit-identical including the decision log")


def test_criterion_code_score_fixed_point():
    # external success-rate tables measure LLM behavior and are out of scope;
    # the deliverable checks the metric itself and its perfect-score regime
    spec = RequirementSpec(TGD_REQUIRED)
    assert code_score(TGD_REQUIRED, spec) == 1.0
    shuffled = TGD_REQUIRED[::-1]
    assert code_score(shuffled, spec) == 1.0
    print("\nPASS code-score fixed point: manifest == requirements scores exactly 1.0")


def test_criterion_end_to_end_determinism(tmp_path):
    spec_resource = resources.files("bgcosim") / "data/tasks/complex.task"
    spec_path = tmp_path / "complex.task"
    spec_path.write_text(spec_resource.read_text(encoding="utf-8"), encoding="utf-8")
    fleet_dir = tmp_path.parent / "fleets"
    # shipped task references ../fleets/complex.fleet relative to itself
    fleet_dir.mkdir(exist_ok=True)
    fleet_resource = resources.files("bgcosim") / "data/fleets/complex.fleet"
    (fleet_dir / "complex.fleet").write_text(
        fleet_resource.read_text(encoding="utf-8"), encoding="utf-8"
    )

    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", str(spec_path), "--out", str(out_a)]) == 0
    assert main(["run", str(spec_path), "--out", str(out_b)]) == 0

    files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel
    assert (out_a / "kpi_comparison.csv").exists()
    assert (out_a / "baseline" / "n_minus_1_worst_voltage.csv").exists()
    assert (out_a / "baseline" / "short_circuit.csv").exists()
    print(
        f"\nPASS end-to-end determinism: complex task ran twice with exit 0, "
        f"{len(files_a)} files byte-identical"
    )
