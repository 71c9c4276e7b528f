"""DAG-structured function codebase: construction, validation, repair,
template extraction.

Nodes declare typed input/output keys; an edge (a, b) exists when b consumes
a key a produces. Candidate execution sequences are validated against three
rules -- every input produced earlier (or declared a root), mandatory nodes
of touched stages present, edges respect the sequence order -- and the
structured report is what iterative retrievers repair against.
"""

from __future__ import annotations

import heapq
import pathlib
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from bgcosim import textdoc


class DagError(ValueError):
    """Invalid graph, candidate set, or registry."""


class DagCycleError(DagError):
    """The key-match graph contains a cycle."""

    def __init__(self, cycle: Sequence[str]):
        self.cycle = tuple(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle))


@dataclass(frozen=True)
class FunctionNode:
    id: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    stage: str
    mandatory: bool = False
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))


@dataclass(frozen=True)
class WorkflowDag:
    nodes: dict[str, FunctionNode]  # insertion order preserved
    edges: frozenset[tuple[str, str]]
    providers: dict[str, tuple[str, ...]]  # data key -> producing node ids
    ambiguous_keys: dict[str, tuple[str, ...]]  # keys with several producers

    def consumers_of(self, node_id: str) -> tuple[str, ...]:
        return tuple(sorted(b for a, b in self.edges if a == node_id))

    def depth(self) -> int:
        """Longest path length (edges) in the graph."""
        order = topological_order(self, self.nodes)
        dist = {n: 0 for n in self.nodes}
        for node in order:
            for a, b in self.edges:
                if a == node:
                    dist[b] = max(dist[b], dist[node] + 1)
        return max(dist.values(), default=0)


def _find_cycle(nodes: Iterable[str], edges: set[tuple[str, str]]) -> list[str] | None:
    adjacency: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in sorted(edges):
        adjacency[a].append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in adjacency}
    path: list[str] = []

    def visit(start: str) -> list[str] | None:
        stack = [(start, iter(adjacency[start]))]
        color[start] = GREY
        path.append(start)
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    return path[path.index(nxt):] + [nxt]
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    path.append(nxt)
                    stack.append((nxt, iter(adjacency[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                path.pop()
                stack.pop()
        return None

    for n in adjacency:
        if color[n] == WHITE:
            cycle = visit(n)
            if cycle:
                return cycle
    return None


def build_dag(nodes: Sequence[FunctionNode]) -> WorkflowDag:
    """Derive edges from input/output key matching.

    Two producers of one key are both linked to each consumer and the
    ambiguity is recorded on the graph. A cyclic result raises DagCycleError
    naming one offending cycle.
    """
    by_id: dict[str, FunctionNode] = {}
    for node in nodes:
        if node.id in by_id:
            raise DagError(f"duplicate node id {node.id!r}")
        by_id[node.id] = node

    providers: dict[str, list[str]] = {}
    for node in nodes:
        for key in node.outputs:
            providers.setdefault(key, []).append(node.id)

    edges: set[tuple[str, str]] = set()
    for node in nodes:
        for key in node.inputs:
            for producer in providers.get(key, []):
                edges.add((producer, node.id))

    cycle = _find_cycle(by_id, edges)
    if cycle:
        raise DagCycleError(cycle)

    return WorkflowDag(
        nodes=by_id,
        edges=frozenset(edges),
        providers={k: tuple(sorted(v)) for k, v in sorted(providers.items())},
        ambiguous_keys={
            k: tuple(sorted(v)) for k, v in sorted(providers.items()) if len(v) > 1
        },
    )


@dataclass(frozen=True)
class CandidateSet:
    ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        if len(set(self.ids)) != len(self.ids):
            raise DagError("duplicate ids in candidate set")

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, node_id) -> bool:
        return node_id in self.ids

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class MissingDependency:
    node: str  # the needy node
    key: str  # the unmet input key
    candidate_providers: tuple[str, ...]  # nodes in the codebase producing it


@dataclass(frozen=True)
class ValidationReport:
    missing_dependencies: tuple[MissingDependency, ...] = ()
    missing_mandatory: tuple[str, ...] = ()
    ordering_violations: tuple[tuple[str, str], ...] = ()
    unknown_nodes: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return not (
            self.missing_dependencies
            or self.missing_mandatory
            or self.ordering_violations
            or self.unknown_nodes
        )

    def unmet_keys(self) -> tuple[str, ...]:
        return tuple(sorted({m.key for m in self.missing_dependencies}))


def validate(
    dag: WorkflowDag,
    candidate: CandidateSet,
    roots: frozenset[str] | set[str] = frozenset(),
) -> ValidationReport:
    """Structured feedback for a candidate sequence.

    Reports every input key not produced by a strictly earlier member (or a
    declared root), every absent mandatory node of a stage the sequence
    touches, every edge whose endpoints appear out of order, and ids the
    codebase does not know (recorded, not raised).
    """
    unknown = tuple(i for i in candidate if i not in dag.nodes)
    known = [i for i in candidate if i in dag.nodes]
    position = {node_id: p for p, node_id in enumerate(known)}

    missing: list[MissingDependency] = []
    produced = set(roots)
    for node_id in known:
        node = dag.nodes[node_id]
        for key in node.inputs:
            if key not in produced:
                missing.append(
                    MissingDependency(
                        node=node_id,
                        key=key,
                        candidate_providers=dag.providers.get(key, ()),
                    )
                )
        produced.update(node.outputs)

    violations = sorted(
        (a, b)
        for a, b in dag.edges
        if a in position and b in position and position[a] >= position[b]
    )

    touched = {dag.nodes[i].stage for i in known}
    member = set(known)
    missing_mandatory = tuple(
        sorted(
            node_id
            for node_id, node in dag.nodes.items()
            if node.mandatory and node.stage in touched and node_id not in member
        )
    )

    return ValidationReport(
        missing_dependencies=tuple(missing),
        missing_mandatory=missing_mandatory,
        ordering_violations=tuple(violations),
        unknown_nodes=unknown,
    )


def topological_order(
    dag: WorkflowDag, members: Iterable[str]
) -> tuple[str, ...]:
    """Topological order of the induced subgraph, lexicographic tie-break."""
    member = set(members)
    indegree = {n: 0 for n in member}
    out: dict[str, list[str]] = {n: [] for n in member}
    for a, b in dag.edges:
        if a in member and b in member:
            indegree[b] += 1
            out[a].append(b)
    ready = [n for n in member if indegree[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for nxt in sorted(out[node]):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(member):
        raise DagError("cycle in induced subgraph")
    return tuple(order)


@dataclass(frozen=True)
class RepairResult:
    candidate: CandidateSet
    report: ValidationReport  # last validation; empty iff converged
    rounds: int  # refine calls performed

    @property
    def converged(self) -> bool:
        return self.report.empty


def repair_loop(
    dag: WorkflowDag,
    task,
    retriever,
    t_dag_max: int = 10,
    roots: frozenset[str] | set[str] = frozenset(),
) -> RepairResult:
    """Iterate propose / validate / refine until the report is empty or the
    round budget is exhausted; the final report stays attached either way."""
    try:
        candidate = retriever.propose(task)
    except Exception as exc:
        raise DagError(f"retriever failed at round 0: {exc}") from exc
    report = validate(dag, candidate, roots)
    rounds = 0
    while not report.empty and rounds < t_dag_max:
        try:
            candidate = retriever.refine(task, candidate, report)
        except Exception as exc:
            raise DagError(
                f"retriever failed at round {rounds + 1}: {exc}"
            ) from exc
        rounds += 1
        report = validate(dag, candidate, roots)
    return RepairResult(candidate=candidate, report=report, rounds=rounds)


class GreedyClosureRetriever:
    """Deterministic repair strategy used for testing and offline runs.

    propose() seeds the sequence with the task's requested node ids; each
    refine() drops unknown ids, adds one provider per unmet key (preferring
    providers already selected, then the lexicographically least), adds
    absent mandatory nodes, and reorders topologically. External retrievers
    (e.g. language-model planners) plug in through the same two methods.
    """

    def __init__(self, dag: WorkflowDag, roots: frozenset[str] | set[str] = frozenset()):
        self.dag = dag
        self.roots = frozenset(roots)

    def propose(self, task) -> CandidateSet:
        return CandidateSet(tuple(dict.fromkeys(task)))

    def refine(
        self, task, candidate: CandidateSet, report: ValidationReport
    ) -> CandidateSet:
        member = [i for i in candidate if i in self.dag.nodes]
        chosen = set(member)
        for miss in report.missing_dependencies:
            if miss.key in self.roots:
                continue
            options = [p for p in miss.candidate_providers if p in chosen]
            if not options:
                options = list(miss.candidate_providers)
            if not options:
                continue  # nobody provides this key; leave it for the report
            pick = sorted(options)[0]
            if pick not in chosen:
                member.append(pick)
                chosen.add(pick)
        for node_id in report.missing_mandatory:
            if node_id not in chosen:
                member.append(node_id)
                chosen.add(node_id)
        return CandidateSet(topological_order(self.dag, member))


@dataclass(frozen=True)
class Template:
    entries: tuple[tuple[str, str], ...]  # (node id, source fragment)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(node_id for node_id, _ in self.entries)


def extract_template(
    dag: WorkflowDag,
    candidate: CandidateSet,
    source_store: Mapping[str, str] | Callable[[str], str],
) -> Template:
    """Source fragments of a validated set in topological order (lexicographic
    tie-break). Requires validate(candidate) to be empty."""
    getter = source_store.__getitem__ if isinstance(source_store, Mapping) else source_store
    entries = []
    for node_id in topological_order(dag, candidate):
        try:
            fragment = getter(node_id)
        except KeyError:
            raise DagError(f"missing source fragment for node {node_id!r}") from None
        entries.append((node_id, fragment))
    return Template(entries=tuple(entries))


# ---------------------------------------------------------------------------
# registry file

REGISTRY_FORMAT = "bgcosim-registry/1"
_NODE_KEYS = {"id", "inputs", "outputs", "stage", "mandatory", "description", "source"}


def parse_registry(
    text: str, read_source: Callable[[str], str] | None = None
) -> tuple[list[FunctionNode], dict[str, str]]:
    """Parse a node registry; returns (nodes, source fragment store).

    ``read_source`` maps a registry-relative source path to its text; without
    it, entries carrying source paths are an error.
    """
    doc = textdoc.loads(text)
    unknown = sorted(set(doc) - {"format", "node"})
    if unknown:
        raise DagError(f"unknown keys in registry: {', '.join(unknown)}")
    if doc.get("format") != REGISTRY_FORMAT:
        raise DagError(f"unsupported registry format {doc.get('format')!r}")
    nodes = []
    sources: dict[str, str] = {}
    for entry in doc.get("node", []):
        bad = sorted(set(entry) - _NODE_KEYS)
        if bad:
            raise DagError(f"unknown keys in node entry: {', '.join(bad)}")
        node = FunctionNode(
            id=str(entry["id"]),
            inputs=tuple(entry.get("inputs", [])),
            outputs=tuple(entry.get("outputs", [])),
            stage=str(entry["stage"]),
            mandatory=bool(entry.get("mandatory", False)),
            description=str(entry.get("description", "")),
        )
        nodes.append(node)
        if "source" in entry:
            if read_source is None:
                raise DagError("registry has source paths but no source reader")
            sources[node.id] = read_source(str(entry["source"]))
    return nodes, sources


def load_registry(path) -> tuple[list[FunctionNode], dict[str, str]]:
    p = pathlib.Path(path)
    return parse_registry(
        p.read_text(encoding="utf-8"),
        read_source=lambda rel: (p.parent / rel).read_text(encoding="utf-8"),
    )


def load_default_registry() -> tuple[WorkflowDag, dict[str, str]]:
    """The registry shipped with the package, describing its own pipeline."""
    from importlib import resources

    data = resources.files("bgcosim") / "data"
    text = (data / "registry.nodes").read_text(encoding="utf-8")
    nodes, sources = parse_registry(
        text, read_source=lambda rel: (data / rel).read_text(encoding="utf-8")
    )
    return build_dag(nodes), sources


def report_to_text(report: ValidationReport) -> str:
    """Serialize the structured feedback handed to external retrievers."""
    doc: dict = {}
    if report.missing_dependencies:
        doc["missing_dependencies"] = [
            {
                "node": m.node,
                "key": m.key,
                "candidate_providers": list(m.candidate_providers),
            }
            for m in report.missing_dependencies
        ]
    doc["missing_mandatory"] = list(report.missing_mandatory)
    doc["ordering_violations"] = [f"{a}->{b}" for a, b in report.ordering_violations]
    doc["unknown_nodes"] = list(report.unknown_nodes)
    doc["empty"] = report.empty
    return textdoc.dumps(doc)
