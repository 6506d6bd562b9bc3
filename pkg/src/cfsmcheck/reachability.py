"""Exhaustive reachability analysis and protocol-error detectors.

:func:`explore` runs a breadth-first search over global states, so the
path recorded for every diagnostic is a shortest one.  On the finished
graph the detectors report deadlocks, unspecified receptions,
non-progress livelocks, channel overflows, and coverage gaps
(unreachable states/transitions and missing termination).

Livelock reporting is deliberately stricter than "the system has a
cycle": a strongly connected component is flagged only when it contains
at least one edge, none of its internal edges is marked ``progress``,
and no proper-termination state is reachable from it.  Benign protocol
loops escape on at least one of those conditions.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from .core import (
    GlobalState,
    SemanticsOptions,
    StateClass,
    System,
    DEFAULT_OPTIONS,
    _classify,
    apply_transition,
    canonical_state,
    enabled_transitions,
    initial_state,
)

__all__ = [
    "Edge",
    "ExploreLimits",
    "ReachabilityGraph",
    "Diagnostic",
    "TargetOutOfRangeError",
    "explore",
    "find_deadlocks",
    "find_unspecified_receptions",
    "find_livelocks",
    "find_overflows",
    "coverage",
    "all_diagnostics",
    "shortest_path",
    "export_dot",
    "report_json",
]


class TargetOutOfRangeError(IndexError):
    pass


@dataclass(frozen=True)
class Edge:
    """One labelled step: state ``src`` fires transition ``transition`` of
    machine ``machine`` with event label ``label``, reaching ``dst``."""

    src: int
    machine: int
    transition: int
    label: str
    dst: int


@dataclass(frozen=True)
class ExploreLimits:
    max_states: int = 1_000_000
    max_depth: int | None = None


@dataclass
class ReachabilityGraph:
    """Deduplicated global states with labelled edges; index 0 is initial.

    ``depths`` holds BFS layer numbers.  ``truncated`` is set when a
    limit stopped expansion, in which case absence of a state in the
    graph proves nothing.
    """

    system: System
    options: SemanticsOptions
    states: list[GlobalState]
    classes: list[StateClass]
    edges: list[Edge]
    depths: list[int]
    truncated: bool = False

    def canonical(self, index: int) -> str:
        return canonical_state(self.system, self.states[index])

    def states_of_class(self, cls: StateClass) -> list[int]:
        return [i for i, c in enumerate(self.classes) if c is cls]

    def edge_text(self, edge: Edge) -> str:
        """``machine:event`` rendering, e.g. ``A:lose ping to c1``."""
        m = self.system.machines[edge.machine]
        a = m.transitions[edge.transition].action
        if a.kind == "send":
            return f"{m.name}:{edge.label} {a.message} to {a.channel}"
        if a.kind == "recv":
            return f"{m.name}:recv {a.message} from {a.channel}"
        return f"{m.name}:{edge.label}"


@dataclass(frozen=True)
class Diagnostic:
    """One reported protocol defect.

    ``state`` indexes the offending state when there is a single one;
    ``cycle`` lists the states of a livelock component.  ``path`` holds
    edge indices replaying from the initial state to the offending state
    (for livelocks: to the witness cycle's entry state).
    """

    kind: str
    detail: str
    state: int | None = None
    cycle: tuple[int, ...] = ()
    path: tuple[int, ...] = ()


def explore(
    system: System,
    opts: SemanticsOptions = DEFAULT_OPTIONS,
    limits: ExploreLimits = ExploreLimits(),
) -> ReachabilityGraph:
    """Breadth-first state exploration from the initial global state.

    Successors are generated in the canonical order of
    :func:`enabled_transitions`; overflow-marked states are terminal and
    never expanded.  The result is deterministic for fixed inputs.
    """
    init = initial_state(system)
    states = [init]
    index = {init: 0}
    pending = {0: enabled_transitions(system, init, opts)}
    classes = [_classify(system, init, opts, pending[0])]
    depths = [0]
    edges: list[Edge] = []
    truncated = False

    queue = deque([0])
    while queue:
        i = queue.popleft()
        enabled = pending.pop(i)
        if classes[i] is StateClass.OVERFLOW:
            continue
        if limits.max_depth is not None and depths[i] >= limits.max_depth:
            if enabled:
                truncated = True
            continue
        for mi, ti in enabled:
            for succ, label in apply_transition(system, states[i], mi, ti, opts):
                j = index.get(succ)
                if j is None:
                    if len(states) >= limits.max_states:
                        truncated = True
                        continue
                    j = len(states)
                    index[succ] = j
                    states.append(succ)
                    succ_enabled = enabled_transitions(system, succ, opts)
                    pending[j] = succ_enabled
                    classes.append(_classify(system, succ, opts, succ_enabled))
                    depths.append(depths[i] + 1)
                    queue.append(j)
                edges.append(Edge(i, mi, ti, label, j))
    return ReachabilityGraph(system, opts, states, classes, edges, depths, truncated)


def shortest_path(graph: ReachabilityGraph, target: int) -> list[int]:
    """Edge indices of a minimal path from state 0 to ``target``.

    Among equally short paths the one built from the earliest edges in
    canonical order is returned; replaying it through
    ``apply_transition`` lands on ``target``.
    """
    if not 0 <= target < len(graph.states):
        raise TargetOutOfRangeError(target)
    if target == 0:
        return []
    adjacency: dict[int, list[tuple[int, int]]] = {}
    for ei, e in enumerate(graph.edges):
        adjacency.setdefault(e.src, []).append((ei, e.dst))
    parent: dict[int, int] = {0: -1}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        if i == target:
            break
        for ei, j in adjacency.get(i, ()):
            if j not in parent:
                parent[j] = ei
                queue.append(j)
    if target not in parent:
        raise TargetOutOfRangeError(target)
    path = []
    node = target
    while node != 0:
        ei = parent[node]
        path.append(ei)
        node = graph.edges[ei].src
    path.reverse()
    return path


def _stuck_diagnostics(graph: ReachabilityGraph, cls: StateClass, kind: str, detail) -> list[Diagnostic]:
    out = []
    for i in graph.states_of_class(cls):
        out.append(
            Diagnostic(
                kind=kind,
                detail=detail(i),
                state=i,
                path=tuple(shortest_path(graph, i)),
            )
        )
    return out


def find_deadlocks(graph: ReachabilityGraph) -> list[Diagnostic]:
    """One diagnostic per deadlock state, each with a shortest path."""

    def detail(i: int) -> str:
        return f"no transition enabled in {graph.canonical(i)}; every machine is waiting"

    return _stuck_diagnostics(graph, StateClass.DEADLOCK, "deadlock", detail)


def find_unspecified_receptions(graph: ReachabilityGraph) -> list[Diagnostic]:
    """One diagnostic per stuck state with an unreceivable head message."""
    system = graph.system

    def detail(i: int) -> str:
        g = graph.states[i]
        for ci, q in enumerate(g.queues):
            if not q:
                continue
            c = system.channels[ci]
            mi = system.machine_index(c.receiver)
            rules = system.transitions_from(mi, g.locals[mi])
            if not any(
                t.action.kind == "recv" and t.action.message == q[0] and t.action.channel == c.name
                for _, t in rules
            ):
                return (
                    f"message {q[0]!r} stuck at head of channel {c.name!r}; "
                    f"machine {c.receiver!r} cannot receive it in state {g.locals[mi]!r}"
                )
        return "unreceivable head message"

    return _stuck_diagnostics(
        graph, StateClass.UNSPECIFIED_RECEPTION, "unspecified_reception", detail
    )


def find_overflows(graph: ReachabilityGraph) -> list[Diagnostic]:
    """One diagnostic per overflow-marked state (OverflowMode.ERROR runs)."""

    def detail(i: int) -> str:
        path = shortest_path(graph, i)
        if path:
            e = graph.edges[path[-1]]
            a = graph.system.machines[e.machine].transitions[e.transition].action
            return f"send of {a.message!r} overflowed full channel {a.channel!r}"
        return "overflow state"

    return _stuck_diagnostics(graph, StateClass.OVERFLOW, "overflow", detail)


def _sccs(n: int, edges: list[Edge]) -> list[list[int]]:
    """Tarjan strongly connected components, iterative."""
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        adjacency[e.src].append(e.dst)
    order = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    counter = 0
    components = []
    for root in range(n):
        if order[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                order[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for k in range(pi, len(adjacency[v])):
                w = adjacency[v][k]
                if order[w] == -1:
                    work[-1] = (v, k + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], order[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == order[v]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    component.append(w)
                    if w == v:
                        break
                components.append(sorted(component))
    return components


def _can_reach(graph: ReachabilityGraph, targets: set[int]) -> set[int]:
    """States from which some state in ``targets`` is reachable."""
    reverse: dict[int, list[int]] = {}
    for e in graph.edges:
        reverse.setdefault(e.dst, []).append(e.src)
    seen = set(targets)
    queue = deque(seen)
    while queue:
        i = queue.popleft()
        for j in reverse.get(i, ()):
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


def _witness_cycle(graph: ReachabilityGraph, component: set[int], entry: int) -> list[int]:
    """Shortest cycle (as edge indices) through ``entry`` inside the component."""
    adjacency: dict[int, list[tuple[int, int]]] = {}
    for ei, e in enumerate(graph.edges):
        if e.src in component and e.dst in component:
            adjacency.setdefault(e.src, []).append((ei, e.dst))
    parent: dict[int, int] = {}
    queue = deque([entry])
    seen = {entry}
    closing = None
    while queue and closing is None:
        i = queue.popleft()
        for ei, j in adjacency.get(i, ()):
            if j == entry:
                closing = ei
                break
            if j not in seen:
                seen.add(j)
                parent[j] = ei
                queue.append(j)
    assert closing is not None, "component with an edge must contain a cycle"
    cycle = [closing]
    node = graph.edges[closing].src
    while node != entry:
        ei = parent[node]
        cycle.append(ei)
        node = graph.edges[ei].src
    cycle.reverse()
    return cycle


def find_livelocks(graph: ReachabilityGraph) -> list[Diagnostic]:
    """Non-progress cycles that cannot reach proper termination.

    Reports each strongly connected component that contains an edge, has
    no progress-labelled edge inside it, and cannot reach any
    proper-termination state.  On a truncated graph the result is
    advisory (noted in the detail text) since escapes may be missing.
    """
    system = graph.system
    terminations = set(graph.states_of_class(StateClass.PROPER_TERMINATION))
    can_terminate = _can_reach(graph, terminations)
    internal: dict[int, list[Edge]] = {}
    component_of = {}
    components = _sccs(len(graph.states), graph.edges)
    for k, comp in enumerate(components):
        for i in comp:
            component_of[i] = k
    for e in graph.edges:
        if component_of[e.src] == component_of[e.dst]:
            internal.setdefault(component_of[e.src], []).append(e)

    out = []
    for k, comp in enumerate(components):
        inner = internal.get(k)
        if not inner:
            continue
        if any(
            system.machines[e.machine].transitions[e.transition].progress for e in inner
        ):
            continue
        if any(i in can_terminate for i in comp):
            continue
        entry = min(comp)
        cycle = _witness_cycle(graph, set(comp), entry)
        steps = " -> ".join(graph.edge_text(graph.edges[ei]) for ei in cycle)
        detail = (
            f"non-progress cycle over {len(comp)} state(s) with no way to terminate; "
            f"witness from {graph.canonical(entry)}: {steps}"
        )
        if graph.truncated:
            detail += " (advisory: graph truncated, escapes may be missing)"
        out.append(
            Diagnostic(
                kind="livelock",
                detail=detail,
                state=entry,
                cycle=tuple(comp),
                path=tuple(shortest_path(graph, entry)),
            )
        )
    out.sort(key=lambda d: d.state)
    return out


def coverage(graph: ReachabilityGraph, system: System) -> list[Diagnostic]:
    """Unreachable machine states, never-fired transitions, and missing
    termination."""
    advisory = " (advisory: graph truncated)" if graph.truncated else ""
    seen_states: list[set[str]] = [set() for _ in system.machines]
    for g in graph.states:
        for mi, loc in enumerate(g.locals):
            seen_states[mi].add(loc)
    fired: set[tuple[int, int]] = {(e.machine, e.transition) for e in graph.edges}

    out = []
    for mi, m in enumerate(system.machines):
        for s in m.states:
            if s not in seen_states[mi]:
                out.append(
                    Diagnostic(
                        kind="unreachable_state",
                        detail=f"machine {m.name!r} state {s!r} is never reached{advisory}",
                    )
                )
        for ti, t in enumerate(m.transitions):
            if (mi, ti) not in fired:
                out.append(
                    Diagnostic(
                        kind="unreachable_transition",
                        detail=f"machine {m.name!r} transition {t.source!r}: "
                        f"{t.text()!r} never fires{advisory}",
                    )
                )
    if not any(c is StateClass.PROPER_TERMINATION for c in graph.classes):
        out.append(
            Diagnostic(
                kind="no_termination",
                detail=f"no reachable state is a proper termination{advisory}",
            )
        )
    return out


def all_diagnostics(graph: ReachabilityGraph) -> list[Diagnostic]:
    """Every detector's findings in report order."""
    return (
        find_deadlocks(graph)
        + find_unspecified_receptions(graph)
        + find_livelocks(graph)
        + find_overflows(graph)
        + coverage(graph, graph.system)
    )


def export_dot(graph: ReachabilityGraph) -> str:
    """Graphviz digraph: canonical state strings as node labels, class
    styling (deadlock red, unspecified orange, termination doublecircle,
    overflow yellow), ``machine:event`` edge labels."""
    lines = ["digraph reachability {", "  rankdir=TB;", '  node [shape=circle fontsize=10];']
    for i, cls in enumerate(graph.classes):
        label = graph.canonical(i).replace('"', '\\"')
        attrs = [f'label="{label}"']
        if cls is StateClass.PROPER_TERMINATION:
            attrs.append("shape=doublecircle")
        elif cls is StateClass.DEADLOCK:
            attrs.append('style=filled fillcolor=red')
        elif cls is StateClass.UNSPECIFIED_RECEPTION:
            attrs.append('style=filled fillcolor=orange')
        elif cls is StateClass.OVERFLOW:
            attrs.append('style=filled fillcolor=yellow')
        lines.append(f"  s{i} [{' '.join(attrs)}];")
    for e in graph.edges:
        label = graph.edge_text(e).replace('"', '\\"')
        lines.append(f'  s{e.src} -> s{e.dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def report_json(graph: ReachabilityGraph, diagnostics: list[Diagnostic]) -> str:
    """Machine-readable report with fixed field names."""
    items = []
    for d in diagnostics:
        ref = d.state
        items.append(
            {
                "kind": d.kind,
                "state": graph.canonical(ref) if ref is not None else None,
                "path": [
                    {
                        "machine": graph.system.machines[e.machine].name,
                        "action": graph.system.machines[e.machine]
                        .transitions[e.transition]
                        .action.text(),
                        "label": e.label,
                    }
                    for e in (graph.edges[ei] for ei in d.path)
                ],
            }
        )
    doc = {
        "diagnostics": items,
        "truncated": graph.truncated,
        "states": len(graph.states),
        "edges": len(graph.edges),
    }
    return json.dumps(doc, indent=2) + "\n"
