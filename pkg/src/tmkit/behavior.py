"""Events over model regions, behavior graphs, trace extraction and
weak-precedence conformance checking."""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagnostics import SourceSpan
from .errors import TmError


@dataclass
class Event:
    """A named occurrence anchored to one element of its region.

    The region is the sub-diagram the event spans; executing the anchor
    element is what marks the event as having happened.
    """

    id: str
    label: str
    declared_refs: list[str] = field(default_factory=list)
    anchor_ref: str = ""
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class Arc:
    src: str
    dst: str
    loop: bool = False        # re-entry arc, exempt from precedence checks
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class BehaviorGraph:
    nodes: list[str] = field(default_factory=list)
    arcs: list[Arc] = field(default_factory=list)

    def __post_init__(self):
        for a in self.arcs:
            for n in (a.src, a.dst):
                if n not in self.nodes:
                    self.nodes.append(n)

    def predecessors(self, node: str) -> list[str]:
        """Non-loop predecessors of a node."""
        return [a.src for a in self.arcs if a.dst == node and not a.loop]

    def has_unflagged_cycle(self) -> bool:
        try:
            topo_layers(self)
        except TmError:
            return True
        return False


@dataclass(frozen=True)
class EventOccurrence:
    event: str
    time: int
    step: int


@dataclass
class EventTrace:
    occurrences: list[EventOccurrence] = field(default_factory=list)

    def event_ids(self) -> list[str]:
        return [o.event for o in self.occurrences]


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract_events(log, model) -> EventTrace:
    """Pull the event trace out of a simulation step log.

    A step emits an occurrence of every event whose anchor it executed;
    executed elements are the traversed edge (or stage action) plus any
    triggers the step fired.  Raises E_MODEL_MISMATCH when the log was
    produced over a different model.
    """
    from .render import model_hash
    from .model import resolve_event_anchor

    if log.model_hash != model_hash(model):
        raise TmError("E_MODEL_MISMATCH",
                      "step log was produced over a different model")
    anchors: dict[str, list[str]] = {}
    for ev in model.events:
        anchors.setdefault(resolve_event_anchor(model, ev), []).append(ev.id)
    occurrences = []
    for step in log.steps:
        executed = [step.element] + list(step.fired_triggers)
        for element in executed:
            for event_id in anchors.get(element, ()):
                occurrences.append(EventOccurrence(event_id, step.time, step.index))
    occurrences.sort(key=lambda o: (o.time, o.step))
    return EventTrace(occurrences)


# ---------------------------------------------------------------------------
# Conformance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    position: int
    event: str
    missing: str


@dataclass
class ConformanceReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def conformant(self) -> bool:
        return not self.violations


def conforms(trace: EventTrace, graph: BehaviorGraph) -> ConformanceReport:
    """Weak precedence: every occurrence must be preceded, somewhere earlier
    in the trace, by an occurrence of each of its non-loop predecessors.

    Raises E_UNKNOWN_EVENT for occurrences of events the graph does not
    declare.
    """
    declared = set(graph.nodes)
    seen: set[str] = set()
    violations: list[Violation] = []
    for pos, occ in enumerate(trace.occurrences):
        if occ.event not in declared:
            raise TmError("E_UNKNOWN_EVENT",
                          f"trace contains undeclared event {occ.event!r}")
        for pred in graph.predecessors(occ.event):
            if pred not in seen:
                violations.append(Violation(pos, occ.event, pred))
        seen.add(occ.event)
    return ConformanceReport(violations)


# ---------------------------------------------------------------------------
# Layering
# ---------------------------------------------------------------------------

def topo_layers(graph: BehaviorGraph) -> list[set[str]]:
    """Kahn layering over non-loop arcs: layer k holds the events whose
    longest predecessor chain has length k.  Raises E_CYCLE on an unflagged
    cycle."""
    nodes = list(graph.nodes)
    preds = {n: set(graph.predecessors(n)) & set(nodes) for n in nodes}
    depth: dict[str, int] = {}
    remaining = set(nodes)
    while remaining:
        ready = [n for n in remaining if preds[n] <= set(depth)]
        if not ready:
            raise TmError("E_CYCLE", "behavior graph has an unflagged cycle")
        for n in ready:
            depth[n] = max((depth[p] + 1 for p in preds[n]), default=0)
            remaining.discard(n)
    if not depth:
        return []
    layers: list[set[str]] = [set() for _ in range(max(depth.values()) + 1)]
    for n, d in depth.items():
        layers[d].add(n)
    return layers
