"""In-memory representation of a Thinging Machine model plus structural checks.

A model is a tree of machines, each declaring up to five stages (create,
process, release, transfer, receive), device attributes, resident things,
and solid flow / dashed trigger edges between stages.  Everything here is
immutable once built; the simulator keeps its own mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

from .behavior import BehaviorGraph, Event
from .diagnostics import Diagnostic, SourceSpan, make_error, make_warning
from .errors import TmError


class StageKind(Enum):
    CREATE = "create"
    PROCESS = "process"
    RELEASE = "release"
    TRANSFER = "transfer"
    RECEIVE = "receive"

    @classmethod
    def parse(cls, text: str) -> "StageKind | None":
        try:
            return cls(text.lower())
        except ValueError:
            return None

    @property
    def display(self) -> str:
        """Capitalized form used in figures, traces and DOT labels."""
        return self.value.capitalize()


# Legal stage successions for flow edges.  The paper's diagrams never list
# these; the table is reconstructed from the flow chains both worked
# examples use (create/receive -> process/release -> transfer -> transfer
# -> receive).  Cross-machine flow is the transfer-to-transfer handoff only.
_INTRA_ADJACENCY = frozenset({
    (StageKind.CREATE, StageKind.PROCESS),
    (StageKind.CREATE, StageKind.RELEASE),
    (StageKind.RECEIVE, StageKind.PROCESS),
    (StageKind.RECEIVE, StageKind.RELEASE),
    (StageKind.PROCESS, StageKind.CREATE),
    (StageKind.PROCESS, StageKind.RELEASE),
    (StageKind.RELEASE, StageKind.TRANSFER),
    (StageKind.TRANSFER, StageKind.RECEIVE),
})


def adjacency_allowed(src_kind: StageKind, dst_kind: StageKind,
                      same_machine: bool) -> bool:
    """Membership in the fixed flow adjacency table (9 legal triples)."""
    if same_machine:
        return (src_kind, dst_kind) in _INTRA_ADJACENCY
    return src_kind is StageKind.TRANSFER and dst_kind is StageKind.TRANSFER


@dataclass(frozen=True)
class StageRef:
    machine: str          # machine id (dotted path from the root)
    kind: StageKind

    @property
    def element_id(self) -> str:
        return f"{self.machine}.{self.kind.value}"

    def display(self, model: "Model") -> str:
        """Short human form, e.g. ``Bathroom.Receive``."""
        m = model.machine(self.machine)
        return f"{m.name}.{self.kind.display}"


@dataclass(frozen=True)
class Domain:
    """Value domain of an attribute or payload field."""

    kind: str                       # "enum" | "bool" | "int"
    values: tuple[str, ...] = ()    # enum members
    low: int = 0                    # int bounds, inclusive
    high: int = 0

    def contains(self, value) -> bool:
        if self.kind == "enum":
            return isinstance(value, str) and value in self.values
        if self.kind == "bool":
            return isinstance(value, bool)
        return isinstance(value, int) and not isinstance(value, bool) \
            and self.low <= value <= self.high

    def members(self) -> list:
        """Every value in the domain, in a stable order."""
        if self.kind == "enum":
            return list(self.values)
        if self.kind == "bool":
            return [True, False]
        return list(range(self.low, self.high + 1))


@dataclass
class Attribute:
    name: str
    domain: Domain
    initial: object
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class Resident:
    """Initial token placement: a thing waiting in a machine's stage."""

    kind: str                 # ThingKind id
    stage: StageKind
    waiting: bool = False     # parked until a trigger moves it
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class ThingKind:
    id: str
    name: str
    payload_fields: list[tuple[str, Domain]] = field(default_factory=list)
    manual: bool = False      # tokens move only through user actions
    span: SourceSpan | None = field(default=None, compare=False)

    def field_domain(self, name: str) -> Domain | None:
        for fname, dom in self.payload_fields:
            if fname == name:
                return dom
        return None


@dataclass
class Guard:
    """Single comparison routing a flow or gating a trigger."""

    subject: str              # payload field name, or dotted attribute path
    operator: str             # "=" | "!="
    literal: object

    @property
    def is_attribute(self) -> bool:
        return "." in self.subject

    def holds(self, value) -> bool:
        if self.operator == "=":
            return value == self.literal
        return value != self.literal


FLOW = "flow"
TRIGGER = "trigger"


@dataclass
class Edge:
    id: str
    source: StageRef
    target: StageRef
    kind: str                          # FLOW | TRIGGER
    carries: str | None = None         # ThingKind id
    guard: Guard | None = None
    named: bool = False                # id written in source via `as`
    container: str | None = field(default=None, compare=False)
    span: SourceSpan | None = field(default=None, compare=False)

    @property
    def same_machine(self) -> bool:
        return self.source.machine == self.target.machine


# Ordered statements of a machine body, kept so the serializer can replay
# the source layout.  Payloads: ("stages", tuple[StageKind]), ("attr",
# Attribute), ("resident", Resident), ("processes", tuple[str]),
# ("machine", child id), ("edge", edge id).
BodyItem = tuple


@dataclass
class Machine:
    id: str                            # dotted path, unique model-wide
    name: str
    parent: str | None = None
    stages: list[StageKind] = field(default_factory=list)
    at_stage: StageKind | None = None  # parent stage this machine is shown at
    attributes: list[Attribute] = field(default_factory=list)
    residents: list[Resident] = field(default_factory=list)
    processes: list[str] = field(default_factory=list)
    body: list[BodyItem] = field(default_factory=list)
    span: SourceSpan | None = field(default=None, compare=False)

    def declares(self, kind: StageKind) -> bool:
        return kind in self.stages

    def attribute(self, name: str) -> Attribute | None:
        for a in self.attributes:
            if a.name == name:
                return a
        return None


@dataclass(frozen=True)
class AttrRef:
    machine: str
    name: str

    @property
    def element_id(self) -> str:
        return f"{self.machine}.{self.name}"


@dataclass
class Model:
    name: str
    things: list[ThingKind] = field(default_factory=list)
    machines: list[Machine] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    behavior: BehaviorGraph | None = None
    top_order: list[tuple[str, str]] = field(default_factory=list)
    # ^ top-level statements as (kind, id) with kind in
    #   {"thing", "machine", "edge", "event", "behavior"}

    # -- lookups ------------------------------------------------------------

    @cached_property
    def _machines_by_id(self) -> dict[str, Machine]:
        return {m.id: m for m in self.machines}

    @cached_property
    def _things_by_id(self) -> dict[str, ThingKind]:
        return {t.id: t for t in self.things}

    @cached_property
    def _edges_by_id(self) -> dict[str, Edge]:
        return {e.id: e for e in self.edges}

    def machine(self, machine_id: str) -> Machine:
        return self._machines_by_id[machine_id]

    def thing(self, thing_id: str) -> ThingKind | None:
        return self._things_by_id.get(thing_id)

    def edge(self, edge_id: str) -> Edge | None:
        return self._edges_by_id.get(edge_id)

    def children(self, machine_id: str | None) -> list[Machine]:
        return [m for m in self.machines if m.parent == machine_id]

    def roots(self) -> list[Machine]:
        return self.children(None)

    def event(self, event_id: str) -> Event | None:
        for ev in self.events:
            if ev.id == event_id:
                return ev
        return None

    @property
    def declaration_order(self) -> list[str]:
        """Ids of every element, in source order."""
        out: list[str] = []
        for kind, ident in self.top_order:
            if kind == "behavior":
                out.append("behavior")
                continue
            out.append(ident)
            if kind == "machine":
                out.extend(self._machine_members(ident))
        return out

    def _machine_members(self, machine_id: str) -> list[str]:
        out: list[str] = []
        m = self.machine(machine_id)
        for item in m.body:
            tag = item[0]
            if tag == "attr":
                out.append(f"{m.id}.{item[1].name}")
            elif tag == "machine":
                out.append(item[1])
                out.extend(self._machine_members(item[1]))
            elif tag == "edge":
                out.append(item[1])
        return out

    # -- element universe for subdiagram ------------------------------------

    @cached_property
    def stage_ids(self) -> dict[str, StageRef]:
        out = {}
        for m in self.machines:
            for kind in m.stages:
                ref = StageRef(m.id, kind)
                out[ref.element_id] = ref
        return out

    def flows_from(self, ref: StageRef) -> list[Edge]:
        return [e for e in self.edges if e.kind == FLOW and e.source == ref]

    def triggers_from(self, ref: StageRef) -> list[Edge]:
        return [e for e in self.edges if e.kind == TRIGGER and e.source == ref]


# ---------------------------------------------------------------------------
# Path resolution
# ---------------------------------------------------------------------------

def resolve_path(model: Model, path: str):
    """Resolve a dotted path to a Machine, StageRef, AttrRef or ThingKind.

    The first segment may name any machine in the forest (or, for a
    single-segment path, a thing kind); later segments descend through
    submachines and may end on a stage kind or an attribute name.  Stage
    segments are case-insensitive, so ``Hall.Release`` and ``Hall.release``
    agree.  Raises TmError E_NOPATH / E_AMBIG.
    """
    if not path:
        raise TmError("E_NOPATH", "empty path")
    segments = path.split(".")
    if any(not s for s in segments):
        raise TmError("E_NOPATH", f"malformed path {path!r}")

    matches = []
    for m in model.machines:
        if m.name == segments[0]:
            matches.extend(_descend(model, m, segments[1:]))
    if len(segments) == 1:
        t = model.thing(segments[0])
        if t is not None:
            matches.append(t)

    if not matches:
        raise TmError("E_NOPATH", f"path {path!r} does not resolve")
    if len(matches) > 1:
        raise TmError("E_AMBIG", f"path {path!r} is ambiguous "
                                 f"({len(matches)} matches)")
    return matches[0]


def _descend(model: Model, machine: Machine, rest: list[str]) -> list:
    if not rest:
        return [machine]
    head, tail = rest[0], rest[1:]
    found = []
    if not tail:
        kind = StageKind.parse(head)
        if kind is not None and machine.declares(kind):
            found.append(StageRef(machine.id, kind))
        if machine.attribute(head) is not None:
            found.append(AttrRef(machine.id, head))
    for child in model.children(machine.id):
        if child.name == head:
            found.extend(_descend(model, child, tail))
    return found


# ---------------------------------------------------------------------------
# Reachability and regions
# ---------------------------------------------------------------------------

def reachable_stages(model: Model, start: StageRef) -> set[StageRef]:
    """Forward closure over flow and trigger edges."""
    seen = {start}
    frontier = [start]
    while frontier:
        ref = frontier.pop()
        for e in model.edges:
            if e.source == ref and e.target not in seen:
                seen.add(e.target)
                frontier.append(e.target)
    return seen


def subdiagram(model: Model, elements: set[str]) -> frozenset[str]:
    """Close a set of stage/edge ids under edge endpoints.

    Any included edge forces both of its endpoint stages into the region.
    Unknown ids raise E_NOELEM.  The empty set is a valid (empty) region.
    """
    closed: set[str] = set()
    for ident in elements:
        edge = model.edge(ident)
        if edge is not None:
            closed.add(ident)
            closed.add(edge.source.element_id)
            closed.add(edge.target.element_id)
        elif ident in model.stage_ids:
            closed.add(ident)
        else:
            raise TmError("E_NOELEM", f"unknown region element {ident!r}")
    return frozenset(closed)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(model: Model) -> list[Diagnostic]:
    """All structural violations; empty list means the model is valid.

    Warnings (W_*) never block downstream use; errors do.
    """
    diags: list[Diagnostic] = []
    _check_forest(model, diags)
    _check_things(model, diags)
    _check_machines(model, diags)
    _check_edges(model, diags)
    _check_events(model, diags)
    _check_behavior(model, diags)
    _check_reachability(model, diags)
    return diags


def _check_forest(model: Model, diags: list[Diagnostic]) -> None:
    seen_ids: set[str] = set()
    for m in model.machines:
        if m.id in seen_ids:
            diags.append(make_error("E_AMBIG", f"duplicate machine id {m.id!r}",
                                    m.span, m.id))
        seen_ids.add(m.id)
        if m.parent is not None and m.parent not in {x.id for x in model.machines}:
            diags.append(make_error("E_FOREST",
                                    f"machine {m.id!r} has unknown parent {m.parent!r}",
                                    m.span, m.id))
    roots = model.roots()
    if len(roots) != 1:
        names = ", ".join(m.id for m in roots) or "none"
        diags.append(make_error("E_FOREST",
                                f"model must have exactly one root machine, found: {names}"))
    # sibling display names must stay unique so dotted paths are unambiguous
    by_parent: dict[str | None, set[str]] = {}
    for m in model.machines:
        names = by_parent.setdefault(m.parent, set())
        if m.name in names:
            diags.append(make_error("E_AMBIG",
                                    f"duplicate machine name {m.name!r} under the same parent",
                                    m.span, m.id))
        names.add(m.name)
    # parent links must not cycle
    ids = {m.id for m in model.machines}
    for m in model.machines:
        hops, cur = 0, m.parent
        while cur is not None and hops <= len(ids):
            nxt = model._machines_by_id.get(cur)
            cur = nxt.parent if nxt else None
            hops += 1
        if hops > len(ids):
            diags.append(make_error("E_FOREST", f"parent cycle through {m.id!r}",
                                    m.span, m.id))
            break


def _check_things(model: Model, diags: list[Diagnostic]) -> None:
    seen = set()
    for t in model.things:
        if t.id in seen:
            diags.append(make_error("E_AMBIG", f"duplicate thing {t.id!r}",
                                    t.span, t.id))
        seen.add(t.id)
        fields = set()
        for fname, _ in t.payload_fields:
            if fname in fields:
                diags.append(make_error("E_AMBIG",
                                        f"thing {t.id!r} declares field {fname!r} twice",
                                        t.span, t.id))
            fields.add(fname)


def _check_machines(model: Model, diags: list[Diagnostic]) -> None:
    for m in model.machines:
        seen_kinds: set[StageKind] = set()
        for kind in m.stages:
            if kind in seen_kinds:
                diags.append(make_error("E_PARSE",
                                        f"machine {m.id!r} declares stage "
                                        f"{kind.value} more than once",
                                        m.span, m.id))
            seen_kinds.add(kind)
        if m.at_stage is not None and m.parent is not None:
            parent = model._machines_by_id.get(m.parent)
            if parent is not None and not parent.declares(m.at_stage):
                diags.append(make_error("E_NOPATH",
                                        f"machine {m.id!r} is placed at stage "
                                        f"{m.at_stage.value}, which {parent.id!r} "
                                        f"does not declare", m.span, m.id))
        names = set()
        for a in m.attributes:
            if a.name in names:
                diags.append(make_error("E_AMBIG",
                                        f"machine {m.id!r} declares attribute "
                                        f"{a.name!r} twice", a.span, m.id))
            names.add(a.name)
            if not a.domain.contains(a.initial):
                diags.append(make_error("E_GUARD_TYPE",
                                        f"initial value {a.initial!r} outside the "
                                        f"domain of {m.id}.{a.name}", a.span,
                                        f"{m.id}.{a.name}"))
        for r in m.residents:
            if model.thing(r.kind) is None:
                diags.append(make_error("E_NOPATH",
                                        f"resident references unknown thing {r.kind!r}",
                                        r.span, m.id))
            if not m.declares(r.stage):
                diags.append(make_error("E_NOPATH",
                                        f"resident {r.kind!r} placed at stage "
                                        f"{r.stage.value}, which {m.id!r} does not declare",
                                        r.span, m.id))


def _check_edges(model: Model, diags: list[Diagnostic]) -> None:
    seen = set()
    for e in model.edges:
        if e.id in seen:
            diags.append(make_error("E_AMBIG", f"duplicate edge id {e.id!r}",
                                    e.span, e.id))
        seen.add(e.id)
        ok_endpoints = True
        for ref in (e.source, e.target):
            m = model._machines_by_id.get(ref.machine)
            if m is None:
                diags.append(make_error("E_NOPATH",
                                        f"edge {e.id} references unknown machine "
                                        f"{ref.machine!r}", e.span, e.id))
                ok_endpoints = False
            elif not m.declares(ref.kind):
                diags.append(make_error("E_NOPATH",
                                        f"edge {e.id} references stage "
                                        f"{ref.element_id}, which is not declared",
                                        e.span, e.id))
                ok_endpoints = False
        if e.carries is not None and model.thing(e.carries) is None:
            diags.append(make_error("E_NOPATH",
                                    f"edge {e.id} carries unknown thing {e.carries!r}",
                                    e.span, e.id))
        if ok_endpoints and e.kind == FLOW:
            if not adjacency_allowed(e.source.kind, e.target.kind, e.same_machine):
                if e.same_machine:
                    diags.append(make_error("E_ADJ",
                                            f"flow {e.source.element_id} -> "
                                            f"{e.target.element_id} violates the "
                                            f"stage adjacency table", e.span, e.id))
                else:
                    diags.append(make_error("E_BOUNDARY",
                                            f"cross-machine flow {e.source.element_id} -> "
                                            f"{e.target.element_id} must connect "
                                            f"Transfer to Transfer", e.span, e.id))
        if e.kind == TRIGGER:
            if ok_endpoints and e.source.kind not in (StageKind.PROCESS, StageKind.CREATE):
                diags.append(make_warning("W_TRIG_SRC",
                                          f"trigger {e.id} fires from "
                                          f"{e.source.kind.value}; expected process or create",
                                          e.span, e.id))
            if e.target.kind is StageKind.CREATE and e.carries is None:
                diags.append(make_error("E_NOPATH",
                                        f"trigger {e.id} targets a create stage but "
                                        f"carries no thing kind", e.span, e.id))
        if e.guard is not None:
            _check_guard(model, e, diags)


def _check_guard(model: Model, e: Edge, diags: list[Diagnostic]) -> None:
    g = e.guard
    if g.operator not in ("=", "!="):
        diags.append(make_error("E_PARSE", f"edge {e.id}: unknown operator {g.operator!r}",
                                e.span, e.id))
        return
    if g.is_attribute:
        try:
            ref = resolve_path(model, g.subject)
        except TmError as err:
            diags.append(make_error(err.code,
                                    f"edge {e.id}: guard subject {g.subject!r}: {err.message}",
                                    e.span, e.id))
            return
        if not isinstance(ref, AttrRef):
            diags.append(make_error("E_NOPATH",
                                    f"edge {e.id}: guard subject {g.subject!r} "
                                    f"is not an attribute", e.span, e.id))
            return
        dom = model.machine(ref.machine).attribute(ref.name).domain
        if not dom.contains(g.literal):
            diags.append(make_error("E_GUARD_TYPE",
                                    f"edge {e.id}: literal {g.literal!r} outside the "
                                    f"domain of {g.subject}", e.span, e.id))
        return
    # payload-field subject
    if e.kind == FLOW:
        if e.carries is None:
            diags.append(make_error("E_NOPATH",
                                    f"edge {e.id}: payload guard on {g.subject!r} "
                                    f"requires a carries clause", e.span, e.id))
            return
        kind = model.thing(e.carries)
        if kind is None:
            return  # unknown carries already reported
        dom = kind.field_domain(g.subject)
        if dom is None:
            diags.append(make_error("E_NOPATH",
                                    f"edge {e.id}: thing {e.carries!r} has no "
                                    f"field {g.subject!r}", e.span, e.id))
        elif not dom.contains(g.literal):
            diags.append(make_error("E_GUARD_TYPE",
                                    f"edge {e.id}: literal {g.literal!r} outside the "
                                    f"domain of {e.carries}.{g.subject}", e.span, e.id))
        return
    # trigger payload guards test whichever token was just processed, so the
    # field only has to exist on some thing kind
    domains = [t.field_domain(g.subject) for t in model.things]
    domains = [d for d in domains if d is not None]
    if not domains:
        diags.append(make_error("E_NOPATH",
                                f"edge {e.id}: no thing declares field {g.subject!r}",
                                e.span, e.id))
    elif not any(d.contains(g.literal) for d in domains):
        diags.append(make_error("E_GUARD_TYPE",
                                f"edge {e.id}: literal {g.literal!r} fits no declared "
                                f"domain of field {g.subject!r}", e.span, e.id))


def _check_events(model: Model, diags: list[Diagnostic]) -> None:
    seen = set()
    for ev in model.events:
        if ev.id in seen:
            diags.append(make_error("E_AMBIG", f"duplicate event {ev.id!r}",
                                    ev.span, ev.id))
        seen.add(ev.id)
        if not ev.declared_refs:
            diags.append(make_error("E_REGION_EMPTY",
                                    f"event {ev.id} has an empty region",
                                    ev.span, ev.id))
            continue
        ids, broken = _resolve_region(model, ev.declared_refs)
        for ref in broken:
            diags.append(make_error("E_NOPATH",
                                    f"event {ev.id}: region element {ref!r} "
                                    f"does not resolve", ev.span, ev.id))
        if broken:
            continue
        region = subdiagram(model, set(ids))
        anchor_ids, anchor_broken = _resolve_region(model, [ev.anchor_ref])
        if anchor_broken:
            diags.append(make_error("E_NOPATH",
                                    f"event {ev.id}: anchor {ev.anchor_ref!r} "
                                    f"does not resolve", ev.span, ev.id))
        elif anchor_ids[0] not in region:
            diags.append(make_error("E_ANCHOR",
                                    f"event {ev.id}: anchor {ev.anchor_ref!r} "
                                    f"lies outside the region", ev.span, ev.id))


def _resolve_region(model: Model, refs: list[str]) -> tuple[list[str], list[str]]:
    """Map source refs (edge names or dotted stage paths) to element ids."""
    ids, broken = [], []
    for ref in refs:
        if model.edge(ref) is not None:
            ids.append(ref)
            continue
        try:
            resolved = resolve_path(model, ref)
        except TmError:
            broken.append(ref)
            continue
        if isinstance(resolved, StageRef):
            ids.append(resolved.element_id)
        else:
            broken.append(ref)
    return ids, broken


def resolve_event_region(model: Model, ev: Event) -> frozenset[str]:
    """Closed region of a declared event (assumes the model validated)."""
    ids, broken = _resolve_region(model, ev.declared_refs)
    if broken:
        raise TmError("E_NOPATH", f"event {ev.id}: unresolved region refs {broken}")
    return subdiagram(model, set(ids))


def resolve_event_anchor(model: Model, ev: Event) -> str:
    ids, broken = _resolve_region(model, [ev.anchor_ref])
    if broken:
        raise TmError("E_NOPATH", f"event {ev.id}: anchor {ev.anchor_ref!r} unresolved")
    return ids[0]


def _check_behavior(model: Model, diags: list[Diagnostic]) -> None:
    graph = model.behavior
    if graph is None:
        return
    declared = {ev.id for ev in model.events}
    for arc in graph.arcs:
        for end in (arc.src, arc.dst):
            if end not in declared:
                diags.append(make_error("E_NOPATH",
                                        f"behavior arc references undeclared event {end!r}",
                                        arc.span, end))
    if graph.has_unflagged_cycle():
        diags.append(make_error("E_CYCLE",
                                "behavior graph has a cycle not flagged `loop`"))


def _check_reachability(model: Model, diags: list[Diagnostic]) -> None:
    starts: list[StageRef] = []
    for m in model.machines:
        if m.declares(StageKind.CREATE):
            starts.append(StageRef(m.id, StageKind.CREATE))
        for r in m.residents:
            if m.declares(r.stage):
                starts.append(StageRef(m.id, r.stage))
    reached: set[StageRef] = set()
    for s in starts:
        reached |= reachable_stages(model, s)
    for m in model.machines:
        for kind in m.stages:
            ref = StageRef(m.id, kind)
            if ref not in reached:
                diags.append(make_warning("W_UNREACHABLE",
                                          f"stage {ref.element_id} is unreachable from "
                                          f"any create stage or resident placement",
                                          m.span, ref.element_id))
