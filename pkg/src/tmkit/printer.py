"""Canonical serializer for models.

The output is the normal form of the surface language: two-space
indentation, one statement per line, semicolon terminators, lowercase
keywords, stage paths rendered as the shortest unique dotted name.
``parse(serialize(m))`` is structurally equal to ``m`` and serializing the
reparse reproduces the same bytes, which is what the model hash is built on.
"""

from __future__ import annotations

from .behavior import BehaviorGraph, Event
from .errors import TmError
from .model import (
    FLOW,
    Attribute,
    AttrRef,
    Domain,
    Edge,
    Guard,
    Machine,
    Model,
    StageRef,
    resolve_path,
)


def canonical_stage_path(model: Model, ref: StageRef) -> str:
    """Shortest dotted suffix that still resolves uniquely to ``ref``."""
    chain = ref.machine.split(".")
    for k in range(1, len(chain) + 1):
        candidate = ".".join(chain[-k:] + [ref.kind.value])
        try:
            resolved = resolve_path(model, candidate)
        except TmError:
            continue
        if resolved == ref:
            return candidate
    return f"{ref.machine}.{ref.kind.value}"


def canonical_attr_path(model: Model, ref: AttrRef) -> str:
    chain = ref.machine.split(".")
    for k in range(1, len(chain) + 1):
        candidate = ".".join(chain[-k:] + [ref.name])
        try:
            resolved = resolve_path(model, candidate)
        except TmError:
            continue
        if resolved == ref:
            return candidate
    return f"{ref.machine}.{ref.name}"


def normalize_refs(model: Model) -> None:
    """Rewrite event refs and guard subjects into canonical spelling.

    Called once after parsing so that structural equality and serialization
    do not depend on how a path happened to be written in source.
    """
    for e in model.edges:
        if e.guard is not None and e.guard.is_attribute:
            try:
                ref = resolve_path(model, e.guard.subject)
            except TmError:
                continue
            if isinstance(ref, AttrRef):
                e.guard.subject = canonical_attr_path(model, ref)
    for ev in model.events:
        ev.declared_refs = [_canonical_ref(model, r) for r in ev.declared_refs]
        ev.anchor_ref = _canonical_ref(model, ev.anchor_ref)


def _canonical_ref(model: Model, ref: str) -> str:
    if model.edge(ref) is not None:
        return ref
    try:
        resolved = resolve_path(model, ref)
    except TmError:
        return ref
    if isinstance(resolved, StageRef):
        return canonical_stage_path(model, resolved)
    return ref


# ---------------------------------------------------------------------------


def _literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return str(value)


def _domain(dom: Domain) -> str:
    if dom.kind == "enum":
        return "{" + ", ".join(_literal(v) for v in dom.values) + "}"
    if dom.kind == "bool":
        return "bool"
    return f"int {dom.low}..{dom.high}"


def _guard(g: Guard) -> str:
    return f"[{g.subject} {g.operator} {_literal(g.literal)}]"


class _Printer:
    def __init__(self, model: Model):
        self.model = model
        self.lines: list[str] = []

    def emit(self, indent: int, text: str) -> None:
        self.lines.append("  " * indent + text)

    def render(self) -> str:
        self.emit(0, f"model {self.model.name}")
        for kind, ident in self.model.top_order:
            self.lines.append("")
            if kind == "thing":
                self.thing(self.model.thing(ident))
            elif kind == "machine":
                self.machine(self.model.machine(ident), 0)
            elif kind == "edge":
                self.edge(self.model.edge(ident), 0)
            elif kind == "event":
                self.event(self.model.event(ident))
            elif kind == "behavior":
                self.behavior(self.model.behavior)
        return "\n".join(self.lines) + "\n"

    def thing(self, t) -> None:
        manual = " manual" if t.manual else ""
        if not t.payload_fields:
            self.emit(0, f"thing {t.name}{manual} {{ }}")
            return
        self.emit(0, f"thing {t.name}{manual} {{")
        for fname, dom in t.payload_fields:
            self.emit(1, f"{fname}: {_domain(dom)};")
        self.emit(0, "}")

    def machine(self, m: Machine, indent: int) -> None:
        at = f" at {m.at_stage.value}" if m.at_stage is not None else ""
        self.emit(indent, f"machine {m.name}{at} {{")
        for item in m.body:
            tag = item[0]
            if tag == "stages":
                kinds = ", ".join(k.value for k in item[1])
                self.emit(indent + 1, f"stages {kinds};")
            elif tag == "attr":
                a: Attribute = item[1]
                self.emit(indent + 1,
                          f"attr {a.name}: {_domain(a.domain)} = {_literal(a.initial)};")
            elif tag == "resident":
                r = item[1]
                waiting = " waiting" if r.waiting else ""
                self.emit(indent + 1, f"resident {r.kind} at {r.stage.value}{waiting};")
            elif tag == "processes":
                labels = ", ".join(_literal(p) for p in item[1])
                self.emit(indent + 1, f"processes {labels};")
            elif tag == "machine":
                self.machine(self.model.machine(item[1]), indent + 1)
            elif tag == "edge":
                self.edge(self.model.edge(item[1]), indent + 1)
        self.emit(indent, "}")

    def edge(self, e: Edge, indent: int) -> None:
        arrow = "->" if e.kind == FLOW else "~>"
        src = canonical_stage_path(self.model, e.source)
        dst = canonical_stage_path(self.model, e.target)
        parts = [e.kind, src, arrow, dst]
        if e.guard is not None:
            parts.append(_guard(e.guard))
        if e.carries is not None:
            parts.append(f"carries {e.carries}")
        if e.named:
            parts.append(f"as {e.id}")
        self.emit(indent, " ".join(parts) + ";")

    def event(self, ev: Event) -> None:
        refs = ", ".join(ev.declared_refs)
        self.emit(0, f"event {ev.id} {_literal(ev.label)} region {{ {refs} }} "
                     f"anchor {ev.anchor_ref};")

    def behavior(self, graph: BehaviorGraph) -> None:
        self.emit(0, "behavior {")
        for arc in graph.arcs:
            loop = " loop" if arc.loop else ""
            self.emit(1, f"{arc.src} -> {arc.dst}{loop};")
        self.emit(0, "}")


def serialize(model: Model) -> str:
    """Render a model as canonical ``.tm`` text."""
    return _Printer(model).render()
