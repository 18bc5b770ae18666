"""Deterministic exporters: DOT graphs, canonical JSON, and the model hash.

Every function here is pure and byte-stable: the same model yields the same
bytes on any platform, which the model hash and the golden tests rely on.
"""

from __future__ import annotations

import hashlib
import json

from .behavior import Arc, BehaviorGraph, ConformanceReport, Event, EventTrace, topo_layers
from .model import (
    FLOW,
    Attribute,
    Domain,
    Edge,
    Guard,
    Machine,
    Model,
    Resident,
    StageKind,
    StageRef,
    ThingKind,
)
from .printer import serialize


def model_hash(model: Model) -> str:
    """Lowercase hex digest of the canonical serialized model."""
    return hashlib.sha256(serialize(model).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# DOT
# ---------------------------------------------------------------------------

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _edge_label(e: Edge) -> str:
    parts = []
    if e.carries:
        parts.append(e.carries)
    if e.guard is not None:
        lit = e.guard.literal
        lit_text = ("true" if lit else "false") if isinstance(lit, bool) \
            else (f'"{lit}"' if isinstance(lit, str) else str(lit))
        parts.append(f"[{e.guard.subject} {e.guard.operator} {lit_text}]")
    return " ".join(parts)


def to_dot(model: Model) -> str:
    """DOT text: machines as nested clusters, solid flows, dashed triggers."""
    lines = [f'digraph "{_dot_escape(model.name)}" {{',
             "  compound=true;",
             "  node [shape=box, style=rounded];"]

    def emit_machine(m: Machine, indent: int) -> None:
        pad = "  " * indent
        lines.append(f'{pad}subgraph "cluster_{_dot_escape(m.id)}" {{')
        label_lines = [m.name]
        for a in m.attributes:
            init = ("true" if a.initial else "false") if isinstance(a.initial, bool) \
                else str(a.initial)
            label_lines.append(f"{a.name}: {init}")
        lines.append(f'{pad}  label="{_dot_escape(chr(10).join(label_lines))}";')
        for kind in m.stages:
            residents = [r.kind for r in m.residents if r.stage is kind]
            label = kind.display
            if residents:
                label += "\n(" + ", ".join(residents) + ")"
            lines.append(f'{pad}  "{_dot_escape(m.id)}.{kind.value}" '
                         f'[label="{_dot_escape(label)}"];')
        for child in model.children(m.id):
            emit_machine(child, indent + 1)
        lines.append(f"{pad}}}")

    for root in model.roots():
        emit_machine(root, 1)
    for e in model.edges:
        style = "solid" if e.kind == FLOW else "dashed"
        attrs = [f"style={style}"]
        label = _edge_label(e)
        if label:
            attrs.append(f'label="{_dot_escape(label)}"')
        lines.append(f'  "{_dot_escape(e.source.element_id)}" -> '
                     f'"{_dot_escape(e.target.element_id)}" [{", ".join(attrs)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_behavior(graph: BehaviorGraph) -> str:
    """DOT text of the event DAG; loop arcs drawn dashed.

    Raises E_CYCLE when the graph has a cycle that is not flagged `loop`.
    """
    topo_layers(graph)  # raises E_CYCLE on unflagged cycles
    lines = ["digraph behavior {", "  rankdir=LR;", "  node [shape=box];"]
    for node in graph.nodes:
        lines.append(f'  "{_dot_escape(node)}";')
    for arc in graph.arcs:
        attrs = ' [style=dashed, label="loop"]' if arc.loop else ""
        lines.append(f'  "{_dot_escape(arc.src)}" -> "{_dot_escape(arc.dst)}"{attrs};')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _domain_dict(dom: Domain) -> dict:
    if dom.kind == "enum":
        return {"kind": "enum", "values": list(dom.values)}
    if dom.kind == "bool":
        return {"kind": "bool"}
    return {"kind": "int", "low": dom.low, "high": dom.high}


def _domain_from(data: dict) -> Domain:
    if data["kind"] == "enum":
        return Domain("enum", values=tuple(data["values"]))
    if data["kind"] == "bool":
        return Domain("bool")
    return Domain("int", low=data["low"], high=data["high"])


def _stage_dict(ref: StageRef) -> dict:
    return {"machine": ref.machine, "stage": ref.kind.value}


def model_to_dict(model: Model) -> dict:
    """Canonical JSON object for a model (docs/schema/model.schema.json)."""
    return {
        "name": model.name,
        "model_hash": model_hash(model),
        "things": [{
            "id": t.id,
            "name": t.name,
            "manual": t.manual,
            "fields": [{"name": n, "domain": _domain_dict(d)}
                       for n, d in t.payload_fields],
        } for t in model.things],
        "machines": [{
            "id": m.id,
            "name": m.name,
            "parent": m.parent,
            "at_stage": m.at_stage.value if m.at_stage else None,
            "stages": [k.value for k in m.stages],
            "attributes": [{"name": a.name, "domain": _domain_dict(a.domain),
                            "initial": a.initial} for a in m.attributes],
            "residents": [{"thing": r.kind, "stage": r.stage.value,
                           "waiting": r.waiting} for r in m.residents],
            "processes": list(m.processes),
            "body": [_body_item_dict(item) for item in m.body],
        } for m in model.machines],
        "edges": [{
            "id": e.id,
            "kind": e.kind,
            "source": _stage_dict(e.source),
            "target": _stage_dict(e.target),
            "carries": e.carries,
            "guard": None if e.guard is None else {
                "subject": e.guard.subject,
                "operator": e.guard.operator,
                "literal": e.guard.literal,
            },
            "named": e.named,
            "container": e.container,
        } for e in model.edges],
        "events": [{
            "id": ev.id,
            "label": ev.label,
            "region": list(ev.declared_refs),
            "anchor": ev.anchor_ref,
        } for ev in model.events],
        "behavior": None if model.behavior is None else {
            "nodes": list(model.behavior.nodes),
            "arcs": [{"src": a.src, "dst": a.dst, "loop": a.loop}
                     for a in model.behavior.arcs],
        },
        "top_order": [[kind, ident] for kind, ident in model.top_order],
    }


def _body_item_dict(item) -> list:
    tag = item[0]
    if tag == "stages":
        return ["stages", [k.value for k in item[1]]]
    if tag == "attr":
        return ["attr", item[1].name]
    if tag == "resident":
        return ["resident", {"thing": item[1].kind, "stage": item[1].stage.value,
                             "waiting": item[1].waiting}]
    if tag == "processes":
        return ["processes", list(item[1])]
    return [tag, item[1]]     # machine / edge reference


def to_json(model: Model) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def model_from_dict(data: dict) -> Model:
    """Rebuild a model from its canonical JSON object."""
    model = Model(name=data["name"])
    for t in data["things"]:
        model.things.append(ThingKind(
            id=t["id"], name=t["name"], manual=t["manual"],
            payload_fields=[(f["name"], _domain_from(f["domain"]))
                            for f in t["fields"]]))
    attr_by_machine: dict[str, dict[str, Attribute]] = {}
    for m in data["machines"]:
        machine = Machine(
            id=m["id"], name=m["name"], parent=m["parent"],
            stages=[StageKind(s) for s in m["stages"]],
            at_stage=StageKind(m["at_stage"]) if m["at_stage"] else None,
            attributes=[Attribute(a["name"], _domain_from(a["domain"]), a["initial"])
                        for a in m["attributes"]],
            residents=[Resident(r["thing"], StageKind(r["stage"]), r["waiting"])
                       for r in m["residents"]],
            processes=list(m["processes"]))
        attr_by_machine[machine.id] = {a.name: a for a in machine.attributes}
        model.machines.append(machine)
    for m in data["machines"]:
        machine = model.machine(m["id"])
        for tag, payload in m["body"]:
            if tag == "stages":
                machine.body.append(("stages", tuple(StageKind(s) for s in payload)))
            elif tag == "attr":
                machine.body.append(("attr", attr_by_machine[machine.id][payload]))
            elif tag == "resident":
                res = next(r for r in machine.residents
                           if r.kind == payload["thing"]
                           and r.stage.value == payload["stage"]
                           and r.waiting == payload["waiting"])
                machine.body.append(("resident", res))
            elif tag == "processes":
                machine.body.append(("processes", tuple(payload)))
            else:
                machine.body.append((tag, payload))
    for e in data["edges"]:
        guard = None
        if e["guard"] is not None:
            guard = Guard(e["guard"]["subject"], e["guard"]["operator"],
                          e["guard"]["literal"])
        model.edges.append(Edge(
            id=e["id"],
            source=StageRef(e["source"]["machine"], StageKind(e["source"]["stage"])),
            target=StageRef(e["target"]["machine"], StageKind(e["target"]["stage"])),
            kind=e["kind"], carries=e["carries"], guard=guard,
            named=e["named"], container=e["container"]))
    for ev in data["events"]:
        model.events.append(Event(ev["id"], ev["label"], list(ev["region"]),
                                  ev["anchor"]))
    if data["behavior"] is not None:
        model.behavior = BehaviorGraph(
            nodes=list(data["behavior"]["nodes"]),
            arcs=[Arc(a["src"], a["dst"], a["loop"])
                  for a in data["behavior"]["arcs"]])
    model.top_order = [(kind, ident) for kind, ident in data["top_order"]]
    return model


def model_from_json(text: str) -> Model:
    return model_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# JSON forms for traces, reports and logs
# ---------------------------------------------------------------------------

def trace_to_dict(trace: EventTrace, model: Model | None = None) -> dict:
    labels = {}
    if model is not None:
        labels = {ev.id: ev.label for ev in model.events}
    return {"occurrences": [{
        "event": o.event,
        "label": labels.get(o.event, o.event),
        "time": o.time,
        "step": o.step,
    } for o in trace.occurrences]}


def conformance_to_dict(report: ConformanceReport) -> dict:
    return {"conformant": report.conformant,
            "violations": [{"position": v.position, "event": v.event,
                            "missing": v.missing} for v in report.violations]}


def steplog_to_json(log) -> str:
    return json.dumps(log.to_dict(), indent=2) + "\n"


def anomalies_to_dict(anomalies, model: Model) -> dict:
    return {"anomalies": [a.to_dict(model) for a in anomalies]}
