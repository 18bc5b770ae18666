"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -s`` to see the criterion lines.
"""

import itertools
import json
import random
import threading
import time
import urllib.error
import urllib.request

import pytest

from tmkit.behavior import Arc, BehaviorGraph, EventOccurrence, EventTrace, conforms, extract_events
from tmkit.model import StageKind, adjacency_allowed, validate
from tmkit.parser import parse
from tmkit.printer import serialize
from tmkit.render import steplog_to_json, to_dot, to_json
from tmkit.scenario import CLICK, SET, Action, Scenario
from tmkit.service import TmService, make_server
from tmkit.sim import detect_transfer_without_receive, new_session, run

from conftest import MODELS, load_model, load_scenario
from genmodels import random_model_text

LEGAL_TRIPLES = {
    ("create", "process", True), ("create", "release", True),
    ("receive", "process", True), ("receive", "release", True),
    ("process", "create", True), ("process", "release", True),
    ("release", "transfer", True), ("transfer", "receive", True),
    ("transfer", "transfer", False),
}
KINDS = [k.value for k in StageKind]


def report(n: int, title: str):
    print(f"PASS  criterion {n}: {title}")


# ---------------------------------------------------------------------------

def test_criterion_1_adjacency_oracle():
    started = time.monotonic()
    checked = 0
    for src, dst, same in itertools.product(KINDS, KINDS, (True, False)):
        if same:
            stages = src if src == dst else f"{src}, {dst}"
            text = (f"model probe machine A {{ stages {stages}; }} "
                    f"flow A.{src} -> A.{dst};")
        else:
            text = (f"model probe machine R {{ machine A {{ stages {src}; }} "
                    f"machine B {{ stages {dst}; }} }} flow A.{src} -> B.{dst};")
        codes = {d.code for d in validate(parse(text)) if d.severity == "error"}
        legal = (src, dst, same) in LEGAL_TRIPLES
        assert adjacency_allowed(StageKind(src), StageKind(dst), same) == legal
        if legal:
            assert not codes & {"E_ADJ", "E_BOUNDARY"}, (src, dst, same)
        else:
            expected = "E_ADJ" if same else "E_BOUNDARY"
            assert codes & {"E_ADJ", "E_BOUNDARY"} == {expected}, (src, dst, same)
        checked += 1
    elapsed = time.monotonic() - started
    assert checked == 50 and sum(1 for t in LEGAL_TRIPLES) == 9
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report(1, f"all 50 adjacency triples match the 9-entry table ({elapsed:.2f}s)")


# ten single-edit corpus mutations and the exact diagnostic each must produce
MUTATIONS = [
    ("login_shapes", "flow System.receive -> System.process carries request as req_check;",
     "flow System.receive -> System.process carries request as req_check;\n"
     "  flow System.receive -> System.create carries request;", "E_ADJ"),
    ("login_shapes", "flow User.transfer -> System.transfer carries request as req_cross;",
     "flow User.release -> System.receive carries request as req_cross;", "E_BOUNDARY"),
    ("digital_home", "resident visitor at transfer;",
     "resident visitor at transfer;\n  resident ghost at transfer;", "E_NOPATH"),
    ("digital_home", '[Bathroom.door = "open"]', '[Bathroom.door = "ajar"]',
     "E_GUARD_TYPE"),
    ("digital_home", "region { leave_bed, Bedroom.release } anchor leave_bed;",
     "region { } anchor leave_bed;", "E_REGION_EMPTY"),
    ("digital_home", "region { leave_bed, Bedroom.release } anchor leave_bed;",
     "region { leave_bed, Bedroom.release } anchor hall_exit;", "E_ANCHOR"),
    ("digital_home", "machine Camera at receive {",
     "machine Light at receive {", "E_AMBIG"),
    ("digital_home", "BathroomTransfer -> BathroomReceive;",
     "BathroomTransfer -> BathroomReceived;", "E_NOPATH"),
    ("login_shapes", "E8 -> E4 loop;", "E8 -> E4;", "E_CYCLE"),
    ("login_shapes", "trigger System.process ~> System.release [approved = true] carries menu as approve;",
     "trigger System.transfer ~> System.release [approved = true] carries menu as approve;",
     "W_TRIG_SRC"),
]


def test_criterion_2_corpus_validity_and_mutations():
    started = time.monotonic()
    texts = {name: (MODELS / f"{name}.tm").read_text(encoding="utf-8")
             for name in ("login_shapes", "digital_home")}
    for name, text in texts.items():
        diags = validate(parse(text))
        assert [d for d in diags if d.severity == "error"] == [], name
    assert len(MUTATIONS) == 10
    for name, old, new, expected in MUTATIONS:
        source = texts[name]
        assert source.count(old) == 1, (name, old)
        mutated = source.replace(old, new)
        codes = {d.code for d in validate(parse(mutated))}
        assert codes == {expected}, (name, expected, codes)
    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report(2, f"corpus valid; 10 mutations hit their exact codes ({elapsed:.2f}s)")


def test_criterion_3_roundtrip_corpus_and_generated():
    texts = [(MODELS / f"{n}.tm").read_text(encoding="utf-8")
             for n in ("login_shapes", "digital_home")]
    texts += [random_model_text(seed) for seed in range(200)]
    for text in texts:
        model = parse(text)
        once = serialize(model)
        again = parse(once)
        assert again == model
        assert serialize(again) == once
    report(3, f"{len(texts)} models round-trip with a byte-level fixpoint")


EXPECTED_TRACES = {
    "circle_center": ["E1", "E2", "E3", "E4", "E5", "E8"],
    "circle_rubber_band": ["E1", "E2", "E3", "E4", "E6", "E9"],
    "circle_circumference": ["E1", "E2", "E3", "E4", "E7"],
}


def test_criterion_4_fig3_fig5_reproduction():
    started = time.monotonic()
    login = load_model("login_shapes")
    for scenario_name, expected in EXPECTED_TRACES.items():
        state = new_session(login, load_scenario(scenario_name))
        trace = extract_events(run(state, 1000), login)
        assert trace.event_ids() == expected, scenario_name
        assert conforms(trace, login.behavior).conformant, scenario_name
    reordered = EventTrace([EventOccurrence("E2", 0, 0), EventOccurrence("E1", 1, 1)])
    verdict = conforms(reordered, login.behavior)
    assert len(verdict.violations) == 1
    v = verdict.violations[0]
    assert (v.position, v.event, v.missing) == (0, "E2", "E1")
    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report(4, f"three click scenarios reproduce the event list; [E2,E1] fails "
              f"with one violation ({elapsed:.2f}s)")


def test_criterion_5_elder_anomaly():
    started = time.monotonic()
    home = load_model("digital_home")
    state = new_session(home, load_scenario("elder_fall"))
    log = run(state, 1000)
    anomalies = detect_transfer_without_receive(log, 10)
    assert len(anomalies) == 1
    assert anomalies[0].rule == "TRANSFER_WITHOUT_RECEIVE"
    assert anomalies[0].expected.display(home) == "Bathroom.Receive"
    labels = [home.event(o.event).label
              for o in extract_events(log, home).occurrences]
    assert "Hall.Release" in labels and "Hall.Transfer" in labels
    control = new_session(home, load_scenario("elder_ok"))
    assert detect_transfer_without_receive(run(control, 1000), 10) == []
    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report(5, f"elder_fall yields exactly the Bathroom.Receive anomaly; "
              f"elder_ok yields none ({elapsed:.2f}s)")


ALL_SCENARIOS = [("login_shapes", "circle_center"),
                 ("login_shapes", "circle_rubber_band"),
                 ("login_shapes", "circle_circumference"),
                 ("digital_home", "elder_fall"),
                 ("digital_home", "elder_ok")]


def test_criterion_6_determinism():
    models = {name: load_model(name) for name in ("login_shapes", "digital_home")}
    for model_name, scenario_name in ALL_SCENARIOS:
        model = models[model_name]
        logs = set()
        for _ in range(5):
            state = new_session(model, load_scenario(scenario_name))
            logs.add(steplog_to_json(run(state, 1000)))
        assert len(logs) == 1, scenario_name
    for model in models.values():
        assert len({to_dot(model) for _ in range(5)}) == 1
        assert len({to_json(model) for _ in range(5)}) == 1
    report(6, "5 repeated runs per scenario and 5 renders are byte-identical")


def test_criterion_7_conformance_oracle_equivalence():
    started = time.monotonic()
    rng = random.Random(20240917)
    cases = 0
    while cases < 10_000:
        n = rng.randint(1, 10)
        events = [f"E{i}" for i in range(n)]
        arcs = [Arc(events[i], events[j])
                for i in range(n) for j in range(i + 1, n) if rng.random() < 0.25]
        graph = BehaviorGraph(nodes=list(events), arcs=arcs)
        ids = [rng.choice(events) for _ in range(rng.randint(0, 12))]
        trace = EventTrace([EventOccurrence(e, t, t) for t, e in enumerate(ids)])
        got = [(v.position, v.event, v.missing)
               for v in conforms(trace, graph).violations]
        expected = []
        for i, event in enumerate(ids):
            prefix = set(ids[:i])
            for arc in graph.arcs:
                if not arc.loop and arc.dst == event and arc.src not in prefix:
                    expected.append((i, event, arc.src))
        assert got == expected
        cases += 1
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    report(7, f"conforms matches the exhaustive checker on {cases} cases "
              f"({elapsed:.2f}s)")


def test_criterion_8_service_simulator_equivalence():
    model = load_model("digital_home")
    service = TmService(model)
    server = make_server(service, "127.0.0.1", 0, quiet=True)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_port}"

    def call(method, path, body=None):
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(base + path, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read())

    try:
        _, body = call("POST", "/sessions", {})
        sid = body["session_id"]
        status, _ = call("POST", f"/sessions/{sid}/action",
                         {"click_stage": "Entrance.Transfer"})
        assert status == 200
        _, view_before = call("GET", f"/sessions/{sid}/view")
        status, err = call("POST", f"/sessions/{sid}/action",
                           {"click_stage": "Entrance.Receive"})
        assert status == 409 and err["code"] == "E_NOT_ENABLED"
        _, view_after = call("GET", f"/sessions/{sid}/view")
        assert view_after == view_before          # the 409 changed nothing
        call("POST", f"/sessions/{sid}/action",
             {"set_attribute": "Door.state", "value": "open"})
        status, _ = call("POST", f"/sessions/{sid}/action",
                         {"click_stage": "Entrance.Receive"})
        assert status == 200
        status, _ = call("POST", f"/sessions/{sid}/action",
                         {"click_stage": "Entrance.Process"})
        assert status == 200
        via_http = steplog_to_json(service.sessions[sid].state.log())
    finally:
        server.shutdown()
        server.server_close()

    state = new_session(model, Scenario())
    state.apply_action(Action(CLICK, path="Entrance.Transfer"))
    with pytest.raises(Exception):
        state.apply_action(Action(CLICK, path="Entrance.Receive"))
    state.apply_action(Action(SET, path="Door.state", value="open"))
    state.apply_action(Action(CLICK, path="Entrance.Receive"))
    state.apply_action(Action(CLICK, path="Entrance.Process"))
    assert steplog_to_json(state.log()) == via_http
    report(8, "HTTP replay equals driving the simulator directly; "
              "closed-door click is a state-preserving 409")
