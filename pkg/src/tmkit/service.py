"""HTTP/JSON session service: a loaded model becomes a navigable space.

Clients create sessions, poll the current view, click stages, flip device
attributes, answer pending choices, and read traces/anomalies.  The service
adds no semantics of its own: every action is delegated to the simulator,
so a session's step log is identical to driving the simulator directly.
"""

from __future__ import annotations

import json
import re
import sys
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import TmError
from .model import Machine, Model, StageKind, StageRef
from .printer import canonical_attr_path, canonical_stage_path
from .model import AttrRef
from .render import anomalies_to_dict, model_to_dict, trace_to_dict
from .scenario import CLICK, INJECT, SET, Action, Scenario, parse_scenario
from .sim import (
    DEFAULT_ANOMALY_WINDOW,
    SimState,
    detect_transfer_without_receive,
    new_session,
    run,
)
from .behavior import extract_events

DEFAULT_SESSION_CAP = 64
DEFAULT_RUN_BUDGET = 10_000

_HTTP_STATUS = {
    "E_NOT_ENABLED": 409,
    "E_DOMAIN": 422,
    "E_NOPATH": 422,
    "E_AMBIG": 422,
    "E_CHOICE_NEEDED": 422,
    "E_NO_RESIDENT": 422,
    "E_PARSE": 422,
}


@dataclass
class Session:
    id: str
    state: SimState
    lock: threading.Lock
    created_at: float          # wall clock, service log only


def build_view(state: SimState, session_id: str) -> dict:
    """What the user currently sees: focus machine, stages, device cards."""
    model = state.model
    nav = state.navigation_token()
    if nav is not None:
        focus = model.machine(nav.location.machine)
        focus_stage = nav.location.kind
    else:
        focus = model.roots()[0]
        focus_stage = None

    visible: list[dict] = []
    for m in [focus] + model.children(focus.id):
        for kind in m.stages:
            ref = StageRef(m.id, kind)
            visible.append({
                "machine": m.id,
                "stage": kind.value,
                "path": canonical_stage_path(model, ref),
                "label": f"{m.name}.{kind.display}",
                "enabled": state.click_enabled(ref),
            })

    def card(m: Machine) -> dict:
        return {
            "machine": m.id,
            "name": m.name,
            "attributes": [{
                "name": a.name,
                "path": canonical_attr_path(model, AttrRef(m.id, a.name)),
                "value": state.attrs[f"{m.id}.{a.name}"],
                "domain": a.domain.kind,
                "options": [v for v in a.domain.members()],
            } for a in m.attributes],
        }

    cards = []
    if focus.attributes:
        cards.append(card(focus))
    for child in model.children(focus.id):
        if child.at_stage is None or child.at_stage is focus_stage:
            cards.append(card(child))

    pending = None
    if state.pending_choice is not None:
        pending = {"label": state.pending_choice.label,
                   "options": list(state.pending_choice.options)}

    return {
        "session_id": session_id,
        "focus": focus.id,
        "focus_name": focus.name,
        "focus_stage": focus_stage.value if focus_stage else None,
        "visible_stages": visible,
        "submachines": cards,
        "available_processes": list(focus.processes)
            if focus_stage is StageKind.PROCESS else [],
        "pending_choice": pending,
    }


class TmService:
    """Transport-independent request dispatch; the HTTP handler is a shim."""

    def __init__(self, model: Model, scenario_dir: Path | None = None,
                 session_cap: int = DEFAULT_SESSION_CAP):
        self.model = model
        self.scenario_dir = scenario_dir
        self.session_cap = session_cap
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._model_json = json.dumps(model_to_dict(model), indent=2) + "\n"

    # -- dispatch ------------------------------------------------------------

    def handle(self, method: str, path: str, query: dict, body: dict | None) \
            -> tuple[int, object]:
        if method == "GET" and path == "/model":
            return 200, _Raw(self._model_json)
        if method == "POST" and path == "/sessions":
            return self.create_session(body or {})
        m = re.fullmatch(r"/sessions/([^/]+)/(view|action|trace|anomalies|log)", path)
        if m:
            session = self.sessions.get(m.group(1))
            if session is None:
                return 404, {"code": "E_SESSION", "message": f"unknown session {m.group(1)!r}"}
            with session.lock:
                return self._session_request(session, method, m.group(2), query, body)
        return 404, {"code": "E_ROUTE", "message": f"no route for {method} {path}"}

    def _session_request(self, session: Session, method: str, leaf: str,
                         query: dict, body: dict | None) -> tuple[int, object]:
        state = session.state
        if method == "GET" and leaf == "view":
            return 200, build_view(state, session.id)
        if method == "GET" and leaf == "trace":
            trace = extract_events(state.log(), self.model)
            return 200, trace_to_dict(trace, self.model)
        if method == "GET" and leaf == "anomalies":
            raw = query.get("window", str(DEFAULT_ANOMALY_WINDOW))
            try:
                window = int(raw)
            except ValueError:
                return 422, {"code": "E_DOMAIN", "message": f"bad window {raw!r}"}
            try:
                anomalies = detect_transfer_without_receive(state.log(), window)
            except TmError as err:
                return _HTTP_STATUS.get(err.code, 422), \
                    {"code": err.code, "message": err.message}
            return 200, anomalies_to_dict(anomalies, self.model)
        if method == "POST" and leaf == "action":
            return self._do_action(session, body or {})
        return 404, {"code": "E_ROUTE", "message": f"no route for {method} /{leaf}"}

    def create_session(self, body: dict) -> tuple[int, object]:
        scenario = Scenario()
        name = body.get("scenario")
        if name:
            if self.scenario_dir is None:
                return 422, {"code": "E_NOPATH", "message": "service has no scenario directory"}
            path = self.scenario_dir / f"{name}.scenario"
            if not path.exists():
                return 422, {"code": "E_NOPATH", "message": f"unknown scenario {name!r}"}
            scenario = parse_scenario(path.read_text(encoding="utf-8"), str(path))
        with self._lock:
            if len(self.sessions) >= self.session_cap:
                return 503, {"code": "E_CAP",
                             "message": f"session cap {self.session_cap} reached"}
            self._counter += 1
            session_id = f"s{self._counter}"
            state = new_session(self.model, scenario)
            session = Session(session_id, state, threading.Lock(), time.time())
            self.sessions[session_id] = session
        with session.lock:
            if name:
                run(state, DEFAULT_RUN_BUDGET)
            return 200, {"session_id": session_id}

    def _do_action(self, session: Session, body: dict) -> tuple[int, object]:
        state = session.state
        try:
            if "click_stage" in body:
                state.apply_action(Action(CLICK, path=str(body["click_stage"])))
            elif "set_attribute" in body:
                if "value" not in body:
                    return 422, {"code": "E_PARSE", "message": "set_attribute needs a value"}
                state.apply_action(Action(SET, path=str(body["set_attribute"]),
                                          value=_raw_value(body["value"])))
            elif "inject" in body:
                state.apply_action(Action(INJECT, thing=str(body["inject"]),
                                          path=str(body.get("at", ""))))
            elif "choose" in body:
                state.supply_choice(_raw_value(body["choose"]))
                run(state, DEFAULT_RUN_BUDGET)
            else:
                return 422, {"code": "E_PARSE",
                             "message": "action must be click_stage, set_attribute, "
                                        "inject or choose"}
        except TmError as err:
            return _HTTP_STATUS.get(err.code, 422), \
                {"code": err.code, "message": err.message}
        return 200, build_view(state, session.id)


def _raw_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


class _Raw(str):
    """Pre-serialized JSON body (keeps GET /model byte-identical)."""


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
}


def make_server(service: TmService, host: str = "127.0.0.1", port: int = 8080,
                static_dir: Path | None = None, quiet: bool = False) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self, method: str) -> None:
            path, _, query_text = self.path.partition("?")
            query = {}
            for part in query_text.split("&"):
                if "=" in part:
                    k, v = part.split("=", 1)
                    query[k] = v
            body = None
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                try:
                    body = json.loads(self.rfile.read(length).decode("utf-8"))
                except (ValueError, UnicodeDecodeError):
                    self._send(400, {"code": "E_PARSE", "message": "bad JSON body"})
                    return
            if method == "GET" and static_dir is not None \
                    and not path.startswith(("/model", "/sessions")):
                if self._static(path):
                    return
            status, payload = service.handle(method, path, query, body)
            self._send(status, payload)

        def _static(self, path: str) -> bool:
            name = "index.html" if path in ("/", "") else path.lstrip("/")
            target = (static_dir / name).resolve()
            if not str(target).startswith(str(static_dir.resolve())) \
                    or not target.is_file():
                return False
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type",
                             _CONTENT_TYPES.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return True

        def _send(self, status: int, payload: object) -> None:
            if isinstance(payload, _Raw):
                data = str(payload).encode("utf-8")
            else:
                data = (json.dumps(payload, indent=2) + "\n").encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def log_message(self, fmt, *args):
            if not quiet:
                sys.stderr.write(f"{self.log_date_time_string()} "
                                 f"{self.address_string()} {fmt % args}\n")

    return ThreadingHTTPServer((host, port), Handler)
